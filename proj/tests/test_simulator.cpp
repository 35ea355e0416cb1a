#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "bayesdiff/simulate.hpp"

using namespace bayesdiff;

TEST_CASE("distance generation") {
    Rng rng(3);
    auto e = generate_distances(101, DistanceModel::uniform, rng);
    REQUIRE(e.size() == 100);
    for (double gp : e) CHECK(gp == doctest::Approx(0.01).epsilon(1e-14));

    auto e2 = generate_distances(500, DistanceModel::lognormal_mimic, rng);
    double total = 0.0;
    for (double gp : e2) total += gp;
    CHECK(std::abs(total - 1.0) < 1e-12);
    auto [mn, mx] = std::minmax_element(e2.begin(), e2.end());
    CHECK(*mx / *mn > 100.0);  // heavy-tailed spacing, regression-frozen scale

    const char* path = "test_gaps.tmp";
    {
        std::ofstream out(path);
        out << "1 2 3\n";
    }
    auto e3 = generate_distances(4, DistanceModel::from_file, rng, path);
    CHECK(e3[2] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK_THROWS_AS(generate_distances(10, DistanceModel::from_file, rng, path), input_error);
    CHECK_THROWS_AS(generate_distances(4, DistanceModel::from_file, rng, "no_such_file.tmp"),
                    input_error);
    std::remove(path);

    CHECK(distance_model_from_name("uniform") == DistanceModel::uniform);
    CHECK(distance_model_name(DistanceModel::lognormal_mimic) == "lognormal_mimic");
    CHECK_THROWS_AS(distance_model_from_name("weird"), std::domain_error);
}

TEST_CASE("affiliation validity enforcement") {
    double eta = 0.004, gamma = 0.9;
    std::vector<double> e{1e-6, 0.2, 0.3, 0.5 - 1e-6};
    auto fixed = enforce_affiliation_validity(e, eta, gamma);
    double total = 0.0;
    for (double gp : fixed) {
        CHECK(affiliation(gp, eta) < gamma);
        total += gp;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);

    // nothing to do when the chain has no serial dependence
    auto same = enforce_affiliation_validity(e, 0.0, gamma);
    CHECK(same == e);
}

TEST_CASE("simulated truth is internally consistent") {
    SimSpec spec;
    spec.p = 200;
    spec.T = 3;
    spec.reps_per_treatment = 2;
    spec.seed = 99;
    spec.H_G = 100;
    auto [data, truth] = simulate_dataset(spec);

    CHECK(data.p() == 200);
    CHECK(data.n() == 6);
    CHECK(data.num_treatments == 3);
    REQUIRE(truth.theta.rows == 200);
    std::map<int, std::vector<double>> rep;  // cluster label -> shared effect vector
    for (int j = 0; j < spec.p; ++j) {
        std::vector<double> row(truth.theta.row(j).begin(), truth.theta.row(j).end());
        CHECK(truth.s[j] == atom_state(row));
        CHECK((truth.g[j] == 1 || truth.g[j] == 2));
        auto [it, fresh] = rep.emplace(truth.cluster[j], row);
        if (!fresh) CHECK(it->second == row);
    }
    CHECK(truth.xi.size() == 6);
}

TEST_CASE("differential fraction matches the chain's stationary level") {
    // marginal P(s=2) is rho at every position when the chain starts from
    // P(g=2) = rho, independent of gamma and eta
    int reps = 100;
    double mean = 0.0;
    for (int k = 0; k < reps; ++k) {
        SimSpec spec;
        spec.seed = 1000 + k;
        auto truth = simulate_dataset(spec).second;
        int diff = 0;
        for (int sj : truth.s) diff += (sj == 2);
        mean += diff / static_cast<double>(spec.p);
    }
    mean /= reps;
    CHECK(std::abs(mean - 0.10) < 0.02);
}

TEST_CASE("state persistence matches the two-step transition identity") {
    // uniform gaps make the affiliation constant, so pooled persistence
    // frequencies have an exact Bernoulli reference
    double eta = 0.004, gamma = 0.9, rho = 0.25;
    int p = 501, reps = 200;
    double e = 1.0 / (p - 1);
    double r = affiliation(e, eta);
    REQUIRE(r < gamma);

    long stay[3] = {0, 0, 0}, from[3] = {0, 0, 0};
    for (int k = 0; k < reps; ++k) {
        SimSpec spec;
        spec.p = p;
        spec.T = 2;
        spec.reps_per_treatment = 1;
        spec.eta = eta;
        spec.gamma = gamma;
        spec.rho = rho;
        spec.distance_model = DistanceModel::uniform;
        spec.seed = 5000 + k;
        auto truth = simulate_dataset(spec).second;
        for (int j = 0; j + 1 < p; ++j) {
            int sj = truth.s[j];
            from[sj] += 1;
            if (truth.s[j + 1] == sj) stay[sj] += 1;
        }
    }
    for (int sj = 1; sj <= 2; ++sj) {
        double expect = persistence_prob(sj, r, rho);
        double freq = stay[sj] / static_cast<double>(from[sj]);
        double se = std::sqrt(expect * (1 - expect) / from[sj]);
        CHECK(std::abs(freq - expect) < 3 * se + 1e-4);
    }
}

TEST_CASE("zero serial dependence makes neighboring states independent") {
    long stay2 = 0, from2 = 0;
    for (int k = 0; k < 100; ++k) {
        SimSpec spec;
        spec.p = 500;
        spec.T = 2;
        spec.reps_per_treatment = 1;
        spec.eta = 0.0;
        spec.seed = 300 + k;
        auto truth = simulate_dataset(spec).second;
        for (int j = 0; j + 1 < spec.p; ++j) {
            if (truth.s[j] != 2) continue;
            from2 += 1;
            if (truth.s[j + 1] == 2) stay2 += 1;
        }
    }
    // conditional on a differential neighbor, still the marginal rate rho
    double freq = stay2 / static_cast<double>(from2);
    double se = std::sqrt(0.1 * 0.9 / from2);
    CHECK(std::abs(freq - 0.10) < 3 * se + 1e-3);
}

TEST_CASE("bounded-scale emission stays in the unit interval") {
    SimSpec spec;
    spec.p = 50;
    spec.T = 2;
    spec.reps_per_treatment = 2;
    spec.transform = Transform::logit;
    spec.seed = 8;
    auto [data, truth] = simulate_dataset(spec);
    CHECK(data.transform_kind == Transform::logit);
    for (int i = 0; i < data.n(); ++i)
        for (int j = 0; j < data.p(); ++j) {
            CHECK(data.x(i, j) > 0.0);
            CHECK(data.x(i, j) < 1.0);
        }
    // modeling scale is the logit of the observed scale
    CHECK(data.z(0, 0) == doctest::Approx(logit(data.x(0, 0))).epsilon(1e-10));
}

TEST_CASE("simulation specs validate their inputs") {
    SimSpec bad;
    bad.p = 1;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
    bad = SimSpec{};
    bad.rho = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
    bad = SimSpec{};
    bad.eta = 100.0;  // beyond the support allowed by gamma
    CHECK_THROWS_AS(bad.validate(), std::domain_error);
}
