#include <doctest.h>

#include <cmath>
#include <map>

#include "bayesdiff/dataset.hpp"
#include "bayesdiff/model.hpp"
#include "bayesdiff/params.hpp"
#include "bayesdiff/transition.hpp"

using namespace bayesdiff;

TEST_CASE("affiliation decay") {
    CHECK(affiliation(1.0, 0.0) == 0.0);
    CHECK(affiliation(0.5, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(affiliation(1e-9, 1.0) == doctest::Approx(1.0).epsilon(1e-6));
    // calibration at default simulation scale: mean gap, default range
    double r0 = affiliation(1.0 / 499.0, 0.004);
    CHECK(r0 >= 0.60);
    CHECK(r0 <= 0.61);
    CHECK_THROWS_AS(affiliation(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(affiliation(-1.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(affiliation(1.0, -0.1), std::domain_error);
}

TEST_CASE("state mass function") {
    double rho = 0.3, gamma = 0.8;
    auto q1 = state_mass(1, rho, gamma);
    auto q2 = state_mass(2, rho, gamma);
    CHECK(q1.p1 == doctest::Approx(0.7 + 0.3 * 0.8).epsilon(1e-15));
    CHECK(q2.p1 == doctest::Approx(0.7 - 0.7 * 0.8).epsilon(1e-15));
    CHECK(q1.p1 + q1.p2 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(q2.p1 + q2.p2 == doctest::Approx(1.0).epsilon(1e-15));
    // full purity: group determines state
    CHECK(state_mass(1, rho, 1.0).p1 == doctest::Approx(1.0));
    CHECK(state_mass(2, rho, 1.0).p2 == doctest::Approx(1.0));
    CHECK_THROWS_AS(state_mass(3, rho, gamma), std::domain_error);
    CHECK_THROWS_AS(state_mass(1, 0.0, gamma), std::domain_error);
    CHECK_THROWS_AS(state_mass(1, rho, 1.5), std::domain_error);
}

TEST_CASE("first-probe group distribution") {
    auto f0 = first_group_mass(0.25);
    CHECK(f0.p1 == doctest::Approx(0.75));
    CHECK(f0.p2 == doctest::Approx(0.25));
}

TEST_CASE("distance-dependent group mass function") {
    double rho = 0.3, gamma = 0.8, r = 0.4;
    auto f1 = group_mass(1, r, rho, gamma);
    auto f2 = group_mass(2, r, rho, gamma);
    CHECK(f1.p1 == doctest::Approx(0.7 + 0.3 * r / gamma).epsilon(1e-15));
    CHECK(f2.p1 == doctest::Approx(0.7 - 0.7 * r / gamma).epsilon(1e-15));
    CHECK(f1.p1 + f1.p2 == doctest::Approx(1.0).epsilon(1e-15));
    // zero affiliation: no serial effect
    auto f0 = group_mass(2, 0.0, rho, gamma);
    CHECK(f0.p1 == doctest::Approx(1.0 - rho));
    CHECK_THROWS_AS(group_mass(1, 0.8, rho, 0.8), std::invalid_argument);
    CHECK_THROWS_AS(group_mass(1, 0.9, rho, 0.8), std::invalid_argument);
}

TEST_CASE("persistence identity over random parameters") {
    Rng rng(42);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int k = 0; k < 10000; ++k) {
        double rho = 0.01 + 0.98 * unif(rng);
        double gamma = 0.01 + 0.99 * unif(rng);
        double r = gamma * 0.999 * unif(rng);  // keep r < gamma
        for (int s = 1; s <= 2; ++s) {
            auto f = group_mass(s, r, rho, gamma);
            double total = f.p1 * (s == 1 ? state_mass(1, rho, gamma).p1 : state_mass(1, rho, gamma).p2) +
                           f.p2 * (s == 1 ? state_mass(2, rho, gamma).p1 : state_mass(2, rho, gamma).p2);
            CHECK(std::abs(total - persistence_prob(s, r, rho)) < 1e-12);
        }
    }
}

TEST_CASE("stick-breaking weights") {
    Rng rng(7);
    for (int k = 0; k < 50; ++k) {
        auto w = stick_weights(0.3, 2.0, 20, rng);
        double total = 0.0;
        for (double x : w) {
            CHECK(x >= 0.0);
            total += x;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    // DP case: E[w_1] = 1/(1+alpha)
    double alpha = 3.0, mean = 0.0;
    int reps = 20000;
    for (int k = 0; k < reps; ++k) mean += stick_weights(0.0, alpha, 10, rng)[0];
    mean /= reps;
    CHECK(mean == doctest::Approx(1.0 / (1.0 + alpha)).epsilon(0.03));
    CHECK_THROWS_AS(stick_weights(1.0, 1.0, 5, rng), std::domain_error);
}

TEST_CASE("atom state classification") {
    CHECK(atom_state(std::vector<double>{1.0, 1.0, 1.0}) == 1);
    CHECK(atom_state(std::vector<double>{1.0, 1.0, 1.0 + 1e-15}) == 2);
    CHECK(atom_state(std::vector<double>{0.0}) == 1);
    CHECK_THROWS_AS(atom_state(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("pool atom draws") {
    Rng rng(11);
    PsiPool pool;
    pool.value = {-1.0, 2.0};
    pool.weight = {0.6, 0.4};
    pool.stick = {0.6, 1.0};

    auto a1 = sample_nondiff_atom(pool, 4, rng);
    CHECK(a1.state == 1);
    CHECK(a1.value.size() == 4);
    for (double v : a1.value) CHECK(v == a1.value[0]);

    // differential draws: both mixed tuples, never all-equal
    std::map<std::pair<double, double>, int> counts;
    int reps = 20000;
    for (int k = 0; k < reps; ++k) {
        auto a2 = sample_diff_atom(pool, 2, rng);
        CHECK(a2.state == 2);
        CHECK(a2.value[0] != a2.value[1]);
        counts[{a2.value[0], a2.value[1]}] += 1;
    }
    // P[(-1,2)] = P[(2,-1)] = 0.24/0.48 = 0.5
    CHECK(counts.size() == 2);
    CHECK(std::abs(counts.begin()->second / double(reps) - 0.5) < 0.02);

    PsiPool degenerate;
    degenerate.value = {1.0, 1.0};
    degenerate.weight = {0.5, 0.5};
    degenerate.stick = {0.5, 1.0};
    CHECK_THROWS_AS(sample_diff_atom(degenerate, 2, rng), std::runtime_error);
}

TEST_CASE("prior pool construction") {
    Rng rng(5);
    auto pool = prior_pool(50, 2.0, 0.5, 2.0, rng);
    pool.validate();
    CHECK(pool.size() == 50);
    CHECK(pool.positive_support() == 50);
}

TEST_CASE("parameter validation") {
    ModelHyperParams par;
    CHECK_NOTHROW(par.validate());
    CHECK(eta_upper_limit(1.0) == std::numeric_limits<double>::infinity());
    CHECK(eta_upper_limit(0.9) == doctest::Approx(-1.0 / std::log(0.9)).epsilon(1e-15));
    par.eta = eta_upper_limit(par.gamma) * 1.01;
    CHECK_THROWS_AS(par.validate(), std::domain_error);
    par = ModelHyperParams{};
    par.d1 = 0.1;
    CHECK_THROWS_AS(par.validate(), std::domain_error);
    par = ModelHyperParams{};
    par.d2 = 1.0;
    CHECK_THROWS_AS(par.validate(), std::domain_error);
    par = ModelHyperParams{};
    par.rho = 1.0;
    CHECK_THROWS_AS(par.validate(), std::domain_error);
}

TEST_CASE("measurement transforms") {
    Matrix x(2, 2);
    x(0, 0) = 0.5;
    x(0, 1) = 0.25;
    x(1, 0) = 0.75;
    x(1, 1) = 0.1;
    auto z = apply_transform(x, Transform::logit);
    CHECK(z(0, 0) == doctest::Approx(0.0));
    auto back = inverse_transform(z, Transform::logit);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::abs(back(i, j) - x(i, j)) < 1e-12);

    Matrix counts(1, 2);
    counts(0, 0) = 0.0;
    counts(0, 1) = 9.0;
    auto zc = apply_transform(counts, Transform::log1p);
    CHECK(zc(0, 0) == 0.0);
    auto backc = inverse_transform(zc, Transform::log1p);
    CHECK(std::abs(backc(0, 1) - 9.0) < 1e-12);

    Matrix bad(1, 2);
    bad(0, 0) = 0.5;
    bad(0, 1) = 1.5;
    try {
        apply_transform(bad, Transform::logit);
        CHECK(false);
    } catch (const std::domain_error& ex) {
        CHECK(std::string(ex.what()).find("(0,1)") != std::string::npos);
    }
    CHECK(transform_from_name("logit") == Transform::logit);
    CHECK_THROWS_AS(transform_from_name("sqrt"), std::domain_error);
}

TEST_CASE("dataset assembly and validation") {
    Matrix x(4, 3);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 3; ++j) x(i, j) = i + 0.1 * j;
    auto d = make_dataset(x, {1, 1, 2, 2}, {10.0, 30.0}, Transform::identity);
    CHECK(d.n() == 4);
    CHECK(d.p() == 3);
    CHECK(d.num_treatments == 2);
    CHECK(d.e[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(d.e[1] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(d.positions[2] == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(make_dataset(x, {1, 1, 3, 3}, {1.0, 1.0}, Transform::identity),
                    std::domain_error);  // treatment 2 missing
    CHECK_THROWS_AS(make_dataset(x, {1, 1, 2, 2}, {1.0, -1.0}, Transform::identity),
                    std::domain_error);
    Matrix bad = x;
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(make_dataset(bad, {1, 1, 2, 2}, {1.0, 1.0}, Transform::identity),
                    std::domain_error);
}

TEST_CASE("distance scaling") {
    auto e = scale_distances({2.0, 3.0, 5.0});
    CHECK(e[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(e[2] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(scale_distances({1.0, 0.0}), std::domain_error);
}
