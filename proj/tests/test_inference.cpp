#include <doctest.h>

#include <cmath>
#include <random>

#include "bayesdiff/inference.hpp"

using namespace bayesdiff;

namespace {

Trace toy_trace(int p, int T, const std::vector<std::vector<int>>& states) {
    Trace tr;
    tr.p = p;
    tr.T = T;
    tr.theta_sum.assign(static_cast<std::size_t>(p) * T, 0.0);
    tr.s2_count.assign(p, 0);
    for (std::size_t k = 0; k < states.size(); ++k) {
        TraceRow row;
        row.iter = static_cast<int>(k);
        row.s.resize(p);
        for (int j = 0; j < p; ++j) row.s[j] = static_cast<std::uint8_t>(states[k][j]);
        row.p_eta_pos = 0.5;
        tr.rows.push_back(row);
        for (int j = 0; j < p; ++j)
            if (states[k][j] == 2) tr.s2_count[j] += 1;
    }
    return tr;
}

}  // namespace

TEST_CASE("posterior differential probabilities count state-2 visits") {
    Trace tr = toy_trace(3, 2, {{2, 1, 1}, {2, 2, 1}, {2, 1, 1}, {1, 2, 1}});
    auto omega = posterior_diff_prob(tr);
    CHECK(omega[0] == doctest::Approx(0.75));
    CHECK(omega[1] == doctest::Approx(0.5));
    CHECK(omega[2] == doctest::Approx(0.0));
    CHECK_THROWS_AS(posterior_diff_prob(Trace{}), std::logic_error);
}

TEST_CASE("Bayesian FDR selection on a worked example") {
    std::vector<double> omega{0.80, 0.99, 0.95};
    auto sel = bayes_fdr_select(omega, 0.05);
    REQUIRE(sel.order.size() == 3);
    CHECK(sel.order[0] == 1);
    CHECK(sel.order[1] == 2);
    CHECK(sel.order[2] == 0);
    CHECK(sel.fdr_curve[0] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(sel.fdr_curve[1] == doctest::Approx(0.03).epsilon(1e-12));
    CHECK(sel.fdr_curve[2] == doctest::Approx((0.01 + 0.05 + 0.20) / 3.0).epsilon(1e-12));
    CHECK(sel.b_star == 2);
    CHECK(sel.detected == std::vector<std::uint8_t>{0, 1, 1});

    // certainty everywhere: everything selected; total doubt: nothing
    auto all = bayes_fdr_select(std::vector<double>{1.0, 1.0}, 0.1);
    CHECK(all.b_star == 2);
    auto none = bayes_fdr_select(std::vector<double>{0.0, 0.1}, 0.1);
    CHECK(none.b_star == 0);
    CHECK(none.detected == std::vector<std::uint8_t>{0, 0});

    CHECK_THROWS_AS(bayes_fdr_select(omega, 0.0), std::domain_error);
    CHECK_THROWS_AS(bayes_fdr_select(std::vector<double>{1.2}, 0.1), std::domain_error);
}

TEST_CASE("FDR estimate at the cutoff stays below the target") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        int p = 1 + static_cast<int>(unif(rng) * 60);
        std::vector<double> omega(p);
        for (double& w : omega) w = unif(rng);
        auto sel = bayes_fdr_select(omega, 0.10);
        if (sel.b_star > 0) {
            CHECK(sel.fdr_curve[sel.b_star - 1] < 0.10);
            // maximality: every later cutoff fails
            for (int b = sel.b_star + 1; b <= p; ++b) CHECK(sel.fdr_curve[b - 1] >= 0.10);
        } else {
            for (int b = 1; b <= p; ++b) CHECK(sel.fdr_curve[b - 1] >= 0.10);
        }
        int count = 0;
        for (auto d : sel.detected) count += d;
        CHECK(count == sel.b_star);
    }
}

TEST_CASE("FDR ordering breaks ties by original index") {
    std::vector<double> omega{0.9, 0.95, 0.9, 0.95};
    auto sel = bayes_fdr_select(omega, 0.2);
    CHECK(sel.order == std::vector<int>{1, 3, 0, 2});
}

TEST_CASE("log-Bayes-factor lower bound") {
    Trace tr = toy_trace(1, 2, {{1}, {1}, {1}, {1}});
    for (auto& r : tr.rows) r.p_eta_pos = 0.9;
    auto bf = logbf_lower_bound(tr);
    CHECK(bf.favored == EtaComponent::eta_positive);
    CHECK(bf.bound == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(bf.clipped == 0);

    for (auto& r : tr.rows) r.p_eta_pos = 0.1;  // mirrored odds favor the null
    auto bf2 = logbf_lower_bound(tr);
    CHECK(bf2.favored == EtaComponent::eta_zero);
    CHECK(bf2.bound == doctest::Approx(std::log(9.0)).epsilon(1e-12));

    for (auto& r : tr.rows) r.p_eta_pos = 0.5;
    auto bf3 = logbf_lower_bound(tr);
    CHECK(bf3.bound == doctest::Approx(0.0));

    for (auto& r : tr.rows) r.p_eta_pos = 0.0;  // degenerate conditionals get clipped
    auto bf4 = logbf_lower_bound(tr);
    CHECK(bf4.clipped == 4);
    CHECK(bf4.favored == EtaComponent::eta_zero);
    CHECK(std::isfinite(bf4.bound));

    tr.rows[0].p_eta_pos = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(logbf_lower_bound(tr), std::logic_error);
}

TEST_CASE("log-Bayes-factor batch interval covers the bound") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif(0.3, 0.9);
    Trace tr = toy_trace(1, 2, std::vector<std::vector<int>>(400, {1}));
    for (auto& r : tr.rows) r.p_eta_pos = unif(rng);
    auto bf = logbf_lower_bound(tr);
    CHECK(bf.batches == 20);
    CHECK(bf.batch_ci_lo <= bf.bound);
    CHECK(bf.batch_ci_hi >= bf.bound);
    CHECK(bf.batch_ci_hi > bf.batch_ci_lo);
}

TEST_CASE("conditional posterior means of treatment effects") {
    Trace tr = toy_trace(2, 2, {{2, 1}, {2, 1}, {1, 1}});
    tr.theta_sum = {3.0, 7.0, 0.0, 0.0};  // accumulated over the two state-2 visits of probe 0
    auto m = theta_posterior_mean(tr);
    CHECK(m(0, 0) == doctest::Approx(1.5));
    CHECK(m(0, 1) == doctest::Approx(3.5));
    CHECK(std::isnan(m(1, 0)));
    CHECK(std::isnan(m(1, 1)));
}

TEST_CASE("pairwise contrast selection") {
    auto c = pairwise_contrast(std::vector<double>{1.0, 1.0, 3.0, 1.0});
    CHECK(c.t_hi == 3);
    CHECK(c.t_lo == 1);
    CHECK(c.diff == doctest::Approx(2.0));
    CHECK_FALSE(c.degenerate);

    auto c2 = pairwise_contrast(std::vector<double>{0.0, 0.1, 0.2, 0.9});
    CHECK(c2.t_hi == 4);
    CHECK(c2.t_lo == 1);
    CHECK(c2.diff == doctest::Approx(0.9));

    // descending means flip the roles
    auto c3 = pairwise_contrast(std::vector<double>{2.0, 0.5});
    CHECK(c3.t_hi == 1);
    CHECK(c3.t_lo == 2);

    auto flat = pairwise_contrast(std::vector<double>{1.0, 1.0, 1.0});
    CHECK(flat.degenerate);
    CHECK(flat.diff == doctest::Approx(0.0));

    CHECK_THROWS_AS(pairwise_contrast(std::vector<double>{1.0}), std::domain_error);
}

TEST_CASE("posterior summary assembles the pieces consistently") {
    Trace tr = toy_trace(3, 2, {{2, 1, 2}, {2, 1, 2}, {2, 1, 1}, {2, 1, 2}});
    for (int j = 0; j < 3; ++j) {
        for (int t = 0; t < 2; ++t)
            tr.theta_sum[static_cast<std::size_t>(j) * 2 + t] = tr.s2_count[j] * (j + 0.5 * t);
    }
    auto ps = make_posterior_summary(tr, 0.10);
    CHECK(ps.omega[0] == doctest::Approx(1.0));
    CHECK(ps.omega[1] == doctest::Approx(0.0));
    CHECK(ps.fdr.detected[0] == 1);
    CHECK(ps.fdr.detected[1] == 0);
    for (int j = 0; j < 3; ++j) {
        if (!ps.fdr.detected[j]) continue;
        CHECK(ps.pairwise[j].t_hi == 2);  // theta rises with t for every probe here
        CHECK(ps.pairwise[j].diff == doctest::Approx(0.5));
    }
}
