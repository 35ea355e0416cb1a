#pragma once
// Posterior summarization: differential-probe probabilities, Bayesian FDR
// thresholding, the Jensen lower bound on the serial-dependence log-Bayes
// factor, and treatment-effect contrast reporting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bayesdiff/math.hpp"
#include "bayesdiff/mcmc.hpp"

namespace bayesdiff {

// omega_j = fraction of kept iterations with s_j = 2.
inline std::vector<double> posterior_diff_prob(const Trace& trace) {
    if (trace.empty()) throw std::logic_error("posterior_diff_prob: empty trace");
    std::vector<double> omega(trace.p, 0.0);
    for (const TraceRow& row : trace.rows)
        for (int j = 0; j < trace.p; ++j)
            if (row.s[j] == 2) omega[j] += 1.0;
    for (double& w : omega) w /= static_cast<double>(trace.rows.size());
    return omega;
}

struct FdrSelection {
    std::vector<int> order;          // probe indices sorted by omega desc, ties by index asc
    std::vector<double> fdr_curve;   // FDR-hat_b for b = 1..p, in sorted order
    int b_star = 0;                  // largest b with FDR-hat_b < q0, or 0
    std::vector<std::uint8_t> detected;  // per probe, original indexing
};

inline FdrSelection bayes_fdr_select(std::span<const double> omega, double q0) {
    if (!(q0 > 0.0 && q0 < 1.0)) throw std::domain_error("bayes_fdr_select: q0 outside (0,1)");
    for (double w : omega)
        if (!(w >= 0.0 && w <= 1.0)) throw std::domain_error("bayes_fdr_select: omega outside [0,1]");
    int p = static_cast<int>(omega.size());
    FdrSelection sel;
    sel.order.resize(p);
    std::iota(sel.order.begin(), sel.order.end(), 0);
    std::stable_sort(sel.order.begin(), sel.order.end(),
                     [&](int a, int b) { return omega[a] > omega[b]; });
    sel.fdr_curve.resize(p);
    double cum = 0.0;
    for (int b = 1; b <= p; ++b) {
        cum += 1.0 - omega[sel.order[b - 1]];
        double fdr = cum / b;
        sel.fdr_curve[b - 1] = fdr;
        if (fdr < q0) sel.b_star = b;
    }
    sel.detected.assign(p, 0);
    for (int b = 0; b < sel.b_star; ++b) sel.detected[sel.order[b]] = 1;
    return sel;
}

enum class EtaComponent { eta_zero, eta_positive };

struct LogBfBound {
    EtaComponent favored = EtaComponent::eta_zero;
    double bound = 0.0;       // Jensen lower bound on the log-Bayes factor
    long clipped = 0;         // conditionals pushed back inside [eps, 1-eps]
    double batch_ci_lo = 0.0;  // batch-means 95% interval for the bound
    double batch_ci_hi = 0.0;
    int batches = 0;
};

// Mean over kept iterations of the conditional log odds of {eta > 0}; its sign
// picks the favored component and the reported bound is the mean for that side.
inline LogBfBound logbf_lower_bound(const Trace& trace, double eps = 1e-12) {
    if (trace.empty()) throw std::logic_error("logbf_lower_bound: empty trace");
    std::vector<double> log_odds;
    log_odds.reserve(trace.rows.size());
    long clipped = 0;
    for (const TraceRow& row : trace.rows) {
        double p = row.p_eta_pos;
        if (std::isnan(p)) throw std::logic_error("logbf_lower_bound: trace lacks eta-component probabilities");
        if (p < eps) {
            p = eps;
            ++clipped;
        } else if (p > 1.0 - eps) {
            p = 1.0 - eps;
            ++clipped;
        }
        log_odds.push_back(std::log(p) - std::log1p(-p));
    }
    double mean = std::accumulate(log_odds.begin(), log_odds.end(), 0.0) /
                  static_cast<double>(log_odds.size());
    LogBfBound out;
    out.clipped = clipped;
    out.favored = mean >= 0.0 ? EtaComponent::eta_positive : EtaComponent::eta_zero;
    double sign = mean >= 0.0 ? 1.0 : -1.0;
    out.bound = sign * mean;
    // batch means on the signed series
    int M = static_cast<int>(log_odds.size());
    int nb = std::clamp(static_cast<int>(std::floor(std::sqrt(static_cast<double>(M)))), 1, 50);
    int len = M / nb;
    if (len >= 2 && nb >= 2) {
        std::vector<double> bm(nb, 0.0);
        for (int b = 0; b < nb; ++b) {
            for (int k = 0; k < len; ++k) bm[b] += sign * log_odds[b * len + k];
            bm[b] /= len;
        }
        double bmean = std::accumulate(bm.begin(), bm.end(), 0.0) / nb;
        double var = 0.0;
        for (double x : bm) var += (x - bmean) * (x - bmean);
        var /= (nb - 1);
        double se = std::sqrt(var / nb);
        out.batch_ci_lo = out.bound - 1.96 * se;
        out.batch_ci_hi = out.bound + 1.96 * se;
        out.batches = nb;
    } else {
        out.batch_ci_lo = out.batch_ci_hi = out.bound;
        out.batches = 1;
    }
    return out;
}

// Posterior mean treatment effects conditioned on the differential state; NaN
// for probes never visited in state 2.
inline Matrix theta_posterior_mean(const Trace& trace) {
    if (trace.empty()) throw std::logic_error("theta_posterior_mean: empty trace");
    Matrix m(trace.p, trace.T, std::numeric_limits<double>::quiet_NaN());
    for (int j = 0; j < trace.p; ++j) {
        if (trace.s2_count[j] == 0) continue;
        for (int t = 0; t < trace.T; ++t)
            m(j, t) = trace.theta_sum[static_cast<std::size_t>(j) * trace.T + t] / trace.s2_count[j];
    }
    return m;
}

struct PairwiseContrast {
    int t_lo = 0, t_hi = 0;  // 1-based treatment labels; mean effect higher at t_hi
    double diff = 0.0;       // mean(theta[t_hi]) - mean(theta[t_lo]), >= 0
    bool degenerate = false;
};

// Argmax |pairwise difference| of the posterior-mean effects of one probe;
// ties broken lexicographically over ordered pairs (t, t').
inline PairwiseContrast pairwise_contrast(std::span<const double> means) {
    if (means.size() < 2) throw std::domain_error("pairwise_contrast: needs >= 2 treatments");
    PairwiseContrast best;
    double best_abs = -1.0;
    int T = static_cast<int>(means.size());
    for (int a = 0; a < T; ++a) {
        for (int b = a + 1; b < T; ++b) {
            double d = means[b] - means[a];
            if (std::abs(d) > best_abs) {
                best_abs = std::abs(d);
                if (d >= 0.0) {
                    best.t_lo = a + 1;
                    best.t_hi = b + 1;
                } else {
                    best.t_lo = b + 1;
                    best.t_hi = a + 1;
                }
                best.diff = std::abs(d);
            }
        }
    }
    best.degenerate = best_abs <= 0.0;
    return best;
}

struct PosteriorSummary {
    std::vector<double> omega;
    FdrSelection fdr;
    LogBfBound logbf;
    Matrix theta_mean;                       // p x T conditional posterior means
    std::vector<PairwiseContrast> pairwise;  // entries only meaningful where detected
};

inline PosteriorSummary make_posterior_summary(const Trace& trace, double q0) {
    PosteriorSummary ps;
    ps.omega = posterior_diff_prob(trace);
    ps.fdr = bayes_fdr_select(ps.omega, q0);
    ps.logbf = logbf_lower_bound(trace);
    ps.theta_mean = theta_posterior_mean(trace);
    ps.pairwise.resize(trace.p);
    for (int j = 0; j < trace.p; ++j) {
        if (!ps.fdr.detected[j]) continue;
        if (trace.s2_count[j] == 0) {
            ps.pairwise[j].degenerate = true;
            continue;
        }
        ps.pairwise[j] = pairwise_contrast(
            std::span<const double>(ps.theta_mean.row(j).data(), trace.T));
    }
    return ps;
}

}  // namespace bayesdiff
