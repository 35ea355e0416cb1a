#pragma once
// Per-probe frequentist baselines (one-way ANOVA, Kruskal-Wallis) and the
// ROC/AUC evaluation used to compare detectors against simulation truth.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace bayesdiff {

namespace detail {

struct GroupedColumn {
    int T = 0;
    int N = 0;
    std::vector<std::vector<double>> groups;
};

inline GroupedColumn group_by_treatment(std::span<const double> column, std::span<const int> t) {
    if (column.size() != t.size()) throw std::domain_error("baseline test: length mismatch");
    GroupedColumn g;
    for (int ti : t) g.T = std::max(g.T, ti);
    if (g.T < 2) throw std::domain_error("baseline test: requires >= 2 groups");
    g.groups.resize(g.T);
    for (std::size_t i = 0; i < column.size(); ++i) {
        if (t[i] < 1 || t[i] > g.T) throw std::domain_error("baseline test: bad treatment label");
        g.groups[t[i] - 1].push_back(column[i]);
    }
    for (const auto& grp : g.groups)
        if (grp.size() < 2) throw std::domain_error("baseline test: every group needs >= 2 observations");
    g.N = static_cast<int>(column.size());
    if (g.N <= g.T) throw std::domain_error("baseline test: N must exceed T");
    return g;
}

}  // namespace detail

inline double anova_fstat(std::span<const double> column, std::span<const int> t) {
    auto g = detail::group_by_treatment(column, t);
    double grand = std::accumulate(column.begin(), column.end(), 0.0) / g.N;
    double ss_between = 0.0, ss_within = 0.0;
    for (const auto& grp : g.groups) {
        double m = std::accumulate(grp.begin(), grp.end(), 0.0) / grp.size();
        ss_between += grp.size() * (m - grand) * (m - grand);
        for (double v : grp) ss_within += (v - m) * (v - m);
    }
    int df1 = g.T - 1;
    int df2 = g.N - g.T;
    if (ss_within <= 0.0) {
        // degenerate: all groups internally constant
        return ss_between <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return (ss_between / df1) / (ss_within / df2);
}

// F-tail p-value via the regularized incomplete beta function.
inline double anova_pvalue(std::span<const double> column, std::span<const int> t) {
    auto g = detail::group_by_treatment(column, t);
    double f = anova_fstat(column, t);
    if (f == 0.0) return 1.0;
    double df1 = g.T - 1;
    double df2 = g.N - g.T;
    if (std::isinf(f)) return 0.0;
    // P(F > f) = I_{df2/(df2+df1 f)}(df2/2, df1/2)
    return boost::math::ibeta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f));
}

inline double kruskal_wallis_hstat(std::span<const double> column, std::span<const int> t) {
    auto g = detail::group_by_treatment(column, t);
    int N = g.N;
    // mid-ranks with tie bookkeeping
    std::vector<std::size_t> order(column.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
    std::vector<double> rank(column.size());
    double tie_sum = 0.0;  // sum of (m^3 - m) over tie groups
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && column[order[j + 1]] == column[order[i]]) ++j;
        double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        double m = static_cast<double>(j - i + 1);
        tie_sum += m * m * m - m;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    std::vector<double> rank_sum(g.T, 0.0);
    std::vector<int> n_k(g.T, 0);
    for (std::size_t k = 0; k < column.size(); ++k) {
        rank_sum[t[k] - 1] += rank[k];
        n_k[t[k] - 1] += 1;
    }
    double h = 0.0;
    for (int k = 0; k < g.T; ++k) h += rank_sum[k] * rank_sum[k] / n_k[k];
    h = 12.0 / (static_cast<double>(N) * (N + 1)) * h - 3.0 * (N + 1);
    double correction = 1.0 - tie_sum / (static_cast<double>(N) * N * N - N);
    if (correction <= 0.0) return 0.0;  // all values tied
    return h / correction;
}

inline double kruskal_wallis_pvalue(std::span<const double> column, std::span<const int> t) {
    auto g = detail::group_by_treatment(column, t);
    double h = kruskal_wallis_hstat(column, t);
    if (h <= 0.0) return 1.0;
    // chi-square tail with T-1 degrees of freedom
    return boost::math::gamma_q((g.T - 1) / 2.0, h / 2.0);
}

struct RocPoint {
    double fpr;
    double tpr;
};

struct RocResult {
    std::vector<RocPoint> points;  // step curve from (0,0) to (1,1), tied scores grouped
    double auc = 0.0;
    double auc20 = 0.0;  // partial area on FPR in [0,0.2], rescaled by 5
    double auc10 = 0.0;  // partial area on FPR in [0,0.1], rescaled by 10
};

namespace detail {

// Trapezoidal partial area of a curve given in count space, up to fpr_cut,
// linearly interpolated at the cutoff.
inline double partial_area(const std::vector<double>& fp, const std::vector<double>& tp,
                           double total_n, double total_p, double fpr_cut) {
    double cut = fpr_cut * total_n;
    double area = 0.0;
    for (std::size_t i = 1; i < fp.size(); ++i) {
        double f0 = fp[i - 1], f1 = fp[i];
        double t0 = tp[i - 1], t1 = tp[i];
        if (f0 >= cut) break;
        if (f1 > cut) {
            double frac = (f1 == f0) ? 0.0 : (cut - f0) / (f1 - f0);
            t1 = t0 + frac * (t1 - t0);
            f1 = cut;
        }
        area += (f1 - f0) * 0.5 * (t0 + t1);
    }
    return area / (total_n * total_p * fpr_cut);
}

}  // namespace detail

// Threshold sweep over distinct scores with tied scores entering together.
// truth uses the state convention: 2 = positive (differential), 1 = negative.
inline RocResult roc_and_auc(std::span<const double> scores, std::span<const int> truth) {
    if (scores.size() != truth.size()) throw std::domain_error("roc_and_auc: length mismatch");
    if (scores.empty()) throw std::domain_error("roc_and_auc: empty input");
    double P = 0.0, N = 0.0;
    for (int s : truth) {
        if (s == 2) P += 1.0;
        else if (s == 1) N += 1.0;
        else throw std::domain_error("roc_and_auc: truth labels must be 1 or 2");
    }
    if (P == 0.0 || N == 0.0)
        throw std::invalid_argument("roc_and_auc: truth must contain both classes");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<double> fp{0.0}, tp{0.0};
    std::size_t i = 0;
    double cum_tp = 0.0, cum_fp = 0.0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            if (truth[order[k]] == 2) cum_tp += 1.0;
            else cum_fp += 1.0;
        }
        fp.push_back(cum_fp);
        tp.push_back(cum_tp);
        i = j + 1;
    }

    RocResult r;
    r.points.reserve(fp.size());
    for (std::size_t k = 0; k < fp.size(); ++k) r.points.push_back({fp[k] / N, tp[k] / P});
    // full area in count space: exact Mann-Whitney concordance
    double area = 0.0;
    for (std::size_t k = 1; k < fp.size(); ++k)
        area += (fp[k] - fp[k - 1]) * 0.5 * (tp[k] + tp[k - 1]);
    r.auc = area / (P * N);
    r.auc20 = detail::partial_area(fp, tp, N, P, 0.2);
    r.auc10 = detail::partial_area(fp, tp, N, P, 0.1);
    return r;
}

struct EvalReport {
    std::string method;
    std::vector<double> scores;  // per probe: 1 - p-value for baselines, omega for BayesDiff
    RocResult roc;
};

}  // namespace bayesdiff
