#pragma once
// Collapsed Gibbs/Metropolis sampler for the two-group, two-state Sticky PDP.
// Tables are held explicitly per (group, state) PDP; table choice uses the
// PDP predictive rule with leave-one-out counts, atoms live on the shared
// discrete pool, and the pool itself is a truncated nested Dirichlet process.

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bayesdiff/dataset.hpp"
#include "bayesdiff/errors.hpp"
#include "bayesdiff/math.hpp"
#include "bayesdiff/model.hpp"
#include "bayesdiff/params.hpp"
#include "bayesdiff/stats.hpp"
#include "bayesdiff/transition.hpp"

namespace bayesdiff {

// ---------------------------------------------------------------------------
// PDP predictive rule
// ---------------------------------------------------------------------------

// Chinese-restaurant predictive of a PDP(d, alpha): existing table k gets
// (n_k - d), a new table gets (alpha + q d); normalized.
inline std::vector<double> pdp_predictive_weights(std::span<const int> cluster_sizes, double d,
                                                  double alpha) {
    if (!(d >= 0.0 && d < 1.0)) throw std::domain_error("pdp_predictive_weights: discount outside [0,1)");
    if (!(alpha > -d)) throw std::domain_error("pdp_predictive_weights: alpha must exceed -d");
    std::vector<double> w;
    w.reserve(cluster_sizes.size() + 1);
    double total = 0.0;
    for (int n_k : cluster_sizes) {
        if (n_k < 1) throw std::domain_error("pdp_predictive_weights: cluster size must be >= 1");
        w.push_back(n_k - d);
        total += n_k - d;
    }
    double fresh = alpha + static_cast<double>(cluster_sizes.size()) * d;
    w.push_back(fresh);
    total += fresh;
    for (double& x : w) x /= total;
    return w;
}

// Log EPPF of a PDP(d, alpha) partition with block sizes n_k.
inline double pdp_log_eppf(std::span<const int> sizes, double d, double alpha) {
    int K = static_cast<int>(sizes.size());
    if (K == 0) return 0.0;
    int n = std::accumulate(sizes.begin(), sizes.end(), 0);
    double lp = 0.0;
    for (int k = 1; k < K; ++k) lp += std::log(alpha + k * d);
    lp -= std::lgamma(alpha + n) - std::lgamma(alpha + 1.0);
    for (int n_k : sizes) lp += std::lgamma(n_k - d) - std::lgamma(1.0 - d);
    return lp;
}

// ---------------------------------------------------------------------------
// Chain state
// ---------------------------------------------------------------------------

inline int pdp_index(int g, int s) { return (g - 1) * 2 + (s - 1); }

struct Table {
    std::vector<int> coord;  // pool indices, length T; all equal for state 1
    int count = 0;
};

struct ChainState {
    int p = 0;
    int T = 0;
    std::vector<int> g, s, v;  // per probe; g,s in {1,2}, v is a 0-based table index
    std::array<std::vector<Table>, 4> tables;
    PsiPool pool;
    std::vector<double> xi;  // subject effects, length n

    double theta(int j, int t) const {
        const Table& tb = tables[pdp_index(g[j], s[j])][v[j]];
        return pool.value[tb.coord[t]];
    }

    int num_clusters() const {
        int q = 0;
        for (const auto& tv : tables) q += static_cast<int>(tv.size());
        return q;
    }

    int num_clusters_state(int state) const {
        int q = 0;
        for (int grp = 1; grp <= 2; ++grp) q += static_cast<int>(tables[pdp_index(grp, state)].size());
        return q;
    }

    // Probe -> cluster relabeling of the distinct occupied (g,s,v) triplets.
    std::vector<int> cluster_allocation() const {
        std::array<std::vector<int>, 4> base{};
        int next = 0;
        for (int idx = 0; idx < 4; ++idx) {
            base[idx].resize(tables[idx].size());
            for (std::size_t k = 0; k < tables[idx].size(); ++k) base[idx][k] = next++;
        }
        std::vector<int> c(p);
        for (int j = 0; j < p; ++j) c[j] = base[pdp_index(g[j], s[j])][v[j]] + 1;
        return c;
    }

    void validate() const {
        pool.validate();
        std::array<std::vector<int>, 4> counts{};
        for (int idx = 0; idx < 4; ++idx) counts[idx].assign(tables[idx].size(), 0);
        for (int j = 0; j < p; ++j) {
            if (g[j] != 1 && g[j] != 2) throw std::logic_error("ChainState: bad group label");
            if (s[j] != 1 && s[j] != 2) throw std::logic_error("ChainState: bad state label");
            int idx = pdp_index(g[j], s[j]);
            if (v[j] < 0 || v[j] >= static_cast<int>(tables[idx].size()))
                throw std::logic_error("ChainState: table index out of range");
            counts[idx][v[j]] += 1;
        }
        for (int idx = 0; idx < 4; ++idx) {
            int state = idx % 2 + 1;
            for (std::size_t k = 0; k < tables[idx].size(); ++k) {
                const Table& tb = tables[idx][k];
                if (tb.count != counts[idx][k]) throw std::logic_error("ChainState: stale table count");
                if (tb.count == 0) throw std::logic_error("ChainState: empty table not deleted");
                if (static_cast<int>(tb.coord.size()) != T) throw std::logic_error("ChainState: bad atom length");
                std::vector<double> vals(T);
                for (int t = 0; t < T; ++t) {
                    if (tb.coord[t] < 0 || tb.coord[t] >= pool.size())
                        throw std::logic_error("ChainState: atom coordinate outside pool");
                    vals[t] = pool.value[tb.coord[t]];
                }
                if (atom_state(vals) != state) throw std::logic_error("ChainState: atom/state mismatch");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Sampler configuration and trace
// ---------------------------------------------------------------------------

struct SamplerConfig {
    std::uint64_t n_iter = 10000;
    std::uint64_t burn_in = 5000;
    std::uint64_t thin = 5;
    std::uint64_t seed = 1;
    int H_G = 50;  // pool truncation; doubled adaptively if the tail is occupied
    double prop_scale_beta = 0.6;
    double prop_scale_alpha = 0.6;
    double prop_scale_rho = 0.6;
    double prop_scale_gamma = 0.6;
    bool adapt = true;  // proposal adaptation during burn-in only
    bool check_invariants = false;

    struct Updates {
        bool allocations = true;
        bool atoms = true;
        bool pool = true;
        bool subject_effects = true;
        bool sigma2 = true;
        bool tau2_eps = true;
        bool base_measure = true;  // mu_G, tau2_G
        bool beta_mass = true;
        bool alpha_mass = true;
        bool rho = true;
        bool gamma = true;
        bool eta = true;
        bool d2 = true;
    } update;

    void validate() const {
        if (burn_in >= n_iter) throw std::domain_error("SamplerConfig: burn_in must be < n_iter");
        if (thin < 1) throw std::domain_error("SamplerConfig: thin must be >= 1");
        if (H_G < 2) throw std::domain_error("SamplerConfig: H_G must be >= 2");
        if (prop_scale_beta <= 0 || prop_scale_alpha <= 0 || prop_scale_rho <= 0 || prop_scale_gamma <= 0)
            throw std::domain_error("SamplerConfig: proposal scales must be positive");
    }
};

struct TraceRow {
    std::uint64_t iter = 0;
    double loglik = 0.0;
    int q = 0, q1 = 0, q2 = 0;
    double eta = 0.0, d2 = 0.0, sigma2 = 0.0, tau2_eps = 0.0;
    double rho = 0.0, gamma = 0.0, beta = 0.0, mu_G = 0.0, tau2_G = 0.0;
    double p_eta_pos = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::uint8_t> s;  // per-probe state labels, 1/2
};

struct Trace {
    int p = 0;
    int T = 0;
    std::vector<TraceRow> rows;
    // treatment-effect accumulators over kept iterations with s_j = 2
    std::vector<double> theta_sum;  // p*T, row-major by probe
    std::vector<long> s2_count;     // per probe

    bool empty() const { return rows.empty(); }
};

struct AllocCandidate {
    int g = 0, s = 0;
    int v = 0;  // == current table count of the (g,s) PDP for "new table"
    bool fresh = false;
    double logw = neg_inf;  // normalized log probability
};

// ---------------------------------------------------------------------------
// Generic univariate samplers
// ---------------------------------------------------------------------------

namespace detail {

// Slice sampler with stepping out and shrinkage on a bounded interval.
template <class F>
double slice_sample(F&& logf, double x0, double lo, double hi, double w, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double f0 = logf(x0);
    if (!std::isfinite(f0)) throw numerical_error("slice_sample: non-finite density at current point");
    double logy = f0 + std::log(unif(rng));
    double L = x0 - w * unif(rng);
    double R = L + w;
    L = std::max(L, lo);
    R = std::min(R, hi);
    for (int k = 0; k < 64 && L > lo && logf(L) > logy; ++k) L = std::max(L - w, lo);
    for (int k = 0; k < 64 && R < hi && logf(R) > logy; ++k) R = std::min(R + w, hi);
    for (int k = 0; k < 200; ++k) {
        double x1 = L + (R - L) * unif(rng);
        if (logf(x1) >= logy) return x1;
        if (x1 < x0) L = x1;
        else R = x1;
    }
    return x0;  // shrinkage failed to move; keep the current point
}

struct MhScalar {
    double log_scale;
    long accepted = 0;
    long proposed = 0;

    explicit MhScalar(double scale = 0.5) : log_scale(std::log(scale)) {}

    double scale() const { return std::exp(log_scale); }

    void adapt(bool accepted_now, std::uint64_t iter) {
        double step = 1.0 / std::sqrt(static_cast<double>(iter) + 10.0);
        log_scale += step * ((accepted_now ? 1.0 : 0.0) - 0.44);
        log_scale = std::clamp(log_scale, std::log(1e-3), std::log(10.0));
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

class Sampler {
  public:
    Sampler(const Dataset& data, ModelHyperParams params, SamplerConfig config)
        : data_(&data),
          par_(std::move(params)),
          cfg_(config),
          rng_(config.seed),
          mh_beta_(config.prop_scale_beta),
          mh_alpha1_(config.prop_scale_alpha),
          mh_alpha2_(config.prop_scale_alpha),
          mh_rho_(config.prop_scale_rho),
          mh_gamma_(config.prop_scale_gamma) {
        cfg_.validate();
        par_.validate();
        data.validate();
        n_ = data.n();
        p_ = data.p();
        T_ = data.num_treatments;
        n_t_.assign(T_, 0);
        for (int ti : data.t) n_t_[ti - 1] += 1;
        init_state();
        refresh_residuals();
        refresh_pool_lik();
    }

    const ChainState& state() const { return st_; }
    ChainState& mutable_state() { return st_; }
    const ModelHyperParams& params() const { return par_; }
    ModelHyperParams& mutable_params() { return par_; }
    const SamplerConfig& config() const { return cfg_; }
    std::uint64_t iterations_done() const { return iter_done_; }

    // After external edits to the state or parameters (e.g. pinning the pool
    // in tests), rebuilds the cached sufficient statistics.
    void invalidate_caches() {
        pool_lik_dirty_ = true;
        refresh_residuals();
        refresh_pool_lik();
    }

    // ---- full conditional of one probe's (g,s,v), for inspection/tests ----
    std::vector<AllocCandidate> allocation_conditional(int j) {
        ChainState snapshot = st_;
        remove_probe(j);
        auto cands = build_candidates(j);
        st_ = std::move(snapshot);
        double norm = neg_inf;
        {
            std::vector<double> lw;
            lw.reserve(cands.size());
            for (const auto& c : cands) lw.push_back(c.logw);
            norm = log_sum_exp(lw);
        }
        for (auto& c : cands) c.logw -= norm;
        return cands;
    }

    // ---- individual update stages (spec sweep order) ----

    void update_allocations() {
        refresh_pool_lik();
        for (int j = 0; j < p_; ++j) {
            remove_probe(j);
            auto cands = build_candidates(j);
            std::vector<double> lw;
            lw.reserve(cands.size());
            for (const auto& c : cands) lw.push_back(c.logw);
            int pick = sample_categorical_log(lw, rng_);
            place_probe(j, cands[pick]);
        }
    }

    void update_atoms() {
        refresh_pool_lik();
        auto members = table_members();
        for (int idx = 0; idx < 4; ++idx) {
            int state = idx % 2 + 1;
            for (std::size_t k = 0; k < st_.tables[idx].size(); ++k) {
                if (members[idx][k].empty()) throw std::logic_error("update_atoms: empty cluster");
                resample_table_atom(idx, static_cast<int>(k), state, members[idx][k]);
            }
        }
        if (cfg_.update.pool) update_pool(members);
        refresh_pool_lik();
    }

    void update_subject_effects() {
        for (int i = 0; i < n_; ++i) {
            double resid_sum = 0.0;
            for (int j = 0; j < p_; ++j)
                resid_sum += data_->z(i, j) - data_->b[i] - st_.theta(j, data_->t[i] - 1);
            double prec = p_ / par_.sigma2 + 1.0 / par_.tau2_eps;
            double mean = (resid_sum / par_.sigma2) / prec;
            double eps = draw_normal(mean, 1.0 / prec, rng_);
            st_.xi[i] = data_->b[i] + eps;
        }
        if (cfg_.update.tau2_eps) {
            double ss = 0.0;
            for (int i = 0; i < n_; ++i) {
                double eps = st_.xi[i] - data_->b[i];
                ss += eps * eps;
            }
            par_.tau2_eps = draw_inverse_gamma(par_.prior.tau2_eps_shape + 0.5 * n_,
                                               par_.prior.tau2_eps_rate + 0.5 * ss, rng_);
        }
        refresh_residuals();
    }

    void update_scalars() {
        const PriorConfig& pr = par_.prior;
        if (cfg_.update.sigma2) {
            double rss = residual_sum_squares();
            par_.sigma2 = draw_inverse_gamma(pr.sigma2_shape + 0.5 * n_ * p_,
                                             pr.sigma2_rate + 0.5 * rss, rng_);
        }
        if (cfg_.update.base_measure) {
            int H = st_.pool.size();
            double sum = std::accumulate(st_.pool.value.begin(), st_.pool.value.end(), 0.0);
            double prec = H / par_.tau2_G + 1.0 / pr.mu_G_var;
            double mean = (sum / par_.tau2_G + pr.mu_G_mean / pr.mu_G_var) / prec;
            par_.mu_G = draw_normal(mean, 1.0 / prec, rng_);
            double ss = 0.0;
            for (double z : st_.pool.value) ss += (z - par_.mu_G) * (z - par_.mu_G);
            par_.tau2_G = draw_inverse_gamma(pr.tau2_G_shape + 0.5 * H, pr.tau2_G_rate + 0.5 * ss, rng_);
        }
        if (cfg_.update.beta_mass) metropolis_beta();
        if (cfg_.update.alpha_mass) {
            metropolis_alpha(1);
            metropolis_alpha(2);
        }
        if (cfg_.update.rho) metropolis_rho();
        if (cfg_.update.gamma) metropolis_gamma();
        check_finite_scalars("update_scalars");
    }

    // Trans-dimensional move between {eta = 0} and {eta > 0}; records the
    // two-component conditional probability used by the Bayes-factor bound.
    void update_eta() {
        double prior_rate = 1.0 / std::max(1, p_ - 1);
        double lim = eta_limit();
        double log_c = trunc_ig_log_mass(prior_rate, lim);
        double lp0 = std::log(par_.prior.eta_zero_weight) + group_transition_loglik(0.0);
        std::vector<double> grid = trunc_ig_quantile_grid(prior_rate, lim, quad_points_);
        std::vector<double> lls(grid.size());
        for (std::size_t k = 0; k < grid.size(); ++k) lls[k] = group_transition_loglik(grid[k]);
        double lp1 = std::log(1.0 - par_.prior.eta_zero_weight) + log_sum_exp(lls) -
                     std::log(static_cast<double>(grid.size()));
        double norm = log_sum_exp(std::array{lp0, lp1});
        last_p_eta_pos_ = std::exp(lp1 - norm);
        bool positive = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < last_p_eta_pos_;
        if (!positive) {
            par_.eta = 0.0;
            return;
        }
        double x0 = par_.eta;
        if (!(x0 > 0.0) || x0 >= lim) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < grid.size(); ++k)
                if (lls[k] + trunc_ig_logpdf(grid[k], prior_rate, log_c) >
                    lls[best] + trunc_ig_logpdf(grid[best], prior_rate, log_c))
                    best = k;
            x0 = grid[best];
        }
        auto target = [&](double eta) {
            if (!(eta > 0.0) || eta >= lim) return neg_inf;
            return trunc_ig_logpdf(eta, prior_rate, log_c) + group_transition_loglik(eta);
        };
        par_.eta = detail::slice_sample(target, x0, 0.0, std::min(lim, 1e6), prior_rate, rng_);
    }

    // Same trans-dimensional scheme targeting the exchangeable partition
    // likelihood of the differential-state clusters.
    void update_d2() {
        auto loglik = [&](double d2) {
            double lp = 0.0;
            for (int grp = 1; grp <= 2; ++grp) {
                auto sizes = table_sizes(pdp_index(grp, 2));
                lp += pdp_log_eppf(sizes, d2, par_.alpha2);
            }
            return lp;
        };
        double lp0 = std::log(par_.prior.d2_zero_weight) + loglik(0.0);
        std::vector<double> lls(quad_points_);
        for (int k = 0; k < quad_points_; ++k)
            lls[k] = loglik((k + 0.5) / quad_points_);
        double lp1 = std::log(1.0 - par_.prior.d2_zero_weight) + log_sum_exp(lls) -
                     std::log(static_cast<double>(quad_points_));
        double norm = log_sum_exp(std::array{lp0, lp1});
        double p_pos = std::exp(lp1 - norm);
        bool positive = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p_pos;
        if (!positive) {
            par_.d2 = 0.0;
            return;
        }
        double x0 = par_.d2;
        if (!(x0 > 0.0)) {
            int best = 0;
            for (int k = 1; k < quad_points_; ++k)
                if (lls[k] > lls[best]) best = k;
            x0 = (best + 0.5) / quad_points_;
        }
        auto target = [&](double d2) {
            if (!(d2 > 0.0 && d2 < 1.0)) return neg_inf;
            return loglik(d2);
        };
        par_.d2 = detail::slice_sample(target, x0, 0.0, 1.0, 0.2, rng_);
    }

    void sweep() {
        if (cfg_.update.allocations) update_allocations();
        if (cfg_.update.atoms) update_atoms();
        if (cfg_.update.subject_effects) update_subject_effects();
        update_scalars();
        if (cfg_.update.eta) update_eta();
        if (cfg_.update.d2) update_d2();
        ++iter_done_;
        if (cfg_.check_invariants) st_.validate();
    }

    double log_likelihood() const {
        double lp = 0.0;
        double c = -0.5 * std::log(2.0 * M_PI * par_.sigma2);
        for (int j = 0; j < p_; ++j) {
            for (int i = 0; i < n_; ++i) {
                double r = data_->z(i, j) - st_.xi[i] - st_.theta(j, data_->t[i] - 1);
                lp += c - r * r / (2.0 * par_.sigma2);
            }
        }
        return lp;
    }

    double last_p_eta_pos() const { return last_p_eta_pos_; }

    // Runs from the current iteration count to cfg.n_iter, appending kept rows
    // to the internal trace, and returns it.
    const Trace& run() {
        return run_with_callback(0, [](const Sampler&) {});
    }

    // Like run(), invoking cb(*this) every `every` completed iterations
    // (e.g. for periodic checkpointing); `every` = 0 disables the callback.
    template <class CB>
    const Trace& run_with_callback(std::uint64_t every, CB&& cb) {
        if (trace_.rows.empty() && trace_.p == 0) {
            trace_.p = p_;
            trace_.T = T_;
            trace_.theta_sum.assign(static_cast<std::size_t>(p_) * T_, 0.0);
            trace_.s2_count.assign(p_, 0);
        }
        while (iter_done_ < cfg_.n_iter) {
            adapting_ = cfg_.adapt && iter_done_ < cfg_.burn_in;
            sweep();
            double ll = log_likelihood();
            if (!std::isfinite(ll))
                throw numerical_error("run_chain: non-finite log-likelihood after iteration " +
                                      std::to_string(iter_done_));
            if (iter_done_ > cfg_.burn_in && (iter_done_ - cfg_.burn_in - 1) % cfg_.thin == 0)
                record_row(ll);
            if (every > 0 && iter_done_ % every == 0 && iter_done_ < cfg_.n_iter) cb(*this);
        }
        return trace_;
    }

    const Trace& trace() const { return trace_; }

    void save_checkpoint(std::ostream& out) const;
    static Sampler load_checkpoint(std::istream& in, const Dataset& data);

  private:
    // ---- initialization -------------------------------------------------

    void init_state() {
        st_.p = p_;
        st_.T = T_;
        st_.g.assign(p_, 1);
        st_.s.assign(p_, 1);
        st_.v.assign(p_, 0);
        st_.xi = data_->b;
        st_.pool = prior_pool(cfg_.H_G, par_.beta, par_.mu_G, par_.tau2_G, rng_);

        // two-state thresholding of per-probe ANOVA F statistics
        std::vector<double> column(n_);
        for (int j = 0; j < p_; ++j) {
            for (int i = 0; i < n_; ++i) column[i] = data_->z(i, j) - data_->b[i];
            double pv = 1.0;
            try {
                pv = anova_pvalue(column, data_->t);
            } catch (const std::domain_error&) {
                pv = 1.0;
            }
            st_.s[j] = pv < 0.05 ? 2 : 1;
            st_.g[j] = st_.s[j];
        }

        // one cluster per occupied (g,s) PDP
        for (int state = 1; state <= 2; ++state) {
            std::vector<int> members;
            for (int j = 0; j < p_; ++j)
                if (st_.s[j] == state) members.push_back(j);
            if (members.empty()) continue;
            Table tb;
            tb.count = static_cast<int>(members.size());
            tb.coord = init_atom_coord(state, members);
            int idx = pdp_index(state, state);
            st_.tables[idx].push_back(std::move(tb));
            for (int j : members) st_.v[j] = 0;
        }
    }

    std::vector<int> init_atom_coord(int state, const std::vector<int>& members) {
        auto nearest = [&](double target, int exclude = -1) {
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int vdx = 0; vdx < st_.pool.size(); ++vdx) {
                if (vdx == exclude) continue;
                double dist = std::abs(st_.pool.value[vdx] - target);
                if (dist < best_d) {
                    best_d = dist;
                    best = vdx;
                }
            }
            return best;
        };
        std::vector<int> coord(T_);
        if (state == 1) {
            double sum = 0.0;
            for (int j : members)
                for (int i = 0; i < n_; ++i) sum += data_->z(i, j) - data_->b[i];
            int vdx = nearest(sum / (static_cast<double>(members.size()) * n_));
            std::fill(coord.begin(), coord.end(), vdx);
        } else {
            for (int t = 0; t < T_; ++t) {
                double sum = 0.0;
                int cnt = 0;
                for (int j : members) {
                    for (int i = 0; i < n_; ++i) {
                        if (data_->t[i] - 1 != t) continue;
                        sum += data_->z(i, j) - data_->b[i];
                        ++cnt;
                    }
                }
                coord[t] = nearest(cnt > 0 ? sum / cnt : 0.0);
            }
            std::vector<double> vals(T_);
            for (int t = 0; t < T_; ++t) vals[t] = st_.pool.value[coord[t]];
            if (atom_state(vals) == 1)
                coord[T_ - 1] = nearest(st_.pool.value[coord[T_ - 1]] + 1e-9, coord[T_ - 1]);
        }
        return coord;
    }

    // ---- cached sufficient statistics ----------------------------------

    void refresh_residuals() {
        S_.assign(static_cast<std::size_t>(p_) * T_, 0.0);
        for (int i = 0; i < n_; ++i) {
            int t = data_->t[i] - 1;
            for (int j = 0; j < p_; ++j)
                S_[static_cast<std::size_t>(j) * T_ + t] += data_->z(i, j) - st_.xi[i];
        }
        pool_lik_dirty_ = true;
    }

    // Per-probe, per-treatment, per-pool-value likelihood kernel (theta-dependent
    // part only; probe-constant terms cancel within each probe's conditional).
    void refresh_pool_lik() {
        if (!pool_lik_dirty_ && cached_sigma2_ == par_.sigma2 && cached_H_ == st_.pool.size()) return;
        int H = st_.pool.size();
        ell_.assign(static_cast<std::size_t>(p_) * T_ * H, 0.0);
        double inv2s = 1.0 / (2.0 * par_.sigma2);
        for (int j = 0; j < p_; ++j) {
            for (int t = 0; t < T_; ++t) {
                double s_tj = S_[static_cast<std::size_t>(j) * T_ + t];
                double* row = ell_.data() + (static_cast<std::size_t>(j) * T_ + t) * H;
                for (int vdx = 0; vdx < H; ++vdx) {
                    double z = st_.pool.value[vdx];
                    row[vdx] = (2.0 * s_tj * z - n_t_[t] * z * z) * inv2s;
                }
            }
        }
        logw_pool_.resize(H);
        double sum_wT = 0.0;
        for (int vdx = 0; vdx < H; ++vdx) {
            logw_pool_[vdx] = st_.pool.weight[vdx] > 0.0 ? std::log(st_.pool.weight[vdx]) : neg_inf;
            sum_wT += std::pow(st_.pool.weight[vdx], T_);
        }
        log1m_wT_ = sum_wT < 1.0 ? std::log1p(-sum_wT) : neg_inf;
        pool_lik_dirty_ = false;
        cached_sigma2_ = par_.sigma2;
        cached_H_ = H;
    }

    double ell(int j, int t, int vdx) const {
        return ell_[(static_cast<std::size_t>(j) * T_ + t) * st_.pool.size() + vdx];
    }

    double atom_loglik(int j, const std::vector<int>& coord) const {
        double lp = 0.0;
        for (int t = 0; t < T_; ++t) lp += ell(j, t, coord[t]);
        return lp;
    }

    // Marginal likelihood of probe j under a fresh state-1 table.
    double new_table_loglik1(int j) const {
        int H = st_.pool.size();
        std::vector<double> lw(H);
        for (int vdx = 0; vdx < H; ++vdx) {
            double lp = logw_pool_[vdx];
            for (int t = 0; t < T_; ++t) lp += ell(j, t, vdx);
            lw[vdx] = lp;
        }
        return log_sum_exp(lw);
    }

    // Exact marginal under a fresh state-2 table: the likelihood factorizes
    // across treatments, and the all-equal mass is subtracted before the
    // 1 - sum varpi^T renormalization.
    double new_table_loglik2(int j) const {
        if (log1m_wT_ == neg_inf) return neg_inf;
        int H = st_.pool.size();
        double sum_a = 0.0;
        std::vector<double> lw(H);
        for (int t = 0; t < T_; ++t) {
            for (int vdx = 0; vdx < H; ++vdx) lw[vdx] = logw_pool_[vdx] + ell(j, t, vdx);
            sum_a += log_sum_exp(lw);
        }
        for (int vdx = 0; vdx < H; ++vdx) {
            double lp = T_ * logw_pool_[vdx];
            for (int t = 0; t < T_; ++t) lp += ell(j, t, vdx);
            lw[vdx] = lp;
        }
        double all_equal = log_sum_exp(lw);
        if (all_equal >= sum_a) return neg_inf;
        return sum_a + std::log1p(-std::exp(all_equal - sum_a)) - log1m_wT_;
    }

    // ---- allocation sweep ----------------------------------------------

    void remove_probe(int j) {
        int idx = pdp_index(st_.g[j], st_.s[j]);
        auto& tv = st_.tables[idx];
        Table& tb = tv[st_.v[j]];
        if (--tb.count == 0) {
            int removed = st_.v[j];
            tv.erase(tv.begin() + removed);
            for (int j2 = 0; j2 < p_; ++j2) {
                if (j2 == j || st_.g[j2] != st_.g[j] || st_.s[j2] != st_.s[j]) continue;
                if (st_.v[j2] > removed) --st_.v[j2];
            }
        }
        st_.v[j] = -1;
    }

    std::vector<AllocCandidate> build_candidates(int j) {
        std::vector<AllocCandidate> out;
        double r_in = 0.0;
        if (j > 0) r_in = clamp_affiliation(affiliation_or_zero(data_->e[j - 1]));
        double r_out = 0.0;
        if (j < p_ - 1) r_out = clamp_affiliation(affiliation_or_zero(data_->e[j]));

        for (int grp = 1; grp <= 2; ++grp) {
            ProbPair in = (j == 0) ? first_group_mass(par_.rho)
                                   : group_mass(st_.s[j - 1], r_in, par_.rho, par_.gamma);
            double lp_in = log_prob(in, grp);
            for (int state = 1; state <= 2; ++state) {
                double base = lp_in + log_prob(state_mass(grp, par_.rho, par_.gamma), state);
                if (j < p_ - 1)
                    base += log_prob(group_mass(state, r_out, par_.rho, par_.gamma), st_.g[j + 1]);
                if (base == neg_inf) continue;
                int idx = pdp_index(grp, state);
                const auto& tv = st_.tables[idx];
                double d = state == 1 ? par_.d1 : par_.d2;
                double alpha = state == 1 ? par_.alpha1 : par_.alpha2;
                int n_gs = 0;
                for (const Table& tb : tv) n_gs += tb.count;
                double lognorm = std::log(alpha + n_gs);
                for (std::size_t k = 0; k < tv.size(); ++k) {
                    AllocCandidate c;
                    c.g = grp;
                    c.s = state;
                    c.v = static_cast<int>(k);
                    c.logw = base + std::log(tv[k].count - d) - lognorm + atom_loglik(j, tv[k].coord);
                    out.push_back(c);
                }
                AllocCandidate c;
                c.g = grp;
                c.s = state;
                c.v = static_cast<int>(tv.size());
                c.fresh = true;
                double lp_new = state == 1 ? new_table_loglik1(j) : new_table_loglik2(j);
                c.logw = base + std::log(alpha + static_cast<double>(tv.size()) * d) - lognorm + lp_new;
                out.push_back(c);
            }
        }
        if (out.empty()) throw numerical_error("build_candidates: no admissible allocation");
        return out;
    }

    void place_probe(int j, const AllocCandidate& c) {
        st_.g[j] = c.g;
        st_.s[j] = c.s;
        st_.v[j] = c.v;
        auto& tv = st_.tables[pdp_index(c.g, c.s)];
        if (c.fresh) {
            Table tb;
            tb.count = 1;
            tb.coord = draw_single_probe_atom(j, c.s);
            tv.push_back(std::move(tb));
        } else {
            tv[c.v].count += 1;
        }
    }

    std::vector<int> draw_single_probe_atom(int j, int state) {
        int H = st_.pool.size();
        std::vector<int> coord(T_);
        std::vector<double> lw(H);
        if (state == 1) {
            for (int vdx = 0; vdx < H; ++vdx) {
                double lp = logw_pool_[vdx];
                for (int t = 0; t < T_; ++t) lp += ell(j, t, vdx);
                lw[vdx] = lp;
            }
            std::fill(coord.begin(), coord.end(), sample_categorical_log(lw, rng_));
            return coord;
        }
        std::vector<double> vals(T_);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            for (int t = 0; t < T_; ++t) {
                for (int vdx = 0; vdx < H; ++vdx) lw[vdx] = logw_pool_[vdx] + ell(j, t, vdx);
                coord[t] = sample_categorical_log(lw, rng_);
                vals[t] = st_.pool.value[coord[t]];
            }
            if (atom_state(vals) == 2) return coord;
        }
        return force_unequal_coord(coord, [&](int t, int vdx) { return logw_pool_[vdx] + ell(j, t, vdx); });
    }

    // Last-resort constrained redraw of coordinate 0 when rejection stalls.
    template <class W>
    std::vector<int> force_unequal_coord(std::vector<int> coord, W&& weight) {
        int H = st_.pool.size();
        double common = st_.pool.value[coord[0]];
        std::vector<double> lw(H);
        bool any = false;
        for (int vdx = 0; vdx < H; ++vdx) {
            if (st_.pool.value[vdx] == common) {
                lw[vdx] = neg_inf;
            } else {
                lw[vdx] = weight(0, vdx);
                any = true;
            }
        }
        if (!any) throw numerical_error("state-2 atom draw: pool support has a single value");
        coord[0] = sample_categorical_log(lw, rng_);
        return coord;
    }

    // ---- atoms and pool --------------------------------------------------

    std::array<std::vector<std::vector<int>>, 4> table_members() const {
        std::array<std::vector<std::vector<int>>, 4> members;
        for (int idx = 0; idx < 4; ++idx) members[idx].resize(st_.tables[idx].size());
        for (int j = 0; j < p_; ++j) members[pdp_index(st_.g[j], st_.s[j])][st_.v[j]].push_back(j);
        return members;
    }

    void resample_table_atom(int idx, int k, int state, const std::vector<int>& members) {
        int H = st_.pool.size();
        Table& tb = st_.tables[idx][k];
        std::vector<double> lw(H);
        if (state == 1) {
            for (int vdx = 0; vdx < H; ++vdx) {
                double lp = logw_pool_[vdx];
                for (int j : members)
                    for (int t = 0; t < T_; ++t) lp += ell(j, t, vdx);
                lw[vdx] = lp;
            }
            std::fill(tb.coord.begin(), tb.coord.end(), sample_categorical_log(lw, rng_));
            return;
        }
        auto coord_weight = [&](int t, int vdx) {
            double lp = logw_pool_[vdx];
            for (int j : members) lp += ell(j, t, vdx);
            return lp;
        };
        std::vector<int> coord(T_);
        std::vector<double> vals(T_);
        for (int attempt = 0; attempt < 1000; ++attempt) {
            for (int t = 0; t < T_; ++t) {
                for (int vdx = 0; vdx < H; ++vdx) lw[vdx] = coord_weight(t, vdx);
                coord[t] = sample_categorical_log(lw, rng_);
                vals[t] = st_.pool.value[coord[t]];
            }
            if (atom_state(vals) == 2) {
                tb.coord = coord;
                return;
            }
        }
        tb.coord = force_unequal_coord(coord, coord_weight);
    }

    void update_pool(const std::array<std::vector<std::vector<int>>, 4>& members) {
        int H = st_.pool.size();
        std::vector<int> m(H, 0);          // atom-coordinate draws mapped to each pool entry
        std::vector<double> n_obs(H, 0.0);  // observation counts
        std::vector<double> s_obs(H, 0.0);  // residual sums
        for (int idx = 0; idx < 4; ++idx) {
            int state = idx % 2 + 1;
            for (std::size_t k = 0; k < st_.tables[idx].size(); ++k) {
                const Table& tb = st_.tables[idx][k];
                const auto& js = members[idx][k];
                if (state == 1) {
                    int vdx = tb.coord[0];
                    m[vdx] += 1;
                    n_obs[vdx] += static_cast<double>(js.size()) * n_;
                    for (int j : js)
                        for (int t = 0; t < T_; ++t) s_obs[vdx] += S_[static_cast<std::size_t>(j) * T_ + t];
                } else {
                    for (int t = 0; t < T_; ++t) {
                        int vdx = tb.coord[t];
                        m[vdx] += 1;
                        n_obs[vdx] += static_cast<double>(js.size()) * n_t_[t];
                        for (int j : js) s_obs[vdx] += S_[static_cast<std::size_t>(j) * T_ + t];
                    }
                }
            }
        }

        // adaptive truncation: double H if the tail component is occupied
        if (m[H - 1] > 0 && H < 1024) {
            int extra = H;
            for (int k = 0; k < extra; ++k)
                st_.pool.value.push_back(draw_normal(par_.mu_G, par_.tau2_G, rng_));
            m.resize(H + extra, 0);
            n_obs.resize(H + extra, 0.0);
            s_obs.resize(H + extra, 0.0);
            H += extra;
            st_.pool.weight.resize(H);
            st_.pool.stick.resize(H);
        }

        // conjugate values
        for (int vdx = 0; vdx < H; ++vdx) {
            double prec = n_obs[vdx] / par_.sigma2 + 1.0 / par_.tau2_G;
            double mean = (s_obs[vdx] / par_.sigma2 + par_.mu_G / par_.tau2_G) / prec;
            st_.pool.value[vdx] = draw_normal(mean, 1.0 / prec, rng_);
        }
        // stick-breaking conditional
        std::vector<double> tail(H + 1, 0.0);
        for (int vdx = H - 1; vdx >= 0; --vdx) tail[vdx] = tail[vdx + 1] + m[vdx];
        double remaining = 1.0;
        for (int vdx = 0; vdx < H; ++vdx) {
            double b = (vdx == H - 1) ? 1.0 : draw_beta(1.0 + m[vdx], par_.beta + tail[vdx + 1], rng_);
            st_.pool.stick[vdx] = b;
            st_.pool.weight[vdx] = b * remaining;
            remaining *= (1.0 - b);
        }
        pool_lik_dirty_ = true;
    }

    // ---- scalar updates --------------------------------------------------

    double residual_sum_squares() const {
        double rss = 0.0;
        for (int j = 0; j < p_; ++j) {
            for (int i = 0; i < n_; ++i) {
                double r = data_->z(i, j) - st_.xi[i] - st_.theta(j, data_->t[i] - 1);
                rss += r * r;
            }
        }
        return rss;
    }

    std::vector<int> table_sizes(int idx) const {
        std::vector<int> sizes;
        sizes.reserve(st_.tables[idx].size());
        for (const Table& tb : st_.tables[idx]) sizes.push_back(tb.count);
        return sizes;
    }

    double gamma_log_prior(double x, double shape, double rate) const {
        return (shape - 1.0) * std::log(x) - rate * x;
    }

    void metropolis_beta() {
        auto target = [&](double beta) {
            if (!(beta > 0.0)) return neg_inf;
            double lp = gamma_log_prior(beta, par_.prior.beta_shape, par_.prior.beta_rate);
            int H = st_.pool.size();
            lp += (H - 1) * std::log(beta);
            for (int vdx = 0; vdx < H - 1; ++vdx) lp += (beta - 1.0) * std::log1p(-st_.pool.stick[vdx]);
            return lp;
        };
        mh_log_scale_step(par_.beta, target, mh_beta_);
    }

    void metropolis_alpha(int state) {
        double& alpha = state == 1 ? par_.alpha1 : par_.alpha2;
        double d = state == 1 ? par_.d1 : par_.d2;
        detail::MhScalar& mh = state == 1 ? mh_alpha1_ : mh_alpha2_;
        auto target = [&](double a) {
            if (!(a > 0.0)) return neg_inf;
            double lp = gamma_log_prior(a, par_.prior.alpha_shape, par_.prior.alpha_rate);
            for (int grp = 1; grp <= 2; ++grp) lp += pdp_log_eppf(table_sizes(pdp_index(grp, state)), d, a);
            return lp;
        };
        mh_log_scale_step(alpha, target, mh);
    }

    void metropolis_rho() {
        auto target = [&](double rho) {
            if (!(rho > 0.0 && rho < 1.0)) return neg_inf;
            return markov_loglik(rho, par_.gamma, par_.eta);  // flat prior on (0,1)
        };
        mh_logit_step(par_.rho, target, mh_rho_);
    }

    void metropolis_gamma() {
        auto target = [&](double gamma) {
            if (!(gamma > 0.0 && gamma < 1.0)) return neg_inf;
            double lp = markov_loglik(par_.rho, gamma, par_.eta);
            if (lp == neg_inf) return neg_inf;
            if (par_.eta > 0.0) {
                if (par_.eta >= eta_upper_limit(gamma)) return neg_inf;
                // truncated-prior normalization of eta | gamma
                lp -= trunc_ig_log_mass(1.0 / std::max(1, p_ - 1), eta_upper_limit(gamma));
            }
            return lp;  // flat prior on (0,1)
        };
        mh_logit_step(par_.gamma, target, mh_gamma_);
    }

    template <class F>
    void mh_log_scale_step(double& x, F&& target, detail::MhScalar& mh) {
        double cur = std::log(x);
        double prop = cur + std::normal_distribution<double>(0.0, mh.scale())(rng_);
        double lp_cur = target(x) + cur;     // + log Jacobian
        double lp_prop = target(std::exp(prop)) + prop;
        bool accept = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng_)) <
                      lp_prop - lp_cur;
        if (accept) x = std::exp(prop);
        mh.proposed++;
        if (accept) mh.accepted++;
        if (adapting_) mh.adapt(accept, iter_done_ + 1);
    }

    template <class F>
    void mh_logit_step(double& x, F&& target, detail::MhScalar& mh) {
        double cur = logit(x);
        double prop = cur + std::normal_distribution<double>(0.0, mh.scale())(rng_);
        double xp = inv_logit(prop);
        double lp_cur = target(x) + std::log(x) + std::log1p(-x);
        double lp_prop = target(xp) + std::log(xp) + std::log1p(-xp);
        bool accept = std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng_)) <
                      lp_prop - lp_cur;
        if (accept) x = xp;
        mh.proposed++;
        if (accept) mh.accepted++;
        if (adapting_) mh.adapt(accept, iter_done_ + 1);
    }

    // ---- transition likelihoods -----------------------------------------

    static double log_prob(const ProbPair& pp, int label) {
        double p = label == 1 ? pp.p1 : pp.p2;
        return p > 0.0 ? std::log(p) : neg_inf;
    }

    double affiliation_or_zero(double e) const { return par_.eta > 0.0 ? std::exp(-e / par_.eta) : 0.0; }

    double clamp_affiliation(double r) const {
        // chain invariant keeps r < gamma; clamp guards rounding at the boundary
        return std::min(r, par_.gamma * (1.0 - 1e-12));
    }

    double eta_limit() const {
        double lim = eta_upper_limit(par_.gamma);
        if (par_.gamma < 1.0) {
            double e_min = *std::min_element(data_->e.begin(), data_->e.end());
            lim = std::min(lim, e_min / (-std::log(par_.gamma)));
        }
        return lim;
    }

    // Full transition likelihood of the observed (g, s) sequences.
    double markov_loglik(double rho, double gamma, double eta) const {
        double lp = log_prob(first_group_mass(rho), st_.g[0]);
        for (int j = 1; j < p_; ++j) {
            double r = eta > 0.0 ? std::exp(-data_->e[j - 1] / eta) : 0.0;
            if (r >= gamma) return neg_inf;
            double rho_c = 1.0 - rho;
            double f1 = st_.s[j - 1] == 1 ? rho_c + rho * r / gamma : rho_c - rho_c * r / gamma;
            double p = st_.g[j] == 1 ? f1 : 1.0 - f1;
            if (!(p > 0.0)) return neg_inf;
            lp += std::log(p);
        }
        for (int j = 0; j < p_; ++j) lp += log_prob(state_mass(st_.g[j], rho, gamma), st_.s[j]);
        return lp;
    }

    // Only the group factors depend on eta.
    double group_transition_loglik(double eta) const {
        double lp = 0.0;
        for (int j = 1; j < p_; ++j) {
            double r = eta > 0.0 ? std::exp(-data_->e[j - 1] / eta) : 0.0;
            if (r >= par_.gamma) return neg_inf;
            double rho_c = 1.0 - par_.rho;
            double f1 = st_.s[j - 1] == 1 ? rho_c + par_.rho * r / par_.gamma
                                          : rho_c - rho_c * r / par_.gamma;
            double p = st_.g[j] == 1 ? f1 : 1.0 - f1;
            if (!(p > 0.0)) return neg_inf;
            lp += std::log(p);
        }
        return lp;
    }

    // ---- truncated IG(1, b) prior helpers (CDF exp(-b/x)) ----------------

    static double trunc_ig_log_mass(double b, double lim) {
        if (!std::isfinite(lim)) return 0.0;
        return -b / lim;
    }

    static double trunc_ig_logpdf(double x, double b, double log_mass) {
        return std::log(b) - 2.0 * std::log(x) - b / x - log_mass;
    }

    static std::vector<double> trunc_ig_quantile_grid(double b, double lim, int K) {
        double c = std::isfinite(lim) ? std::exp(-b / lim) : 1.0;
        std::vector<double> grid(K);
        for (int k = 0; k < K; ++k) {
            double u = (k + 0.5) / K * c;
            grid[k] = -b / std::log(u);
        }
        return grid;
    }

    void check_finite_scalars(const char* where) const {
        for (double x : {par_.sigma2, par_.tau2_eps, par_.tau2_G, par_.mu_G, par_.beta, par_.alpha1,
                         par_.alpha2, par_.rho, par_.gamma}) {
            if (!std::isfinite(x)) throw numerical_error(std::string("non-finite parameter after ") + where);
        }
    }

    void record_row(double loglik) {
        TraceRow row;
        row.iter = iter_done_;
        row.loglik = loglik;
        row.q = st_.num_clusters();
        row.q1 = st_.num_clusters_state(1);
        row.q2 = st_.num_clusters_state(2);
        row.eta = par_.eta;
        row.d2 = par_.d2;
        row.sigma2 = par_.sigma2;
        row.tau2_eps = par_.tau2_eps;
        row.rho = par_.rho;
        row.gamma = par_.gamma;
        row.beta = par_.beta;
        row.mu_G = par_.mu_G;
        row.tau2_G = par_.tau2_G;
        row.p_eta_pos = cfg_.update.eta ? last_p_eta_pos_ : std::numeric_limits<double>::quiet_NaN();
        row.s.resize(p_);
        for (int j = 0; j < p_; ++j) {
            row.s[j] = static_cast<std::uint8_t>(st_.s[j]);
            if (st_.s[j] == 2) {
                trace_.s2_count[j] += 1;
                for (int t = 0; t < T_; ++t)
                    trace_.theta_sum[static_cast<std::size_t>(j) * T_ + t] += st_.theta(j, t);
            }
        }
        trace_.rows.push_back(std::move(row));
    }

    // ---- members ---------------------------------------------------------

    const Dataset* data_;
    ModelHyperParams par_;
    SamplerConfig cfg_;
    ChainState st_;
    Rng rng_;
    Trace trace_;

    int n_ = 0, p_ = 0, T_ = 0;
    std::vector<int> n_t_;

    std::vector<double> S_;    // p*T per-treatment residual sums
    std::vector<double> ell_;  // p*T*H pool likelihood kernels
    std::vector<double> logw_pool_;
    double log1m_wT_ = 0.0;
    bool pool_lik_dirty_ = true;
    double cached_sigma2_ = -1.0;
    int cached_H_ = -1;

    std::uint64_t iter_done_ = 0;
    bool adapting_ = false;
    double last_p_eta_pos_ = std::numeric_limits<double>::quiet_NaN();
    static constexpr int quad_points_ = 11;

    detail::MhScalar mh_beta_, mh_alpha1_, mh_alpha2_, mh_rho_, mh_gamma_;

    friend struct SamplerSerializer;
};

inline Trace run_chain(const Dataset& data, const ModelHyperParams& params, const SamplerConfig& config) {
    Sampler s(data, params, config);
    return s.run();
}

}  // namespace bayesdiff
