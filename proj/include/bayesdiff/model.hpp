#pragma once
// Shared discrete effect pool G (truncated nested Dirichlet process) and the
// state-1 / state-2 atom constructions built on it.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "bayesdiff/math.hpp"
#include "bayesdiff/transition.hpp"

namespace bayesdiff {

// Finite truncation of the discrete distribution G: support values zeta_v with
// weights varpi_v. Stick variables are retained for the mass-parameter update.
struct PsiPool {
    std::vector<double> value;
    std::vector<double> weight;
    std::vector<double> stick;  // breaking proportions; stick.size() == value.size()

    int size() const { return static_cast<int>(value.size()); }

    void validate() const {
        if (value.empty()) throw std::logic_error("PsiPool: empty pool");
        if (weight.size() != value.size()) throw std::logic_error("PsiPool: size mismatch");
        double total = 0.0;
        for (double w : weight) {
            if (w < 0.0) throw std::logic_error("PsiPool: negative weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9) throw std::logic_error("PsiPool: weights do not sum to 1");
    }

    // Count of distinct support values carrying positive weight.
    int positive_support() const {
        int k = 0;
        for (double w : weight)
            if (w > 0.0) ++k;
        return k;
    }
};

inline PsiPool prior_pool(int H, double beta, double mu_G, double tau2_G, Rng& rng) {
    PsiPool pool;
    pool.value.resize(H);
    pool.stick.resize(H);
    for (int v = 0; v < H; ++v) pool.value[v] = draw_normal(mu_G, tau2_G, rng);
    double remaining = 1.0;
    pool.weight.resize(H);
    for (int v = 0; v < H; ++v) {
        double b = (v == H - 1) ? 1.0 : draw_beta(1.0, beta, rng);
        pool.stick[v] = b;
        pool.weight[v] = b * remaining;
        remaining *= (1.0 - b);
    }
    return pool;
}

struct AtomValue {
    std::vector<double> value;  // length T
    int state = 0;              // 1: all equal, 2: at least two unequal
};

// State from treatment effects: 1 iff all coordinates are equal
// (floating-point comparison).
inline int atom_state(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("atom_state: empty vector");
    for (std::size_t t = 1; t < v.size(); ++t)
        if (v[t] != v[0]) return 2;
    return 1;
}

inline int sample_pool_index(const PsiPool& pool, Rng& rng) {
    return sample_categorical(pool.weight, rng);
}

// Draw psi ~ G and replicate it across all T treatments.
inline AtomValue sample_nondiff_atom(const PsiPool& pool, int T, Rng& rng) {
    pool.validate();
    if (T < 1) throw std::domain_error("sample_nondiff_atom: T must be >= 1");
    double psi = pool.value[sample_pool_index(pool, rng)];
    return {std::vector<double>(T, psi), 1};
}

// Draw T coordinates iid from G, rejecting the all-equal outcome. Rejection
// realizes the 1 - sum_v varpi_v^T renormalization of the differential base.
inline AtomValue sample_diff_atom(const PsiPool& pool, int T, Rng& rng) {
    pool.validate();
    if (T < 2) throw std::domain_error("sample_diff_atom: requires T >= 2");
    bool feasible = false;
    double first = 0.0;
    bool seen = false;
    for (int v = 0; v < pool.size(); ++v) {
        if (pool.weight[v] <= 0.0) continue;
        if (!seen) {
            first = pool.value[v];
            seen = true;
        } else if (pool.value[v] != first) {
            feasible = true;
            break;
        }
    }
    if (!feasible)
        throw std::runtime_error("sample_diff_atom: pool support cannot produce unequal elements");
    AtomValue atom;
    atom.state = 2;
    atom.value.resize(T);
    for (;;) {
        for (int t = 0; t < T; ++t) atom.value[t] = pool.value[sample_pool_index(pool, rng)];
        if (atom_state(atom.value) == 2) return atom;
    }
}

}  // namespace bayesdiff
