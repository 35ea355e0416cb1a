#pragma once
// Closed-form group/state transition mathematics of the two-group, two-state
// Sticky PDP: affiliation decay, the state mass function Q_g, the
// distance-dependent group mass function F*, and the persistence identity.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "bayesdiff/math.hpp"

namespace bayesdiff {

// Distance-decaying serial dependence strength, r = exp(-e/eta); r = 0 when
// eta = 0 (no serial dependence).
inline double affiliation(double e_prev, double eta) {
    if (!(e_prev > 0.0)) throw std::domain_error("affiliation: distance must be positive");
    if (eta < 0.0) throw std::domain_error("affiliation: eta must be >= 0");
    if (eta == 0.0) return 0.0;
    return std::exp(-e_prev / eta);
}

struct ProbPair {
    double p1;  // probability of label 1
    double p2;  // probability of label 2
};

// Q_g: probability of the non-differential/differential state given the group.
// Group 1 favors state 1, group 2 favors state 2, by purity gamma.
inline ProbPair state_mass(int g, double rho, double gamma) {
    if (g != 1 && g != 2) throw std::domain_error("state_mass: group must be 1 or 2");
    if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("state_mass: rho outside (0,1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::domain_error("state_mass: gamma outside (0,1]");
    double rho_c = 1.0 - rho;
    double q1 = (g == 1) ? rho_c + rho * gamma : rho_c - rho_c * gamma;
    return {q1, 1.0 - q1};
}

// F0: group distribution for the first probe, 1 + Bernoulli(rho).
inline ProbPair first_group_mass(double rho) {
    if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("first_group_mass: rho outside (0,1)");
    return {1.0 - rho, rho};
}

// F*_{s,e}: group distribution given the previous probe's state and the
// affiliation of the connecting edge. Requires r < gamma for validity.
inline ProbPair group_mass(int s_prev, double r, double rho, double gamma) {
    if (s_prev != 1 && s_prev != 2) throw std::domain_error("group_mass: state must be 1 or 2");
    if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("group_mass: rho outside (0,1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw std::domain_error("group_mass: gamma outside (0,1]");
    if (r < 0.0) throw std::domain_error("group_mass: negative affiliation");
    if (r / gamma >= 1.0)
        throw std::invalid_argument("group_mass: r/gamma >= 1 violates mass-function validity");
    double rho_c = 1.0 - rho;
    double f1 = (s_prev == 1) ? rho_c + rho * r / gamma : rho_c - rho_c * r / gamma;
    return {f1, 1.0 - f1};
}

// P(s_j = s | s_{j-1} = s) under the composition of F* and Q; the gamma
// dependence cancels algebraically.
inline double persistence_prob(int s, double r, double rho) {
    if (s != 1 && s != 2) throw std::domain_error("persistence_prob: state must be 1 or 2");
    if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("persistence_prob: rho outside (0,1)");
    if (!(r >= 0.0 && r < 1.0)) throw std::domain_error("persistence_prob: r outside [0,1)");
    double rho_c = 1.0 - rho;
    return (s == 1) ? rho_c + rho * r : rho + rho_c * r;
}

// Stick-breaking weights for a PDP(d, alpha) truncated at H; the final weight
// absorbs the remaining stick so the vector sums to 1.
inline std::vector<double> stick_weights(double d, double alpha, int H, Rng& rng) {
    if (!(d >= 0.0 && d < 1.0)) throw std::domain_error("stick_weights: discount outside [0,1)");
    if (!(alpha > -d)) throw std::domain_error("stick_weights: alpha must exceed -d");
    if (H < 1) throw std::domain_error("stick_weights: H must be >= 1");
    std::vector<double> w(H);
    double remaining = 1.0;
    for (int h = 0; h < H - 1; ++h) {
        double v = draw_beta(1.0 - d, alpha + (h + 1) * d, rng);
        w[h] = v * remaining;
        remaining *= (1.0 - v);
    }
    w[H - 1] = remaining;
    return w;
}

}  // namespace bayesdiff
