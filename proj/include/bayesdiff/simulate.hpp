#pragma once
// Forward simulation of the full generative process: distance generation,
// Markov group/state sequences, PDP table growth, shared-pool atoms, and
// Gaussian emission. Defaults follow the simulation-study parameter table.

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bayesdiff/dataset.hpp"
#include "bayesdiff/errors.hpp"
#include "bayesdiff/math.hpp"
#include "bayesdiff/mcmc.hpp"
#include "bayesdiff/model.hpp"
#include "bayesdiff/params.hpp"
#include "bayesdiff/transition.hpp"

namespace bayesdiff {

enum class DistanceModel { lognormal_mimic, uniform, from_file };

inline std::string distance_model_name(DistanceModel m) {
    switch (m) {
        case DistanceModel::lognormal_mimic: return "lognormal_mimic";
        case DistanceModel::uniform: return "uniform";
        case DistanceModel::from_file: return "from_file";
    }
    throw std::logic_error("distance_model_name: unknown model");
}

inline DistanceModel distance_model_from_name(const std::string& s) {
    if (s == "lognormal_mimic") return DistanceModel::lognormal_mimic;
    if (s == "uniform") return DistanceModel::uniform;
    if (s == "from_file") return DistanceModel::from_file;
    throw std::domain_error("unknown distance model: " + s);
}

struct SimSpec {
    int p = 500;
    int T = 5;
    int reps_per_treatment = 4;  // n = T * reps_per_treatment
    double sigma2 = 0.64;
    double eta = 0.004;
    double alpha1 = 20.0;
    double alpha2 = 20.0;
    double d2 = 0.33;
    double beta = 20.0;
    double gamma = 0.9;
    double rho = 0.1;
    double mu_G = 0.0;
    double tau2_G = 1.0;
    double tau2_eps = 0.1225;
    DistanceModel distance_model = DistanceModel::lognormal_mimic;
    std::string distance_file;  // for from_file
    Transform transform = Transform::identity;
    std::uint64_t seed = 1;
    int H_G = 200;  // truncation of the realized pool; higher than inference default

    ModelHyperParams to_params() const {
        ModelHyperParams par;
        par.rho = rho;
        par.gamma = gamma;
        par.eta = eta;
        par.d2 = d2;
        par.alpha1 = alpha1;
        par.alpha2 = alpha2;
        par.beta = beta;
        par.mu_G = mu_G;
        par.tau2_G = tau2_G;
        par.sigma2 = sigma2;
        par.tau2_eps = tau2_eps;
        return par;
    }

    void validate() const {
        if (p < 2) throw std::domain_error("SimSpec: p must be >= 2");
        if (T < 2) throw std::domain_error("SimSpec: T must be >= 2");
        if (reps_per_treatment < 1) throw std::domain_error("SimSpec: reps_per_treatment must be >= 1");
        if (H_G < 2) throw std::domain_error("SimSpec: H_G must be >= 2");
        to_params().validate();
    }
};

struct SimTruth {
    std::vector<int> s;        // per-probe true state, 1/2
    std::vector<int> g;        // per-probe true group, 1/2
    std::vector<int> cluster;  // per-probe cluster label, 1-based
    Matrix theta;              // p x T true treatment effects
    std::vector<double> xi;    // true subject effects

    bool operator==(const SimTruth&) const = default;
};

// Heavy-tailed spacing stand-in: lognormal gaps with a relative floor so the
// smallest scaled gap stays a fixed fraction of the mean. Keeps the serial
// dependence well defined at the default eta/gamma after normalization.
inline std::vector<double> generate_distances(int p, DistanceModel model, Rng& rng,
                                              const std::string& file = "") {
    if (p < 2) throw std::domain_error("generate_distances: p must be >= 2");
    std::vector<double> gaps(p - 1);
    switch (model) {
        case DistanceModel::uniform:
            std::fill(gaps.begin(), gaps.end(), 1.0);
            break;
        case DistanceModel::lognormal_mimic: {
            const double sigma_log = 1.8;
            const double floor_frac = 0.25;
            double sum = 0.0;
            for (double& gp : gaps) {
                gp = std::exp(sigma_log * std::normal_distribution<double>(0.0, 1.0)(rng));
                sum += gp;
            }
            double floor = floor_frac * sum / gaps.size();
            for (double& gp : gaps) gp = std::max(gp, floor);
            break;
        }
        case DistanceModel::from_file: {
            std::ifstream in(file);
            if (!in) throw input_error("generate_distances: cannot open " + file);
            gaps.clear();
            double gp;
            while (in >> gp) gaps.push_back(gp);
            if (static_cast<int>(gaps.size()) < p - 1)
                throw input_error("generate_distances: " + file + " has " +
                                  std::to_string(gaps.size()) + " gaps, need " + std::to_string(p - 1));
            gaps.resize(p - 1);
            break;
        }
    }
    return scale_distances(std::move(gaps));
}

// Raises scaled gaps that would make the affiliation reach gamma, so that
// r = exp(-e/eta) < gamma holds on every edge, and renormalizes.
inline std::vector<double> enforce_affiliation_validity(std::vector<double> e, double eta, double gamma) {
    if (!(eta > 0.0) || gamma >= 1.0) return e;
    double thresh = eta * (-std::log(gamma)) * 1.05;
    for (int pass = 0; pass < 100; ++pass) {
        bool changed = false;
        for (double& gp : e) {
            if (gp < thresh) {
                gp = thresh;
                changed = true;
            }
        }
        double total = 0.0;
        for (double gp : e) total += gp;
        for (double& gp : e) gp /= total;
        if (!changed) break;
        bool ok = true;
        for (double gp : e)
            if (gp < thresh) ok = false;
        if (ok) break;
    }
    for (double gp : e)
        if (!(affiliation(gp, eta) < gamma))
            throw numerical_error("enforce_affiliation_validity: could not satisfy r < gamma");
    return e;
}

inline std::pair<Dataset, SimTruth> simulate_dataset(const SimSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    int p = spec.p, T = spec.T;
    int n = T * spec.reps_per_treatment;

    std::vector<double> e = generate_distances(p, spec.distance_model, rng, spec.distance_file);
    e = enforce_affiliation_validity(std::move(e), spec.eta, spec.gamma);

    PsiPool pool = prior_pool(spec.H_G, spec.beta, spec.mu_G, spec.tau2_G, rng);

    // Markov group/state sequence with PDP table growth per (g, s)
    std::vector<int> g(p), s(p), v(p);
    std::array<std::vector<int>, 4> counts{};
    std::array<std::vector<AtomValue>, 4> atoms{};
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    g[0] = unif(rng) < first_group_mass(spec.rho).p2 ? 2 : 1;
    for (int j = 0; j < p; ++j) {
        s[j] = unif(rng) < state_mass(g[j], spec.rho, spec.gamma).p2 ? 2 : 1;
        int idx = pdp_index(g[j], s[j]);
        double d = s[j] == 1 ? 0.0 : spec.d2;
        double alpha = s[j] == 1 ? spec.alpha1 : spec.alpha2;
        auto w = pdp_predictive_weights(counts[idx], d, alpha);
        int pick = sample_categorical(w, rng);
        if (pick == static_cast<int>(counts[idx].size())) {
            counts[idx].push_back(1);
            atoms[idx].push_back(s[j] == 1 ? sample_nondiff_atom(pool, T, rng)
                                           : sample_diff_atom(pool, T, rng));
        } else {
            counts[idx][pick] += 1;
        }
        v[j] = pick;
        if (j < p - 1) {
            double r = affiliation(e[j], spec.eta);
            g[j + 1] = unif(rng) < group_mass(s[j], r, spec.rho, spec.gamma).p2 ? 2 : 1;
        }
    }

    SimTruth truth;
    truth.s = s;
    truth.g = g;
    truth.theta = Matrix(p, T);
    for (int j = 0; j < p; ++j)
        for (int t = 0; t < T; ++t) truth.theta(j, t) = atoms[pdp_index(g[j], s[j])][v[j]].value[t];
    {
        std::array<std::vector<int>, 4> base{};
        int next = 1;
        for (int idx = 0; idx < 4; ++idx) {
            base[idx].resize(counts[idx].size());
            for (std::size_t k = 0; k < counts[idx].size(); ++k) base[idx][k] = next++;
        }
        truth.cluster.resize(p);
        for (int j = 0; j < p; ++j) truth.cluster[j] = base[pdp_index(g[j], s[j])][v[j]];
    }

    // subject effects (known offsets b_i = 0) and emission
    truth.xi.resize(n);
    std::vector<int> t_labels(n);
    for (int i = 0; i < n; ++i) {
        t_labels[i] = i / spec.reps_per_treatment + 1;
        truth.xi[i] = draw_normal(0.0, spec.tau2_eps, rng);
    }
    Matrix z(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j)
            z(i, j) = draw_normal(truth.xi[i] + truth.theta(j, t_labels[i] - 1), spec.sigma2, rng);

    Matrix x = inverse_transform(z, spec.transform);
    Dataset data = make_dataset(std::move(x), std::move(t_labels), e, spec.transform);
    return {std::move(data), std::move(truth)};
}

}  // namespace bayesdiff
