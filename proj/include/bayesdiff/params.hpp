#pragma once
// Fixed and sampled scalars of the model, with their prior settings.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace bayesdiff {

struct PriorConfig {
    // inverse-gamma (shape, rate) for the variance parameters
    double sigma2_shape = 2.0, sigma2_rate = 1.0;
    double tau2_eps_shape = 2.0, tau2_eps_rate = 1.0;
    double tau2_G_shape = 2.0, tau2_G_rate = 1.0;
    // gamma (shape, rate) for the mass parameters
    double beta_shape = 1.0, beta_rate = 1.0;
    double alpha_shape = 1.0, alpha_rate = 1.0;
    // normal prior on mu_G
    double mu_G_mean = 0.0, mu_G_var = 100.0;
    // mixture weights of the point-mass components for eta and d2
    double eta_zero_weight = 0.5;
    double d2_zero_weight = 0.5;
};

// Upper support limit for eta given gamma (sufficient validity condition for
// the group mass function); +inf when gamma == 1.
inline double eta_upper_limit(double gamma) {
    if (gamma >= 1.0) return std::numeric_limits<double>::infinity();
    return -1.0 / std::log(gamma);
}

struct ModelHyperParams {
    double rho = 0.5;    // baseline differential proportion
    double gamma = 0.5;  // group purity
    double eta = 0.0;    // affiliation range; 0 = no serial dependence
    double d1 = 0.0;     // non-differential discount, fixed at 0
    double d2 = 0.0;     // differential discount
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double beta = 1.0;   // mass of the nested DP G
    double mu_G = 0.0;
    double tau2_G = 1.0;
    double sigma2 = 1.0;
    double tau2_eps = 1.0;
    PriorConfig prior;

    void validate() const {
        if (!(rho > 0.0 && rho < 1.0)) throw std::domain_error("ModelHyperParams: rho outside (0,1)");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw std::domain_error("ModelHyperParams: gamma outside (0,1]");
        if (eta < 0.0) throw std::domain_error("ModelHyperParams: eta must be >= 0");
        if (eta > 0.0 && gamma < 1.0 && !(eta < eta_upper_limit(gamma)))
            throw std::domain_error("ModelHyperParams: eta >= -1/log(gamma)");
        if (d1 != 0.0) throw std::domain_error("ModelHyperParams: d1 must be 0");
        if (!(d2 >= 0.0 && d2 < 1.0)) throw std::domain_error("ModelHyperParams: d2 outside [0,1)");
        if (!(alpha1 > 0.0 && alpha2 > 0.0)) throw std::domain_error("ModelHyperParams: mass parameters must be positive");
        if (!(beta > 0.0)) throw std::domain_error("ModelHyperParams: beta must be positive");
        if (!(tau2_G > 0.0)) throw std::domain_error("ModelHyperParams: tau2_G must be positive");
        if (!(sigma2 > 0.0)) throw std::domain_error("ModelHyperParams: sigma2 must be positive");
        if (!(tau2_eps > 0.0)) throw std::domain_error("ModelHyperParams: tau2_eps must be positive");
    }
};

}  // namespace bayesdiff
