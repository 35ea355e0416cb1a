#pragma once
// Small numeric helpers shared across the library: log-sum-exp, categorical
// draws from log weights, a plain row-major matrix, and seed splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace bayesdiff {

using Rng = std::mt19937_64;

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    double m = *std::max_element(xs.begin(), xs.end());
    if (m == neg_inf) return neg_inf;
    double sum = 0.0;
    for (double x : xs) sum += std::exp(x - m);
    return m + std::log(sum);
}

// Draws an index proportional to exp(logw[i]); tolerates -inf entries.
inline int sample_categorical_log(std::span<const double> logw, Rng& rng) {
    double norm = log_sum_exp(logw);
    if (norm == neg_inf)
        throw std::runtime_error("sample_categorical_log: all weights are zero");
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    double cum = 0.0;
    int last_valid = -1;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        if (logw[i] == neg_inf) continue;
        last_valid = static_cast<int>(i);
        cum += std::exp(logw[i] - norm);
        if (u <= cum) return static_cast<int>(i);
    }
    return last_valid;  // u landed in the rounding tail
}

inline int sample_categorical(std::span<const double> w, Rng& rng) {
    double total = 0.0;
    for (double x : w) {
        if (x < 0.0) throw std::domain_error("sample_categorical: negative weight");
        total += x;
    }
    if (total <= 0.0) throw std::runtime_error("sample_categorical: zero total weight");
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    double cum = 0.0;
    int last_valid = -1;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] <= 0.0) continue;
        last_valid = static_cast<int>(i);
        cum += w[i];
        if (u <= cum) return static_cast<int>(i);
    }
    return last_valid;
}

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

    std::span<double> row(int i) { return {a.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int i) const { return {a.data() + static_cast<std::size_t>(i) * cols, static_cast<std::size_t>(cols)}; }

    bool operator==(const Matrix&) const = default;
};

inline double draw_normal(double mean, double var, Rng& rng) {
    return std::normal_distribution<double>(mean, std::sqrt(var))(rng);
}

// InvGamma(shape a, rate b): density proportional to x^{-a-1} exp(-b/x).
inline double draw_inverse_gamma(double shape, double rate, Rng& rng) {
    if (shape <= 0.0 || rate <= 0.0) throw std::domain_error("draw_inverse_gamma: invalid parameters");
    double g = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
    if (g <= 0.0) g = std::numeric_limits<double>::min();
    return 1.0 / g;
}

inline double draw_gamma(double shape, double rate, Rng& rng) {
    if (shape <= 0.0 || rate <= 0.0) throw std::domain_error("draw_gamma: invalid parameters");
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double draw_beta(double a, double b, Rng& rng) {
    if (a <= 0.0 || b <= 0.0) throw std::domain_error("draw_beta: invalid parameters");
    double x = std::gamma_distribution<double>(a, 1.0)(rng);
    double y = std::gamma_distribution<double>(b, 1.0)(rng);
    if (x + y == 0.0) return 0.5;
    return x / (x + y);
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: argument outside (0,1)");
    return std::log(p / (1.0 - p));
}

inline double inv_logit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for worker k derived from a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t k) {
    return splitmix64(master ^ splitmix64(k + 1));
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace bayesdiff
