#pragma once
// Input data container: measurement matrix, treatment labels, scaled
// inter-probe distances, and the measurement transform.

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "bayesdiff/math.hpp"

namespace bayesdiff {

enum class Transform { identity, logit, log1p };

inline std::string transform_name(Transform k) {
    switch (k) {
        case Transform::identity: return "identity";
        case Transform::logit: return "logit";
        case Transform::log1p: return "log1p";
    }
    throw std::logic_error("transform_name: unknown transform");
}

inline Transform transform_from_name(const std::string& s) {
    if (s == "identity") return Transform::identity;
    if (s == "logit") return Transform::logit;
    if (s == "log1p") return Transform::log1p;
    throw std::domain_error("unknown transform: " + s);
}

// Elementwise forward transform; reports the offending entry on domain errors.
inline Matrix apply_transform(const Matrix& x, Transform kind) {
    Matrix z(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        for (int j = 0; j < x.cols; ++j) {
            double v = x(i, j);
            switch (kind) {
                case Transform::identity:
                    z(i, j) = v;
                    break;
                case Transform::logit:
                    if (!(v > 0.0 && v < 1.0))
                        throw std::domain_error("logit transform: entry (" + std::to_string(i) + "," +
                                                std::to_string(j) + ") outside (0,1)");
                    z(i, j) = std::log(v / (1.0 - v));
                    break;
                case Transform::log1p:
                    if (v < 0.0)
                        throw std::domain_error("log1p transform: entry (" + std::to_string(i) + "," +
                                                std::to_string(j) + ") is negative");
                    z(i, j) = std::log1p(v);
                    break;
            }
        }
    }
    return z;
}

inline Matrix inverse_transform(const Matrix& z, Transform kind) {
    Matrix x(z.rows, z.cols);
    for (int i = 0; i < z.rows; ++i) {
        for (int j = 0; j < z.cols; ++j) {
            double v = z(i, j);
            switch (kind) {
                case Transform::identity: x(i, j) = v; break;
                case Transform::logit: x(i, j) = 1.0 / (1.0 + std::exp(-v)); break;
                case Transform::log1p: x(i, j) = std::expm1(v); break;
            }
        }
    }
    return x;
}

// Rescale positive gaps to sum to 1; original units are the caller's business.
inline std::vector<double> scale_distances(std::vector<double> e) {
    double total = 0.0;
    for (double g : e) {
        if (!(g > 0.0)) throw std::domain_error("distances must be positive");
        total += g;
    }
    for (double& g : e) g /= total;
    return e;
}

struct Dataset {
    Matrix x;                    // raw measurements, n x p
    Matrix z;                    // transformed measurements
    std::vector<int> t;          // treatment labels in {1..T}, length n
    std::vector<double> e;       // p-1 scaled inter-probe distances, sum 1
    std::vector<double> b;       // known subject offsets, length n
    Transform transform_kind = Transform::identity;
    int num_treatments = 0;
    std::vector<std::string> sample_ids;
    std::vector<std::string> probe_ids;
    std::vector<double> positions;  // original probe coordinates, length p

    int n() const { return x.rows; }
    int p() const { return x.cols; }

    void validate() const {
        if (x.cols < 2) throw std::domain_error("Dataset: requires p >= 2");
        if (num_treatments < 2) throw std::domain_error("Dataset: requires T >= 2");
        if (static_cast<int>(t.size()) != x.rows) throw std::domain_error("Dataset: label length mismatch");
        if (static_cast<int>(b.size()) != x.rows) throw std::domain_error("Dataset: offset length mismatch");
        if (static_cast<int>(e.size()) != x.cols - 1) throw std::domain_error("Dataset: distance length mismatch");
        if (z.rows != x.rows || z.cols != x.cols) throw std::domain_error("Dataset: transform shape mismatch");
        std::set<int> seen;
        for (int ti : t) {
            if (ti < 1 || ti > num_treatments) throw std::domain_error("Dataset: treatment label out of range");
            seen.insert(ti);
        }
        if (static_cast<int>(seen.size()) != num_treatments)
            throw std::domain_error("Dataset: every treatment must appear at least once");
        double total = 0.0;
        for (double g : e) {
            if (!(g > 0.0)) throw std::domain_error("Dataset: non-positive inter-probe distance");
            total += g;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::domain_error("Dataset: distances must sum to 1");
        for (double v : x.a)
            if (std::isnan(v)) throw std::domain_error("Dataset: NaN measurement");
    }
};

// Assemble a dataset from raw pieces: applies the transform, scales the
// distances, and fills defaults for offsets and ids.
inline Dataset make_dataset(Matrix x, std::vector<int> t, std::vector<double> gaps,
                            Transform kind, std::vector<double> b = {}) {
    Dataset d;
    d.x = std::move(x);
    d.t = std::move(t);
    d.num_treatments = 0;
    for (int ti : d.t) d.num_treatments = std::max(d.num_treatments, ti);
    d.e = scale_distances(std::move(gaps));
    d.transform_kind = kind;
    d.z = apply_transform(d.x, kind);
    d.b = b.empty() ? std::vector<double>(d.x.rows, 0.0) : std::move(b);
    d.sample_ids.resize(d.x.rows);
    for (int i = 0; i < d.x.rows; ++i) d.sample_ids[i] = "s" + std::to_string(i + 1);
    d.probe_ids.resize(d.x.cols);
    for (int j = 0; j < d.x.cols; ++j) d.probe_ids[j] = "probe" + std::to_string(j + 1);
    d.positions.resize(d.x.cols);
    d.positions[0] = 0.0;
    for (int j = 1; j < d.x.cols; ++j) d.positions[j] = d.positions[j - 1] + d.e[j - 1];
    d.validate();
    return d;
}

}  // namespace bayesdiff
