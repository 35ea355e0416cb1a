#pragma once
// File formats: dataset TSV + positions sidecar, trace CSV, truth CSV,
// detection report CSV, JSON config round-trips, and the binary checkpoint.
// All floating-point text output uses 17 significant digits so that
// write -> read -> write is byte-stable.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <type_traits>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bayesdiff/dataset.hpp"
#include "bayesdiff/errors.hpp"
#include "bayesdiff/inference.hpp"
#include "bayesdiff/mcmc.hpp"
#include "bayesdiff/simulate.hpp"

namespace bayesdiff {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace ioutil {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& tok, int row, int col, const std::string& what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        if (std::isnan(v)) throw input_error(what + ": NaN value at row " + std::to_string(row) +
                                             ", column " + std::to_string(col));
        return v;
    } catch (const input_error&) {
        throw;
    } catch (const std::exception&) {
        throw input_error(what + ": cannot parse '" + tok + "' at row " + std::to_string(row) +
                          ", column " + std::to_string(col));
    }
}

inline long parse_long(const std::string& tok, int row, int col, const std::string& what) {
    try {
        std::size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw input_error(what + ": cannot parse integer '" + tok + "' at row " + std::to_string(row) +
                          ", column " + std::to_string(col));
    }
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open " + path);
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write " + path);
    return out;
}

inline bool is_comment(const std::string& line) { return !line.empty() && line[0] == '#'; }

// First non-comment line (metadata lines start with '#').
inline bool getline_skip_comments(std::istream& in, std::string& line) {
    while (std::getline(in, line))
        if (!is_comment(line)) return true;
    return false;
}

}  // namespace ioutil

// ---------------------------------------------------------------------------
// Dataset TSV: header "sample_id  treatment  <probe ids...>"; one row per
// sample. Positions sidecar: "probe_id  position", ascending coordinates.
// ---------------------------------------------------------------------------

inline void write_dataset_tsv(const Dataset& d, std::ostream& out) {
    out << "sample_id\ttreatment";
    for (const auto& id : d.probe_ids) out << '\t' << id;
    out << '\n';
    for (int i = 0; i < d.n(); ++i) {
        out << d.sample_ids[i] << '\t' << d.t[i];
        for (int j = 0; j < d.p(); ++j) out << '\t' << fmt17(d.x(i, j));
        out << '\n';
    }
}

inline void write_positions_tsv(const Dataset& d, std::ostream& out) {
    out << "probe_id\tposition\n";
    for (int j = 0; j < d.p(); ++j) out << d.probe_ids[j] << '\t' << fmt17(d.positions[j]) << '\n';
}

inline void write_dataset(const Dataset& d, const std::string& tsv_path,
                          const std::string& positions_path) {
    auto out = ioutil::open_out(tsv_path);
    write_dataset_tsv(d, out);
    auto pos = ioutil::open_out(positions_path);
    write_positions_tsv(d, pos);
}

inline Dataset read_dataset(const std::string& tsv_path, const std::string& positions_path,
                            Transform kind) {
    auto in = ioutil::open_in(tsv_path);
    std::string line;
    if (!ioutil::getline_skip_comments(in, line)) throw input_error(tsv_path + ": empty file");
    auto header = ioutil::split(line, '\t');
    if (header.size() < 4 || header[0] != "sample_id" || header[1] != "treatment")
        throw input_error(tsv_path + ": header must be sample_id, treatment, then >= 2 probe columns");
    int p = static_cast<int>(header.size()) - 2;

    Dataset d;
    d.probe_ids.assign(header.begin() + 2, header.end());
    std::vector<double> values;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || ioutil::is_comment(line)) continue;
        auto tok = ioutil::split(line, '\t');
        if (static_cast<int>(tok.size()) != p + 2)
            throw input_error(tsv_path + ": row " + std::to_string(row) + " has " +
                              std::to_string(tok.size()) + " fields, expected " + std::to_string(p + 2));
        d.sample_ids.push_back(tok[0]);
        long t = ioutil::parse_long(tok[1], row, 2, tsv_path);
        if (t < 1) throw input_error(tsv_path + ": treatment label < 1 at row " + std::to_string(row));
        d.t.push_back(static_cast<int>(t));
        for (int j = 0; j < p; ++j) values.push_back(ioutil::parse_double(tok[j + 2], row, j + 3, tsv_path));
    }
    int n = static_cast<int>(d.sample_ids.size());
    if (n == 0) throw input_error(tsv_path + ": no sample rows");
    d.x = Matrix(n, p);
    d.x.a = std::move(values);

    auto pin = ioutil::open_in(positions_path);
    if (!ioutil::getline_skip_comments(pin, line)) throw input_error(positions_path + ": empty file");
    row = 1;
    while (std::getline(pin, line)) {
        ++row;
        if (line.empty() || ioutil::is_comment(line)) continue;
        auto tok = ioutil::split(line, '\t');
        if (tok.size() != 2)
            throw input_error(positions_path + ": row " + std::to_string(row) + " needs 2 fields");
        d.positions.push_back(ioutil::parse_double(tok[1], row, 2, positions_path));
    }
    if (static_cast<int>(d.positions.size()) != p)
        throw input_error(positions_path + ": " + std::to_string(d.positions.size()) +
                          " positions for " + std::to_string(p) + " probes");
    std::vector<double> gaps(p - 1);
    for (int j = 0; j + 1 < p; ++j) {
        gaps[j] = d.positions[j + 1] - d.positions[j];
        if (!(gaps[j] > 0.0))
            throw input_error(positions_path + ": positions must be strictly increasing (probe " +
                              std::to_string(j + 2) + ")");
    }
    d.e = scale_distances(std::move(gaps));
    d.num_treatments = 0;
    for (int ti : d.t) d.num_treatments = std::max(d.num_treatments, ti);
    d.transform_kind = kind;
    try {
        d.z = apply_transform(d.x, kind);
    } catch (const std::domain_error& ex) {
        throw input_error(tsv_path + ": " + ex.what());
    }
    d.b.assign(n, 0.0);
    try {
        d.validate();
    } catch (const std::domain_error& ex) {
        throw input_error(tsv_path + ": " + ex.what());
    }
    return d;
}

// ---------------------------------------------------------------------------
// Trace CSV: one row per kept iteration; per-probe states packed into a
// single digit string.
// ---------------------------------------------------------------------------

inline void write_trace_csv(const Trace& trace, std::ostream& out) {
    out << "iter,loglik,q,q1,q2,eta,d2,sigma2,tau2_eps,rho,gamma,beta,mu_G,tau2_G,p_eta_pos,s\n";
    for (const TraceRow& r : trace.rows) {
        out << r.iter << ',' << fmt17(r.loglik) << ',' << r.q << ',' << r.q1 << ',' << r.q2 << ','
            << fmt17(r.eta) << ',' << fmt17(r.d2) << ',' << fmt17(r.sigma2) << ','
            << fmt17(r.tau2_eps) << ',' << fmt17(r.rho) << ',' << fmt17(r.gamma) << ','
            << fmt17(r.beta) << ',' << fmt17(r.mu_G) << ',' << fmt17(r.tau2_G) << ','
            << fmt17(r.p_eta_pos) << ',';
        for (std::uint8_t s : r.s) out << static_cast<char>('0' + s);
        out << '\n';
    }
}

inline Trace read_trace_csv(std::istream& in) {
    Trace trace;
    std::string line;
    if (!ioutil::getline_skip_comments(in, line)) throw input_error("trace CSV: empty file");
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || ioutil::is_comment(line)) continue;
        auto tok = ioutil::split(line, ',');
        if (tok.size() != 16)
            throw input_error("trace CSV: row " + std::to_string(row) + " has " +
                              std::to_string(tok.size()) + " fields, expected 16");
        TraceRow r;
        r.iter = static_cast<std::uint64_t>(ioutil::parse_long(tok[0], row, 1, "trace CSV"));
        r.loglik = ioutil::parse_double(tok[1], row, 2, "trace CSV");
        r.q = static_cast<int>(ioutil::parse_long(tok[2], row, 3, "trace CSV"));
        r.q1 = static_cast<int>(ioutil::parse_long(tok[3], row, 4, "trace CSV"));
        r.q2 = static_cast<int>(ioutil::parse_long(tok[4], row, 5, "trace CSV"));
        r.eta = ioutil::parse_double(tok[5], row, 6, "trace CSV");
        r.d2 = ioutil::parse_double(tok[6], row, 7, "trace CSV");
        r.sigma2 = ioutil::parse_double(tok[7], row, 8, "trace CSV");
        r.tau2_eps = ioutil::parse_double(tok[8], row, 9, "trace CSV");
        r.rho = ioutil::parse_double(tok[9], row, 10, "trace CSV");
        r.gamma = ioutil::parse_double(tok[10], row, 11, "trace CSV");
        r.beta = ioutil::parse_double(tok[11], row, 12, "trace CSV");
        r.mu_G = ioutil::parse_double(tok[12], row, 13, "trace CSV");
        r.tau2_G = ioutil::parse_double(tok[13], row, 14, "trace CSV");
        r.p_eta_pos = tok[14] == "nan" || tok[14] == "-nan"
                          ? std::numeric_limits<double>::quiet_NaN()
                          : ioutil::parse_double(tok[14], row, 15, "trace CSV");
        for (char c : tok[15]) {
            if (c != '1' && c != '2')
                throw input_error("trace CSV: bad state digit at row " + std::to_string(row));
            r.s.push_back(static_cast<std::uint8_t>(c - '0'));
        }
        if (trace.p == 0) trace.p = static_cast<int>(r.s.size());
        else if (trace.p != static_cast<int>(r.s.size()))
            throw input_error("trace CSV: inconsistent state-string length at row " + std::to_string(row));
        trace.rows.push_back(std::move(r));
    }
    return trace;
}

// Conditional treatment-effect accumulators, one row per probe.
inline void write_theta_csv(const Trace& trace, std::ostream& out) {
    out << "probe,s2_count";
    for (int t = 1; t <= trace.T; ++t) out << ",theta_sum_" << t;
    out << '\n';
    for (int j = 0; j < trace.p; ++j) {
        out << (j + 1) << ',' << trace.s2_count[j];
        for (int t = 0; t < trace.T; ++t)
            out << ',' << fmt17(trace.theta_sum[static_cast<std::size_t>(j) * trace.T + t]);
        out << '\n';
    }
}

// Fills T, theta_sum, s2_count of a trace parsed from CSV.
inline void read_theta_csv(std::istream& in, Trace& trace) {
    std::string line;
    if (!ioutil::getline_skip_comments(in, line)) throw input_error("theta CSV: empty file");
    auto header = ioutil::split(line, ',');
    if (header.size() < 3) throw input_error("theta CSV: bad header");
    int T = static_cast<int>(header.size()) - 2;
    trace.T = T;
    trace.theta_sum.assign(static_cast<std::size_t>(trace.p) * T, 0.0);
    trace.s2_count.assign(trace.p, 0);
    int row = 1;
    int j = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || ioutil::is_comment(line)) continue;
        if (j >= trace.p) throw input_error("theta CSV: more rows than probes");
        auto tok = ioutil::split(line, ',');
        if (static_cast<int>(tok.size()) != T + 2)
            throw input_error("theta CSV: row " + std::to_string(row) + " has wrong field count");
        trace.s2_count[j] = ioutil::parse_long(tok[1], row, 2, "theta CSV");
        for (int t = 0; t < T; ++t)
            trace.theta_sum[static_cast<std::size_t>(j) * T + t] =
                ioutil::parse_double(tok[t + 2], row, t + 3, "theta CSV");
        ++j;
    }
    if (j != trace.p) throw input_error("theta CSV: expected " + std::to_string(trace.p) + " rows");
}

// ---------------------------------------------------------------------------
// Simulation truth CSV: leading "#xi" line with subject effects, then one row
// per probe.
// ---------------------------------------------------------------------------

inline void write_truth_csv(const SimTruth& truth, std::ostream& out) {
    out << "#xi";
    for (double x : truth.xi) out << ',' << fmt17(x);
    out << '\n';
    int T = truth.theta.cols;
    out << "probe,s,g,cluster";
    for (int t = 1; t <= T; ++t) out << ",theta_" << t;
    out << '\n';
    for (int j = 0; j < truth.theta.rows; ++j) {
        out << (j + 1) << ',' << truth.s[j] << ',' << truth.g[j] << ',' << truth.cluster[j];
        for (int t = 0; t < T; ++t) out << ',' << fmt17(truth.theta(j, t));
        out << '\n';
    }
}

inline SimTruth read_truth_csv(std::istream& in) {
    SimTruth truth;
    std::string line;
    bool found = false;
    while (std::getline(in, line)) {
        if (line.rfind("#xi", 0) == 0) {
            found = true;
            break;
        }
        if (!ioutil::is_comment(line)) break;
    }
    if (!found) throw input_error("truth CSV: missing #xi line");
    {
        auto tok = ioutil::split(line, ',');
        for (std::size_t k = 1; k < tok.size(); ++k)
            truth.xi.push_back(ioutil::parse_double(tok[k], 1, static_cast<int>(k), "truth CSV"));
    }
    if (!std::getline(in, line)) throw input_error("truth CSV: missing header");
    auto header = ioutil::split(line, ',');
    if (header.size() < 5) throw input_error("truth CSV: bad header");
    int T = static_cast<int>(header.size()) - 4;
    std::vector<double> theta;
    int row = 2;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || ioutil::is_comment(line)) continue;
        auto tok = ioutil::split(line, ',');
        if (static_cast<int>(tok.size()) != T + 4)
            throw input_error("truth CSV: row " + std::to_string(row) + " has wrong field count");
        truth.s.push_back(static_cast<int>(ioutil::parse_long(tok[1], row, 2, "truth CSV")));
        truth.g.push_back(static_cast<int>(ioutil::parse_long(tok[2], row, 3, "truth CSV")));
        truth.cluster.push_back(static_cast<int>(ioutil::parse_long(tok[3], row, 4, "truth CSV")));
        for (int t = 0; t < T; ++t)
            theta.push_back(ioutil::parse_double(tok[t + 4], row, t + 5, "truth CSV"));
    }
    truth.theta = Matrix(static_cast<int>(truth.s.size()), T);
    truth.theta.a = std::move(theta);
    return truth;
}

// ---------------------------------------------------------------------------
// Detection report CSV
// ---------------------------------------------------------------------------

inline void write_detection_csv(const PosteriorSummary& ps, const std::vector<std::string>& probe_ids,
                                const std::vector<double>& positions, std::ostream& out) {
    out << "probe_id,position,omega,detected,t_lo,t_hi,diff\n";
    int p = static_cast<int>(ps.omega.size());
    for (int j = 0; j < p; ++j) {
        out << probe_ids[j] << ',' << fmt17(positions[j]) << ',' << fmt17(ps.omega[j]) << ','
            << static_cast<int>(ps.fdr.detected[j]);
        if (ps.fdr.detected[j] && !ps.pairwise[j].degenerate)
            out << ',' << ps.pairwise[j].t_lo << ',' << ps.pairwise[j].t_hi << ','
                << fmt17(ps.pairwise[j].diff);
        else
            out << ",,,";
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// JSON round-trips for configuration types
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const PriorConfig& pr) {
    return {{"sigma2_shape", pr.sigma2_shape},   {"sigma2_rate", pr.sigma2_rate},
            {"tau2_eps_shape", pr.tau2_eps_shape}, {"tau2_eps_rate", pr.tau2_eps_rate},
            {"tau2_G_shape", pr.tau2_G_shape},   {"tau2_G_rate", pr.tau2_G_rate},
            {"beta_shape", pr.beta_shape},       {"beta_rate", pr.beta_rate},
            {"alpha_shape", pr.alpha_shape},     {"alpha_rate", pr.alpha_rate},
            {"mu_G_mean", pr.mu_G_mean},         {"mu_G_var", pr.mu_G_var},
            {"eta_zero_weight", pr.eta_zero_weight}, {"d2_zero_weight", pr.d2_zero_weight}};
}

inline void from_json(const nlohmann::json& jd, PriorConfig& pr) {
    pr.sigma2_shape = jd.value("sigma2_shape", pr.sigma2_shape);
    pr.sigma2_rate = jd.value("sigma2_rate", pr.sigma2_rate);
    pr.tau2_eps_shape = jd.value("tau2_eps_shape", pr.tau2_eps_shape);
    pr.tau2_eps_rate = jd.value("tau2_eps_rate", pr.tau2_eps_rate);
    pr.tau2_G_shape = jd.value("tau2_G_shape", pr.tau2_G_shape);
    pr.tau2_G_rate = jd.value("tau2_G_rate", pr.tau2_G_rate);
    pr.beta_shape = jd.value("beta_shape", pr.beta_shape);
    pr.beta_rate = jd.value("beta_rate", pr.beta_rate);
    pr.alpha_shape = jd.value("alpha_shape", pr.alpha_shape);
    pr.alpha_rate = jd.value("alpha_rate", pr.alpha_rate);
    pr.mu_G_mean = jd.value("mu_G_mean", pr.mu_G_mean);
    pr.mu_G_var = jd.value("mu_G_var", pr.mu_G_var);
    pr.eta_zero_weight = jd.value("eta_zero_weight", pr.eta_zero_weight);
    pr.d2_zero_weight = jd.value("d2_zero_weight", pr.d2_zero_weight);
}

inline nlohmann::json to_json(const ModelHyperParams& par) {
    return {{"rho", par.rho},       {"gamma", par.gamma},   {"eta", par.eta},
            {"d1", par.d1},         {"d2", par.d2},         {"alpha1", par.alpha1},
            {"alpha2", par.alpha2}, {"beta", par.beta},     {"mu_G", par.mu_G},
            {"tau2_G", par.tau2_G}, {"sigma2", par.sigma2}, {"tau2_eps", par.tau2_eps},
            {"prior", to_json(par.prior)}};
}

inline void from_json(const nlohmann::json& jd, ModelHyperParams& par) {
    par.rho = jd.value("rho", par.rho);
    par.gamma = jd.value("gamma", par.gamma);
    par.eta = jd.value("eta", par.eta);
    par.d1 = jd.value("d1", par.d1);
    par.d2 = jd.value("d2", par.d2);
    par.alpha1 = jd.value("alpha1", par.alpha1);
    par.alpha2 = jd.value("alpha2", par.alpha2);
    par.beta = jd.value("beta", par.beta);
    par.mu_G = jd.value("mu_G", par.mu_G);
    par.tau2_G = jd.value("tau2_G", par.tau2_G);
    par.sigma2 = jd.value("sigma2", par.sigma2);
    par.tau2_eps = jd.value("tau2_eps", par.tau2_eps);
    if (jd.contains("prior")) from_json(jd.at("prior"), par.prior);
}

inline nlohmann::json to_json(const SamplerConfig& cfg) {
    return {{"n_iter", cfg.n_iter},
            {"burn_in", cfg.burn_in},
            {"thin", cfg.thin},
            {"seed", cfg.seed},
            {"H_G", cfg.H_G},
            {"prop_scale_beta", cfg.prop_scale_beta},
            {"prop_scale_alpha", cfg.prop_scale_alpha},
            {"prop_scale_rho", cfg.prop_scale_rho},
            {"prop_scale_gamma", cfg.prop_scale_gamma},
            {"adapt", cfg.adapt},
            {"check_invariants", cfg.check_invariants}};
}

inline void from_json(const nlohmann::json& jd, SamplerConfig& cfg) {
    cfg.n_iter = jd.value("n_iter", cfg.n_iter);
    cfg.burn_in = jd.value("burn_in", cfg.burn_in);
    cfg.thin = jd.value("thin", cfg.thin);
    cfg.seed = jd.value("seed", cfg.seed);
    cfg.H_G = jd.value("H_G", cfg.H_G);
    cfg.prop_scale_beta = jd.value("prop_scale_beta", cfg.prop_scale_beta);
    cfg.prop_scale_alpha = jd.value("prop_scale_alpha", cfg.prop_scale_alpha);
    cfg.prop_scale_rho = jd.value("prop_scale_rho", cfg.prop_scale_rho);
    cfg.prop_scale_gamma = jd.value("prop_scale_gamma", cfg.prop_scale_gamma);
    cfg.adapt = jd.value("adapt", cfg.adapt);
    cfg.check_invariants = jd.value("check_invariants", cfg.check_invariants);
}

inline nlohmann::json to_json(const SimSpec& spec) {
    return {{"p", spec.p},
            {"T", spec.T},
            {"reps_per_treatment", spec.reps_per_treatment},
            {"sigma2", spec.sigma2},
            {"eta", spec.eta},
            {"alpha1", spec.alpha1},
            {"alpha2", spec.alpha2},
            {"d2", spec.d2},
            {"beta", spec.beta},
            {"gamma", spec.gamma},
            {"rho", spec.rho},
            {"mu_G", spec.mu_G},
            {"tau2_G", spec.tau2_G},
            {"tau2_eps", spec.tau2_eps},
            {"distance_model", distance_model_name(spec.distance_model)},
            {"distance_file", spec.distance_file},
            {"transform", transform_name(spec.transform)},
            {"seed", spec.seed},
            {"H_G", spec.H_G}};
}

inline void from_json(const nlohmann::json& jd, SimSpec& spec) {
    spec.p = jd.value("p", spec.p);
    spec.T = jd.value("T", spec.T);
    spec.reps_per_treatment = jd.value("reps_per_treatment", spec.reps_per_treatment);
    spec.sigma2 = jd.value("sigma2", spec.sigma2);
    spec.eta = jd.value("eta", spec.eta);
    spec.alpha1 = jd.value("alpha1", spec.alpha1);
    spec.alpha2 = jd.value("alpha2", spec.alpha2);
    spec.d2 = jd.value("d2", spec.d2);
    spec.beta = jd.value("beta", spec.beta);
    spec.gamma = jd.value("gamma", spec.gamma);
    spec.rho = jd.value("rho", spec.rho);
    spec.mu_G = jd.value("mu_G", spec.mu_G);
    spec.tau2_G = jd.value("tau2_G", spec.tau2_G);
    spec.tau2_eps = jd.value("tau2_eps", spec.tau2_eps);
    if (jd.contains("distance_model"))
        spec.distance_model = distance_model_from_name(jd.at("distance_model").get<std::string>());
    spec.distance_file = jd.value("distance_file", spec.distance_file);
    if (jd.contains("transform"))
        spec.transform = transform_from_name(jd.at("transform").get<std::string>());
    spec.seed = jd.value("seed", spec.seed);
    spec.H_G = jd.value("H_G", spec.H_G);
}

// Stable hash of a configuration's canonical JSON form.
inline std::uint64_t config_hash(const nlohmann::json& jd) { return fnv1a64(jd.dump()); }

// ---------------------------------------------------------------------------
// Binary checkpoint ("BDIF", version, little-endian PODs, length-prefixed
// arrays). Restores the sampler mid-run so a resumed chain is bit-identical
// to an uninterrupted one.
// ---------------------------------------------------------------------------

namespace ioutil {

template <class T>
void put(std::ostream& out, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw input_error("checkpoint: truncated file");
    return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    auto len = get<std::uint64_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw input_error("checkpoint: truncated string");
    return s;
}

template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> get_vec(std::istream& in) {
    auto len = get<std::uint64_t>(in);
    std::vector<T> v(len);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(len * sizeof(T)));
    if (!in) throw input_error("checkpoint: truncated array");
    return v;
}

inline std::uint64_t dataset_fingerprint(const Dataset& d) {
    std::string bytes(reinterpret_cast<const char*>(d.z.a.data()), d.z.a.size() * sizeof(double));
    return fnv1a64(bytes);
}

}  // namespace ioutil

inline constexpr char kCheckpointMagic[4] = {'B', 'D', 'I', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void Sampler::save_checkpoint(std::ostream& out) const {
    using namespace ioutil;
    out.write(kCheckpointMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::int32_t>(out, n_);
    put<std::int32_t>(out, p_);
    put<std::int32_t>(out, T_);
    put<std::uint64_t>(out, dataset_fingerprint(*data_));

    for (double x : {par_.rho, par_.gamma, par_.eta, par_.d1, par_.d2, par_.alpha1, par_.alpha2,
                     par_.beta, par_.mu_G, par_.tau2_G, par_.sigma2, par_.tau2_eps})
        put(out, x);
    const PriorConfig& pr = par_.prior;
    for (double x : {pr.sigma2_shape, pr.sigma2_rate, pr.tau2_eps_shape, pr.tau2_eps_rate,
                     pr.tau2_G_shape, pr.tau2_G_rate, pr.beta_shape, pr.beta_rate, pr.alpha_shape,
                     pr.alpha_rate, pr.mu_G_mean, pr.mu_G_var, pr.eta_zero_weight, pr.d2_zero_weight})
        put(out, x);

    put(out, cfg_.n_iter);
    put(out, cfg_.burn_in);
    put(out, cfg_.thin);
    put(out, cfg_.seed);
    put<std::int32_t>(out, cfg_.H_G);
    for (double x : {cfg_.prop_scale_beta, cfg_.prop_scale_alpha, cfg_.prop_scale_rho, cfg_.prop_scale_gamma})
        put(out, x);
    put<std::uint8_t>(out, cfg_.adapt);
    put<std::uint8_t>(out, cfg_.check_invariants);
    for (bool f : {cfg_.update.allocations, cfg_.update.atoms, cfg_.update.pool,
                   cfg_.update.subject_effects, cfg_.update.sigma2, cfg_.update.tau2_eps,
                   cfg_.update.base_measure, cfg_.update.beta_mass, cfg_.update.alpha_mass,
                   cfg_.update.rho, cfg_.update.gamma, cfg_.update.eta, cfg_.update.d2})
        put<std::uint8_t>(out, f);

    put(out, iter_done_);
    put(out, last_p_eta_pos_);
    {
        std::ostringstream oss;
        oss << rng_;
        put_string(out, oss.str());
    }
    for (const detail::MhScalar* mh : {&mh_beta_, &mh_alpha1_, &mh_alpha2_, &mh_rho_, &mh_gamma_}) {
        put(out, mh->log_scale);
        put<std::int64_t>(out, mh->accepted);
        put<std::int64_t>(out, mh->proposed);
    }

    put_vec(out, st_.g);
    put_vec(out, st_.s);
    put_vec(out, st_.v);
    for (int idx = 0; idx < 4; ++idx) {
        put<std::uint64_t>(out, st_.tables[idx].size());
        for (const Table& tb : st_.tables[idx]) {
            put<std::int32_t>(out, tb.count);
            put_vec(out, tb.coord);
        }
    }
    put_vec(out, st_.pool.value);
    put_vec(out, st_.pool.weight);
    put_vec(out, st_.pool.stick);
    put_vec(out, st_.xi);

    put<std::int32_t>(out, trace_.p);
    put<std::int32_t>(out, trace_.T);
    put_vec(out, trace_.theta_sum);
    put_vec(out, trace_.s2_count);
    put<std::uint64_t>(out, trace_.rows.size());
    for (const TraceRow& r : trace_.rows) {
        put(out, r.iter);
        put(out, r.loglik);
        put<std::int32_t>(out, r.q);
        put<std::int32_t>(out, r.q1);
        put<std::int32_t>(out, r.q2);
        for (double x : {r.eta, r.d2, r.sigma2, r.tau2_eps, r.rho, r.gamma, r.beta, r.mu_G, r.tau2_G,
                         r.p_eta_pos})
            put(out, x);
        put_vec(out, r.s);
    }
    if (!out) throw input_error("checkpoint: write failed");
}

inline Sampler Sampler::load_checkpoint(std::istream& in, const Dataset& data) {
    using namespace ioutil;
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw input_error("checkpoint: bad magic");
    if (get<std::uint32_t>(in) != kCheckpointVersion)
        throw input_error("checkpoint: unsupported version");
    auto n = get<std::int32_t>(in);
    auto p = get<std::int32_t>(in);
    auto T = get<std::int32_t>(in);
    auto fp = get<std::uint64_t>(in);
    if (n != data.n() || p != data.p() || T != data.num_treatments ||
        fp != dataset_fingerprint(data))
        throw input_error("checkpoint: dataset does not match");

    ModelHyperParams par;
    for (double* x : {&par.rho, &par.gamma, &par.eta, &par.d1, &par.d2, &par.alpha1, &par.alpha2,
                      &par.beta, &par.mu_G, &par.tau2_G, &par.sigma2, &par.tau2_eps})
        *x = get<double>(in);
    PriorConfig& pr = par.prior;
    for (double* x : {&pr.sigma2_shape, &pr.sigma2_rate, &pr.tau2_eps_shape, &pr.tau2_eps_rate,
                      &pr.tau2_G_shape, &pr.tau2_G_rate, &pr.beta_shape, &pr.beta_rate,
                      &pr.alpha_shape, &pr.alpha_rate, &pr.mu_G_mean, &pr.mu_G_var,
                      &pr.eta_zero_weight, &pr.d2_zero_weight})
        *x = get<double>(in);

    SamplerConfig cfg;
    cfg.n_iter = get<std::uint64_t>(in);
    cfg.burn_in = get<std::uint64_t>(in);
    cfg.thin = get<std::uint64_t>(in);
    cfg.seed = get<std::uint64_t>(in);
    cfg.H_G = get<std::int32_t>(in);
    for (double* x : {&cfg.prop_scale_beta, &cfg.prop_scale_alpha, &cfg.prop_scale_rho, &cfg.prop_scale_gamma})
        *x = get<double>(in);
    cfg.adapt = get<std::uint8_t>(in);
    cfg.check_invariants = get<std::uint8_t>(in);
    for (bool* f : {&cfg.update.allocations, &cfg.update.atoms, &cfg.update.pool,
                    &cfg.update.subject_effects, &cfg.update.sigma2, &cfg.update.tau2_eps,
                    &cfg.update.base_measure, &cfg.update.beta_mass, &cfg.update.alpha_mass,
                    &cfg.update.rho, &cfg.update.gamma, &cfg.update.eta, &cfg.update.d2})
        *f = get<std::uint8_t>(in);

    Sampler smp(data, par, cfg);
    smp.iter_done_ = get<std::uint64_t>(in);
    smp.last_p_eta_pos_ = get<double>(in);
    {
        std::istringstream iss(get_string(in));
        iss >> smp.rng_;
        if (!iss) throw input_error("checkpoint: bad RNG state");
    }
    for (detail::MhScalar* mh : {&smp.mh_beta_, &smp.mh_alpha1_, &smp.mh_alpha2_, &smp.mh_rho_, &smp.mh_gamma_}) {
        mh->log_scale = get<double>(in);
        mh->accepted = get<std::int64_t>(in);
        mh->proposed = get<std::int64_t>(in);
    }

    smp.st_.g = get_vec<int>(in);
    smp.st_.s = get_vec<int>(in);
    smp.st_.v = get_vec<int>(in);
    for (int idx = 0; idx < 4; ++idx) {
        auto num = get<std::uint64_t>(in);
        smp.st_.tables[idx].clear();
        for (std::uint64_t k = 0; k < num; ++k) {
            Table tb;
            tb.count = get<std::int32_t>(in);
            tb.coord = get_vec<int>(in);
            smp.st_.tables[idx].push_back(std::move(tb));
        }
    }
    smp.st_.pool.value = get_vec<double>(in);
    smp.st_.pool.weight = get_vec<double>(in);
    smp.st_.pool.stick = get_vec<double>(in);
    smp.st_.xi = get_vec<double>(in);

    smp.trace_.p = get<std::int32_t>(in);
    smp.trace_.T = get<std::int32_t>(in);
    smp.trace_.theta_sum = get_vec<double>(in);
    smp.trace_.s2_count = get_vec<long>(in);
    auto num_rows = get<std::uint64_t>(in);
    smp.trace_.rows.clear();
    for (std::uint64_t k = 0; k < num_rows; ++k) {
        TraceRow r;
        r.iter = get<std::uint64_t>(in);
        r.loglik = get<double>(in);
        r.q = get<std::int32_t>(in);
        r.q1 = get<std::int32_t>(in);
        r.q2 = get<std::int32_t>(in);
        for (double* x : {&r.eta, &r.d2, &r.sigma2, &r.tau2_eps, &r.rho, &r.gamma, &r.beta, &r.mu_G,
                          &r.tau2_G, &r.p_eta_pos})
            *x = get<double>(in);
        r.s = get_vec<std::uint8_t>(in);
        smp.trace_.rows.push_back(std::move(r));
    }

    smp.st_.validate();
    smp.refresh_residuals();
    smp.refresh_pool_lik();
    return smp;
}

}  // namespace bayesdiff
