// Command-line driver: simulate -> fit -> detect -> evaluate.
// Exit codes: 0 success, 2 usage error, 3 input error, 4 numerical abort.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bayesdiff/dataset.hpp"
#include "bayesdiff/errors.hpp"
#include "bayesdiff/inference.hpp"
#include "bayesdiff/io.hpp"
#include "bayesdiff/mcmc.hpp"
#include "bayesdiff/simulate.hpp"
#include "bayesdiff/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bayesdiff;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string meta_line(std::uint64_t cfg_hash, std::uint64_t seed) {
    return "#config_hash=" + hex64(cfg_hash) + " seed=" + std::to_string(seed) + "\n";
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    auto in = ioutil::open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& ex) {
        throw input_error(path + ": " + ex.what());
    }
}

// Proportions get the logit transform, counts log1p, anything else identity.
Transform auto_transform(const Matrix& x) {
    bool proportions = true, counts = true;
    for (double v : x.a) {
        if (!(v > 0.0 && v < 1.0)) proportions = false;
        if (!(v >= 0.0) || v != std::floor(v)) counts = false;
    }
    if (proportions) return Transform::logit;
    if (counts) return Transform::log1p;
    return Transform::identity;
}

Transform resolve_transform(const std::string& name, const Matrix& x) {
    if (name == "auto") return auto_transform(x);
    return transform_from_name(name);
}

void run_jobs(int jobs, int total, const std::function<void(int)>& work) {
    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (int k = 0; k < total; ++k) work(k);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::exception_ptr first_error;
    for (int w = 0; w < std::min(jobs, total); ++w) {
        pool.emplace_back([&] {
            for (;;) {
                int k = next.fetch_add(1);
                if (k >= total) return;
                try {
                    work(k);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// Classic split-chain potential scale reduction factor.
double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        std::size_t h = c.size() / 2;
        if (h < 2) return std::numeric_limits<double>::quiet_NaN();
        halves.emplace_back(c.begin(), c.begin() + h);
        halves.emplace_back(c.begin() + h, c.begin() + 2 * h);
    }
    std::size_t m = halves.size(), len = halves[0].size();
    std::vector<double> means(m);
    double grand = 0.0, W = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        double mu = 0.0;
        for (double x : halves[k]) mu += x;
        mu /= len;
        means[k] = mu;
        grand += mu;
        double var = 0.0;
        for (double x : halves[k]) var += (x - mu) * (x - mu);
        W += var / (len - 1);
    }
    grand /= m;
    W /= m;
    double B = 0.0;
    for (double mu : means) B += (mu - grand) * (mu - grand);
    B *= static_cast<double>(len) / (m - 1);
    if (W <= 0.0) return B <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    double var_hat = (static_cast<double>(len - 1) / len) * W + B / len;
    return std::sqrt(var_hat / W);
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string out_dir;
    std::string config_path;
    int replicates = 20;
    std::uint64_t seed = 1;
    SimSpec spec;
};

void cmd_simulate(const SimulateArgs& a) {
    SimSpec spec = a.spec;
    spec.validate();
    fs::create_directories(a.out_dir);
    json cfg = {{"command", "simulate"}, {"replicates", a.replicates}, {"seed", a.seed},
                {"spec", to_json(spec)}};
    std::uint64_t hash = config_hash(cfg);
    json files = json::array();
    for (int k = 1; k <= a.replicates; ++k) {
        SimSpec rep = spec;
        rep.seed = derive_seed(a.seed, static_cast<std::uint64_t>(k));
        auto [data, truth] = simulate_dataset(rep);
        std::string stem = "rep" + std::to_string(k);
        {
            auto out = ioutil::open_out(a.out_dir + "/" + stem + ".tsv");
            out << meta_line(hash, rep.seed);
            write_dataset_tsv(data, out);
        }
        {
            auto out = ioutil::open_out(a.out_dir + "/" + stem + ".positions.tsv");
            out << meta_line(hash, rep.seed);
            write_positions_tsv(data, out);
        }
        {
            auto out = ioutil::open_out(a.out_dir + "/" + stem + ".truth.csv");
            out << meta_line(hash, rep.seed);
            write_truth_csv(truth, out);
        }
        files.push_back(stem + ".tsv");
    }
    json manifest = cfg;
    manifest["config_hash"] = hex64(hash);
    manifest["files"] = files;
    auto out = ioutil::open_out(a.out_dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
    std::string data;       // TSV file or directory of per-gene TSVs
    std::string positions;  // sidecar override (single-file mode)
    std::string out_dir;
    std::string config_path;
    std::string transform = "auto";
    std::uint64_t seed = 1;
    int chains = 1;
    int jobs = 1;
    int min_probes = 2;
    std::uint64_t checkpoint_every = 0;
    bool resume = false;
    bool check_invariants = false;
    SamplerConfig sampler;
    ModelHyperParams model;
};

std::string positions_path_for(const std::string& tsv_path) {
    fs::path pth(tsv_path);
    return (pth.parent_path() / pth.stem()).string() + ".positions.tsv";
}

void cmd_fit(const FitArgs& a) {
    a.sampler.validate();
    a.model.validate();
    std::vector<std::string> gene_files;
    if (fs::is_directory(a.data)) {
        for (const auto& entry : fs::directory_iterator(a.data)) {
            std::string name = entry.path().filename().string();
            if (entry.path().extension() == ".tsv" && name.find(".positions.") == std::string::npos)
                gene_files.push_back(entry.path().string());
        }
        std::sort(gene_files.begin(), gene_files.end());
        if (gene_files.empty()) throw input_error(a.data + ": no .tsv files found");
    } else if (fs::exists(a.data)) {
        gene_files.push_back(a.data);
    } else {
        throw input_error(a.data + ": no such file or directory");
    }
    fs::create_directories(a.out_dir);

    json cfg = {{"command", "fit"},       {"seed", a.seed},
                {"chains", a.chains},     {"transform", a.transform},
                {"min_probes", a.min_probes}, {"sampler", to_json(a.sampler)},
                {"model", to_json(a.model)}};
    std::uint64_t hash = config_hash(cfg);

    struct Job {
        int gene;
        int chain;  // 1-based
    };
    std::vector<Job> jobs_list;
    std::vector<Dataset> datasets(gene_files.size());
    std::vector<bool> skipped(gene_files.size(), false);
    for (std::size_t g = 0; g < gene_files.size(); ++g) {
        std::string pos = gene_files.size() == 1 && !a.positions.empty()
                              ? a.positions
                              : positions_path_for(gene_files[g]);
        Dataset probe_peek = read_dataset(gene_files[g], pos, Transform::identity);
        Transform kind = resolve_transform(a.transform, probe_peek.x);
        datasets[g] = kind == Transform::identity ? std::move(probe_peek)
                                                  : read_dataset(gene_files[g], pos, kind);
        if (datasets[g].p() < a.min_probes) {
            skipped[g] = true;
            continue;
        }
        for (int c = 1; c <= a.chains; ++c) jobs_list.push_back({static_cast<int>(g), c});
    }

    std::mutex io_mu;
    run_jobs(a.jobs, static_cast<int>(jobs_list.size()), [&](int k) {
        const Job& job = jobs_list[k];
        const Dataset& data = datasets[job.gene];
        std::string stem = fs::path(gene_files[job.gene]).stem().string();
        std::string base = a.out_dir + "/" + stem + ".chain" + std::to_string(job.chain);
        std::string ckpt_path = base + ".checkpoint.bin";

        std::optional<Sampler> smp;
        if (a.resume && fs::exists(ckpt_path)) {
            std::ifstream in(ckpt_path, std::ios::binary);
            smp.emplace(Sampler::load_checkpoint(in, data));
        } else {
            SamplerConfig cfg_c = a.sampler;
            cfg_c.seed = derive_seed(a.seed, static_cast<std::uint64_t>(job.gene) * 10007 +
                                                 static_cast<std::uint64_t>(job.chain));
            cfg_c.check_invariants = a.check_invariants;
            smp.emplace(data, a.model, cfg_c);
        }
        auto save_ckpt = [&](const Sampler& s) {
            std::ofstream out(ckpt_path + ".tmp", std::ios::binary);
            s.save_checkpoint(out);
            out.close();
            fs::rename(ckpt_path + ".tmp", ckpt_path);
        };
        const Trace& trace = smp->run_with_callback(a.checkpoint_every, save_ckpt);
        save_ckpt(*smp);
        {
            auto out = ioutil::open_out(base + ".trace.csv");
            out << meta_line(hash, smp->config().seed);
            write_trace_csv(trace, out);
        }
        {
            auto out = ioutil::open_out(base + ".theta.csv");
            out << meta_line(hash, smp->config().seed);
            write_theta_csv(trace, out);
        }
        std::lock_guard<std::mutex> lk(io_mu);
        std::cout << stem << " chain " << job.chain << ": done (" << trace.rows.size()
                  << " kept iterations)\n";
    });

    // per-gene summary across chains + convergence diagnostics
    for (std::size_t g = 0; g < gene_files.size(); ++g) {
        if (skipped[g]) continue;
        std::string stem = fs::path(gene_files[g]).stem().string();
        Trace combined;
        std::vector<std::vector<double>> sigma2_chains, loglik_chains, eta_pos_chains;
        for (int c = 1; c <= a.chains; ++c) {
            std::string base = a.out_dir + "/" + stem + ".chain" + std::to_string(c);
            auto tin = ioutil::open_in(base + ".trace.csv");
            Trace tr = read_trace_csv(tin);
            auto thin_f = ioutil::open_in(base + ".theta.csv");
            read_theta_csv(thin_f, tr);
            std::vector<double> s2, ll, ep;
            for (const TraceRow& r : tr.rows) {
                s2.push_back(r.sigma2);
                ll.push_back(r.loglik);
                ep.push_back(r.eta > 0.0 ? 1.0 : 0.0);
            }
            sigma2_chains.push_back(std::move(s2));
            loglik_chains.push_back(std::move(ll));
            eta_pos_chains.push_back(std::move(ep));
            if (c == 1) {
                combined = std::move(tr);
            } else {
                combined.rows.insert(combined.rows.end(), tr.rows.begin(), tr.rows.end());
                for (std::size_t i = 0; i < combined.theta_sum.size(); ++i)
                    combined.theta_sum[i] += tr.theta_sum[i];
                for (int j = 0; j < combined.p; ++j) combined.s2_count[j] += tr.s2_count[j];
            }
        }
        PosteriorSummary ps = make_posterior_summary(combined, 0.05);
        {
            auto out = ioutil::open_out(a.out_dir + "/" + stem + ".summary.csv");
            out << meta_line(hash, a.seed);
            write_detection_csv(ps, datasets[g].probe_ids, datasets[g].positions, out);
        }
        json manifest = {{"command", "fit"},
                         {"gene", stem},
                         {"config_hash", hex64(hash)},
                         {"seed", a.seed},
                         {"chains", a.chains},
                         {"kept_iterations", combined.rows.size()},
                         {"transform", transform_name(datasets[g].transform_kind)},
                         {"logbf_bound", ps.logbf.bound},
                         {"logbf_favored", ps.logbf.favored == EtaComponent::eta_positive
                                               ? "eta_positive"
                                               : "eta_zero"},
                         {"logbf_interval_method", "batch_means"},
                         {"logbf_ci", {ps.logbf.batch_ci_lo, ps.logbf.batch_ci_hi}},
                         {"logbf_clipped", ps.logbf.clipped},
                         {"b_star", ps.fdr.b_star}};
        if (a.chains >= 2) {
            manifest["rhat_sigma2"] = split_rhat(sigma2_chains);
            manifest["rhat_loglik"] = split_rhat(loglik_chains);
            manifest["rhat_eta_occupancy"] = split_rhat(eta_pos_chains);
        }
        auto mout = ioutil::open_out(a.out_dir + "/" + stem + ".manifest.json");
        mout << manifest.dump(2) << "\n";
    }
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

struct DetectArgs {
    std::vector<std::string> traces;
    std::vector<std::string> thetas;
    std::string positions;
    std::string out_dir = ".";
    std::string name = "detect";
    double q0 = 0.05;
};

void cmd_detect(const DetectArgs& a) {
    if (a.traces.empty()) throw input_error("detect: no trace files given");
    if (!a.thetas.empty() && a.thetas.size() != a.traces.size())
        throw input_error("detect: --theta count must match --trace count");
    Trace combined;
    for (std::size_t k = 0; k < a.traces.size(); ++k) {
        auto tin = ioutil::open_in(a.traces[k]);
        Trace tr = read_trace_csv(tin);
        std::string theta_path = !a.thetas.empty()
                                     ? a.thetas[k]
                                     : std::regex_replace(a.traces[k], std::regex("\\.trace\\.csv$"),
                                                          ".theta.csv");
        auto thin_f = ioutil::open_in(theta_path);
        read_theta_csv(thin_f, tr);
        if (k == 0) {
            combined = std::move(tr);
        } else {
            if (tr.p != combined.p || tr.T != combined.T)
                throw input_error("detect: trace shape mismatch in " + a.traces[k]);
            combined.rows.insert(combined.rows.end(), tr.rows.begin(), tr.rows.end());
            for (std::size_t i = 0; i < combined.theta_sum.size(); ++i)
                combined.theta_sum[i] += tr.theta_sum[i];
            for (int j = 0; j < combined.p; ++j) combined.s2_count[j] += tr.s2_count[j];
        }
    }
    if (combined.empty()) throw input_error("detect: trace is empty");

    std::vector<std::string> probe_ids(combined.p);
    std::vector<double> positions(combined.p);
    if (!a.positions.empty()) {
        auto pin = ioutil::open_in(a.positions);
        std::string line;
        if (!ioutil::getline_skip_comments(pin, line)) throw input_error(a.positions + ": empty file");
        int j = 0;
        while (std::getline(pin, line)) {
            if (line.empty() || ioutil::is_comment(line)) continue;
            auto tok = ioutil::split(line, '\t');
            if (tok.size() != 2 || j >= combined.p)
                throw input_error(a.positions + ": does not match trace probe count");
            probe_ids[j] = tok[0];
            positions[j] = ioutil::parse_double(tok[1], j + 2, 2, a.positions);
            ++j;
        }
        if (j != combined.p) throw input_error(a.positions + ": does not match trace probe count");
    } else {
        for (int j = 0; j < combined.p; ++j) {
            probe_ids[j] = "probe" + std::to_string(j + 1);
            positions[j] = j;
        }
    }

    json cfg = {{"command", "detect"}, {"q0", a.q0}, {"traces", a.traces}};
    std::uint64_t hash = config_hash(cfg);
    PosteriorSummary ps = make_posterior_summary(combined, a.q0);
    fs::create_directories(a.out_dir);
    {
        auto out = ioutil::open_out(a.out_dir + "/" + a.name + ".detection.csv");
        out << meta_line(hash, 0);
        write_detection_csv(ps, probe_ids, positions, out);
    }
    json manifest = {{"command", "detect"},
                     {"config_hash", hex64(hash)},
                     {"q0", a.q0},
                     {"b_star", ps.fdr.b_star},
                     {"kept_iterations", combined.rows.size()},
                     {"logbf_bound", ps.logbf.bound},
                     {"logbf_favored", ps.logbf.favored == EtaComponent::eta_positive
                                           ? "eta_positive"
                                           : "eta_zero"},
                     {"logbf_interval_method", "batch_means"},
                     {"logbf_ci", {ps.logbf.batch_ci_lo, ps.logbf.batch_ci_hi}},
                     {"logbf_clipped", ps.logbf.clipped}};
    auto mout = ioutil::open_out(a.out_dir + "/" + a.name + ".manifest.json");
    mout << manifest.dump(2) << "\n";
    std::cout << "detected " << ps.fdr.b_star << " of " << combined.p << " probes at q0=" << a.q0
              << "\n";
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string data_dir;
    std::string fit_dir;
    std::string out_dir;
    std::string transform = "auto";
    bool roc_points = false;
};

void cmd_evaluate(const EvaluateArgs& a) {
    std::vector<std::pair<int, std::string>> reps;  // (k, stem)
    std::regex rep_re("^rep([0-9]+)$");
    for (const auto& entry : fs::directory_iterator(a.data_dir)) {
        std::string stem = entry.path().stem().string();
        std::smatch m;
        if (entry.path().extension() == ".tsv" && std::regex_match(stem, m, rep_re))
            reps.emplace_back(std::stoi(m[1].str()), stem);
    }
    std::sort(reps.begin(), reps.end());
    if (reps.empty()) throw input_error(a.data_dir + ": no rep<k>.tsv datasets found");
    std::string out_dir = a.out_dir.empty() ? a.fit_dir : a.out_dir;
    fs::create_directories(out_dir);

    const std::vector<std::string> methods = {"bayesdiff", "anova", "kruskal_wallis"};
    std::map<std::string, std::vector<RocResult>> rocs;
    json cfg = {{"command", "evaluate"}, {"data_dir", a.data_dir}, {"fit_dir", a.fit_dir}};
    std::uint64_t hash = config_hash(cfg);

    auto csv = ioutil::open_out(out_dir + "/evaluate.csv");
    csv << meta_line(hash, 0);
    csv << "method,replicate,auc,auc20,auc10\n";

    for (const auto& [k, stem] : reps) {
        Dataset probe_peek =
            read_dataset(a.data_dir + "/" + stem + ".tsv",
                         a.data_dir + "/" + stem + ".positions.tsv", Transform::identity);
        Transform kind = resolve_transform(a.transform, probe_peek.x);
        Dataset data = kind == Transform::identity
                           ? std::move(probe_peek)
                           : read_dataset(a.data_dir + "/" + stem + ".tsv",
                                          a.data_dir + "/" + stem + ".positions.tsv", kind);
        auto tin = ioutil::open_in(a.data_dir + "/" + stem + ".truth.csv");
        SimTruth truth = read_truth_csv(tin);
        if (truth.theta.rows != data.p())
            throw input_error(stem + ": truth/dataset probe count mismatch");

        // pooled chains
        Trace combined;
        bool first = true;
        for (int c = 1;; ++c) {
            std::string base = a.fit_dir + "/" + stem + ".chain" + std::to_string(c);
            if (!fs::exists(base + ".trace.csv")) break;
            auto trin = ioutil::open_in(base + ".trace.csv");
            Trace tr = read_trace_csv(trin);
            if (first) {
                combined = std::move(tr);
                first = false;
            } else {
                combined.rows.insert(combined.rows.end(), tr.rows.begin(), tr.rows.end());
            }
        }
        if (first) throw input_error(a.fit_dir + ": no trace files for " + stem);

        std::map<std::string, std::vector<double>> scores;
        scores["bayesdiff"] = posterior_diff_prob(combined);
        std::vector<double> column(data.n());
        for (int j = 0; j < data.p(); ++j) {
            for (int i = 0; i < data.n(); ++i) column[i] = data.z(i, j);
            scores["anova"].push_back(1.0 - anova_pvalue(column, data.t));
            scores["kruskal_wallis"].push_back(1.0 - kruskal_wallis_pvalue(column, data.t));
        }
        bool two_class = false;
        for (int sj : truth.s)
            if (sj != truth.s[0]) two_class = true;
        if (!two_class) {
            std::cerr << "warning: " << stem << " truth has a single class; skipped\n";
            continue;
        }
        for (const auto& method : methods) {
            RocResult roc = roc_and_auc(scores[method], truth.s);
            csv << method << ',' << k << ',' << fmt17(roc.auc) << ',' << fmt17(roc.auc20) << ','
                << fmt17(roc.auc10) << '\n';
            if (a.roc_points) {
                auto rout = ioutil::open_out(out_dir + "/" + method + "." + stem + ".roc.csv");
                rout << "fpr,tpr\n";
                for (const RocPoint& pt : roc.points)
                    rout << fmt17(pt.fpr) << ',' << fmt17(pt.tpr) << '\n';
            }
            rocs[method].push_back(std::move(roc));
        }
    }

    if (rocs["bayesdiff"].empty())
        throw input_error("evaluate: no replicate carried both truth classes");
    json means;
    for (const auto& method : methods) {
        double auc = 0, auc20 = 0, auc10 = 0;
        for (const RocResult& r : rocs[method]) {
            auc += r.auc;
            auc20 += r.auc20;
            auc10 += r.auc10;
        }
        int m = static_cast<int>(rocs[method].size());
        csv << method << ",mean," << fmt17(auc / m) << ',' << fmt17(auc20 / m) << ','
            << fmt17(auc10 / m) << '\n';
        means[method] = {{"auc", auc / m}, {"auc20", auc20 / m}, {"auc10", auc10 / m}};

        // vertical ROC averaging on a fixed FPR grid
        auto rout = ioutil::open_out(out_dir + "/" + method + ".roc_mean.csv");
        rout << "fpr,mean_tpr\n";
        for (int gi = 0; gi <= 100; ++gi) {
            double fpr = gi / 100.0;
            double tpr_sum = 0.0;
            for (const RocResult& r : rocs[method]) {
                double tpr = 0.0;
                for (std::size_t q = 1; q < r.points.size(); ++q) {
                    if (r.points[q].fpr >= fpr) {
                        const RocPoint& lo = r.points[q - 1];
                        const RocPoint& hi = r.points[q];
                        tpr = hi.fpr == lo.fpr
                                  ? hi.tpr
                                  : lo.tpr + (hi.tpr - lo.tpr) * (fpr - lo.fpr) / (hi.fpr - lo.fpr);
                        break;
                    }
                    tpr = r.points[q].tpr;
                }
                tpr_sum += tpr;
            }
            rout << fmt17(fpr) << ',' << fmt17(tpr_sum / rocs[method].size()) << '\n';
        }
    }
    json manifest = {{"command", "evaluate"},
                     {"config_hash", hex64(hash)},
                     {"replicates", reps.size()},
                     {"roc_averaging", "vertical_fixed_fpr_grid"},
                     {"means", means}};
    auto mout = ioutil::open_out(out_dir + "/evaluate.manifest.json");
    mout << manifest.dump(2) << "\n";
    std::cout << "evaluated " << reps.size() << " replicates; mean AUC bayesdiff="
              << means["bayesdiff"]["auc"].get<double>() << " anova="
              << means["anova"]["auc"].get<double>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Differential-probe detection with a serially dependent nonparametric mixture"};
    app.require_subcommand(1);

    SimulateArgs sim;
    FitArgs fit;
    DetectArgs det;
    EvaluateArgs eval;

    auto* sim_cmd = app.add_subcommand("simulate", "Generate synthetic replicate datasets");
    sim_cmd->add_option("--out-dir", sim.out_dir, "Output directory")->required()
        ->envname("BAYESDIFF_OUT_DIR");
    sim_cmd->add_option("--config", sim.config_path, "JSON config file (key: spec)")
        ->envname("BAYESDIFF_CONFIG");
    sim_cmd->add_option("--replicates", sim.replicates, "Number of datasets")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--seed", sim.seed, "Master seed")->envname("BAYESDIFF_SEED");
    std::string dist_name, sim_transform;
    auto* o_p = sim_cmd->add_option("--p", sim.spec.p, "Number of probes");
    auto* o_T = sim_cmd->add_option("--T", sim.spec.T, "Number of treatments");
    auto* o_reps = sim_cmd->add_option("--reps", sim.spec.reps_per_treatment, "Samples per treatment");
    auto* o_sigma2 = sim_cmd->add_option("--sigma2", sim.spec.sigma2, "Emission variance");
    auto* o_eta = sim_cmd->add_option("--eta", sim.spec.eta, "Serial dependence range (0 = none)");
    auto* o_dist = sim_cmd->add_option("--distance-model", dist_name, "lognormal_mimic|uniform|from_file");
    auto* o_dfile = sim_cmd->add_option("--distance-file", sim.spec.distance_file, "Gap file for from_file");
    auto* o_tf = sim_cmd->add_option("--transform", sim_transform, "identity|logit|log1p");

    auto* fit_cmd = app.add_subcommand("fit", "Run the MCMC sampler on dataset(s)");
    fit_cmd->add_option("--data", fit.data, "Dataset TSV or directory of per-gene TSVs")->required()
        ->envname("BAYESDIFF_DATA");
    fit_cmd->add_option("--positions", fit.positions, "Positions sidecar (single-file mode)");
    fit_cmd->add_option("--out-dir", fit.out_dir, "Output directory")->required()
        ->envname("BAYESDIFF_OUT_DIR");
    fit_cmd->add_option("--config", fit.config_path, "JSON config file (keys: sampler, model)")
        ->envname("BAYESDIFF_CONFIG");
    fit_cmd->add_option("--seed", fit.seed, "Master seed")->envname("BAYESDIFF_SEED");
    fit_cmd->add_option("--chains", fit.chains, "Chains per gene")->check(CLI::PositiveNumber)
        ->envname("BAYESDIFF_CHAINS");
    auto* o_iters = fit_cmd->add_option("--iters", fit.sampler.n_iter, "Total iterations")
        ->envname("BAYESDIFF_ITERS");
    auto* o_burn = fit_cmd->add_option("--burnin", fit.sampler.burn_in, "Burn-in iterations")
        ->envname("BAYESDIFF_BURNIN");
    auto* o_thin = fit_cmd->add_option("--thin", fit.sampler.thin, "Thinning stride")
        ->envname("BAYESDIFF_THIN");
    fit_cmd->add_option("--transform", fit.transform, "auto|identity|logit|log1p")
        ->envname("BAYESDIFF_TRANSFORM");
    fit_cmd->add_option("--jobs", fit.jobs, "Worker threads")->check(CLI::PositiveNumber)
        ->envname("BAYESDIFF_JOBS");
    fit_cmd->add_option("--min-probes", fit.min_probes, "Skip genes with fewer probes");
    fit_cmd->add_option("--checkpoint-every", fit.checkpoint_every,
                        "Write a checkpoint every N iterations (0 = only at end)");
    fit_cmd->add_flag("--resume", fit.resume, "Resume from existing checkpoints");
    fit_cmd->add_flag("--check-invariants", fit.check_invariants, "Validate chain state every sweep");

    auto* det_cmd = app.add_subcommand("detect", "Bayesian FDR detection from saved traces");
    det_cmd->add_option("--trace", det.traces, "Trace CSV file(s)")->required();
    det_cmd->add_option("--theta", det.thetas, "Matching theta CSV file(s)");
    det_cmd->add_option("--positions", det.positions, "Positions sidecar for probe ids");
    det_cmd->add_option("--out-dir", det.out_dir, "Output directory")->envname("BAYESDIFF_OUT_DIR");
    det_cmd->add_option("--name", det.name, "Output file stem");
    det_cmd->add_option("--q0", det.q0, "Target Bayesian FDR")->envname("BAYESDIFF_Q0");

    auto* eval_cmd = app.add_subcommand("evaluate", "Score fits against simulation truth");
    eval_cmd->add_option("--data-dir", eval.data_dir, "Directory with rep<k>.tsv + truths")->required();
    eval_cmd->add_option("--fit-dir", eval.fit_dir, "Directory with rep<k>.chain<c>.trace.csv")->required();
    eval_cmd->add_option("--out-dir", eval.out_dir, "Output directory (default: fit dir)");
    eval_cmd->add_option("--transform", eval.transform, "auto|identity|logit|log1p");
    eval_cmd->add_flag("--roc-points", eval.roc_points, "Also write per-replicate ROC point files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim_cmd->parsed()) {
            json cfg = load_config_file(sim.config_path);
            if (cfg.contains("spec")) {
                // config file first, explicit flags win
                SimSpec merged;
                from_json(cfg.at("spec"), merged);
                if (o_p->count()) merged.p = sim.spec.p;
                if (o_T->count()) merged.T = sim.spec.T;
                if (o_reps->count()) merged.reps_per_treatment = sim.spec.reps_per_treatment;
                if (o_sigma2->count()) merged.sigma2 = sim.spec.sigma2;
                if (o_eta->count()) merged.eta = sim.spec.eta;
                if (o_dfile->count()) merged.distance_file = sim.spec.distance_file;
                sim.spec = merged;
            }
            if (o_dist->count()) sim.spec.distance_model = distance_model_from_name(dist_name);
            if (o_tf->count()) sim.spec.transform = transform_from_name(sim_transform);
            cmd_simulate(sim);
        } else if (fit_cmd->parsed()) {
            json cfg = load_config_file(fit.config_path);
            if (cfg.contains("sampler")) {
                SamplerConfig file_cfg = fit.sampler;
                from_json(cfg.at("sampler"), file_cfg);
                // flags given on the command line win over the config file
                if (!o_iters->count()) fit.sampler.n_iter = file_cfg.n_iter;
                if (!o_burn->count()) fit.sampler.burn_in = file_cfg.burn_in;
                if (!o_thin->count()) fit.sampler.thin = file_cfg.thin;
                fit.sampler.H_G = file_cfg.H_G;
                fit.sampler.prop_scale_beta = file_cfg.prop_scale_beta;
                fit.sampler.prop_scale_alpha = file_cfg.prop_scale_alpha;
                fit.sampler.prop_scale_rho = file_cfg.prop_scale_rho;
                fit.sampler.prop_scale_gamma = file_cfg.prop_scale_gamma;
                fit.sampler.adapt = file_cfg.adapt;
            }
            if (cfg.contains("model")) from_json(cfg.at("model"), fit.model);
            cmd_fit(fit);
        } else if (det_cmd->parsed()) {
            cmd_detect(det);
        } else if (eval_cmd->parsed()) {
            cmd_evaluate(eval);
        }
        return 0;
    } catch (const input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 3;
    } catch (const std::domain_error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
