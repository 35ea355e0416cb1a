#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bayesdiff/io.hpp"
#include "bayesdiff/simulate.hpp"

using namespace bayesdiff;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

Dataset demo_dataset(std::uint64_t seed = 21) {
    SimSpec spec;
    spec.p = 12;
    spec.T = 2;
    spec.reps_per_treatment = 2;
    spec.seed = seed;
    spec.H_G = 20;
    return simulate_dataset(spec).first;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("dataset TSV round-trip is byte-stable") {
    Dataset d = demo_dataset();
    TempFile tsv("io_data.tmp.tsv"), pos("io_data.tmp.positions.tsv");
    write_dataset(d, tsv.path, pos.path);
    Dataset back = read_dataset(tsv.path, pos.path, Transform::identity);
    CHECK(back.n() == d.n());
    CHECK(back.p() == d.p());
    CHECK(back.num_treatments == d.num_treatments);
    CHECK(back.x == d.x);
    CHECK(back.t == d.t);
    for (int j = 0; j + 1 < d.p(); ++j) CHECK(std::abs(back.e[j] - d.e[j]) < 1e-15);

    TempFile tsv2("io_data2.tmp.tsv"), pos2("io_data2.tmp.positions.tsv");
    write_dataset(back, tsv2.path, pos2.path);
    CHECK(slurp(tsv.path) == slurp(tsv2.path));
    CHECK(slurp(pos.path) == slurp(pos2.path));
}

TEST_CASE("dataset reader rejects malformed input with located errors") {
    TempFile tsv("io_bad.tmp.tsv"), pos("io_bad.tmp.positions.tsv");
    {
        std::ofstream out(pos.path);
        out << "probe_id\tposition\np1\t1\np2\t2\n";
    }
    auto write_tsv = [&](const std::string& body) {
        std::ofstream out(tsv.path);
        out << body;
    };

    write_tsv("sample_id\ttreatment\tp1\tp2\nA\t1\t0.5\n");  // missing one field
    try {
        read_dataset(tsv.path, pos.path, Transform::identity);
        CHECK(false);
    } catch (const input_error& ex) {
        CHECK(std::string(ex.what()).find("row 2") != std::string::npos);
    }

    write_tsv("sample_id\ttreatment\tp1\tp2\nA\t1\t0.5\toops\nB\t2\t0.2\t0.3\n");
    try {
        read_dataset(tsv.path, pos.path, Transform::identity);
        CHECK(false);
    } catch (const input_error& ex) {
        std::string msg = ex.what();
        CHECK(msg.find("oops") != std::string::npos);
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("column 4") != std::string::npos);
    }

    write_tsv("sample_id\ttreatment\tp1\tp2\nA\t1\t0.5\tnan\nB\t2\t0.2\t0.3\n");
    try {
        read_dataset(tsv.path, pos.path, Transform::identity);
        CHECK(false);
    } catch (const input_error& ex) {
        CHECK(std::string(ex.what()).find("NaN") != std::string::npos);
    }

    // metadata lines are transparent
    write_tsv("#config_hash=abc seed=1\nsample_id\ttreatment\tp1\tp2\n"
              "A\t1\t0.5\t0.6\nB\t1\t0.1\t0.2\nC\t2\t0.2\t0.3\nD\t2\t0.4\t0.1\n");
    CHECK_NOTHROW(read_dataset(tsv.path, pos.path, Transform::identity));

    // positions must increase
    {
        std::ofstream out(pos.path);
        out << "probe_id\tposition\np1\t2\np2\t1\n";
    }
    try {
        read_dataset(tsv.path, pos.path, Transform::identity);
        CHECK(false);
    } catch (const input_error& ex) {
        CHECK(std::string(ex.what()).find("increasing") != std::string::npos);
    }
}

TEST_CASE("trace CSV round-trip preserves posterior summaries bitwise") {
    Dataset d = demo_dataset(33);
    ModelHyperParams par;
    SamplerConfig cfg;
    cfg.n_iter = 40;
    cfg.burn_in = 10;
    cfg.thin = 2;
    cfg.seed = 11;
    cfg.H_G = 10;
    Trace tr = run_chain(d, par, cfg);

    std::stringstream buf;
    buf << "#config_hash=0 seed=11\n";
    write_trace_csv(tr, buf);
    Trace back = read_trace_csv(buf);
    REQUIRE(back.rows.size() == tr.rows.size());
    CHECK(back.p == tr.p);
    CHECK(posterior_diff_prob(back) == posterior_diff_prob(tr));
    for (std::size_t k = 0; k < tr.rows.size(); ++k) {
        CHECK(back.rows[k].loglik == tr.rows[k].loglik);
        CHECK(back.rows[k].p_eta_pos == tr.rows[k].p_eta_pos);
        CHECK(back.rows[k].s == tr.rows[k].s);
    }

    // second serialization is byte-identical
    std::stringstream again;
    write_trace_csv(back, again);
    std::stringstream first;
    write_trace_csv(tr, first);
    CHECK(again.str() == first.str());

    // effect accumulators travel in the companion file
    std::stringstream tbuf;
    write_theta_csv(tr, tbuf);
    read_theta_csv(tbuf, back);
    CHECK(back.T == tr.T);
    CHECK(back.theta_sum == tr.theta_sum);
    CHECK(back.s2_count == tr.s2_count);

    std::stringstream broken("iter,loglik\n1,2.0\n");
    CHECK_THROWS_AS(read_trace_csv(broken), input_error);
    std::stringstream empty("");
    CHECK_THROWS_AS(read_trace_csv(empty), input_error);
}

TEST_CASE("simulation truth CSV round-trip") {
    SimSpec spec;
    spec.p = 30;
    spec.T = 3;
    spec.reps_per_treatment = 2;
    spec.seed = 77;
    spec.H_G = 20;
    SimTruth truth = simulate_dataset(spec).second;

    std::stringstream buf;
    buf << "#config_hash=0 seed=77\n";
    write_truth_csv(truth, buf);
    SimTruth back = read_truth_csv(buf);
    CHECK(back == truth);

    std::stringstream missing("probe,s,g,cluster,theta_1\n");
    CHECK_THROWS_AS(read_truth_csv(missing), input_error);
}

TEST_CASE("detection CSV layout") {
    Trace tr;
    tr.p = 2;
    tr.T = 2;
    tr.theta_sum = {2.0, 4.0, 0.0, 0.0};
    tr.s2_count = {2, 0};
    for (int k = 0; k < 2; ++k) {
        TraceRow r;
        r.iter = k;
        r.s = {2, 1};
        r.p_eta_pos = 0.5;
        tr.rows.push_back(r);
    }
    auto ps = make_posterior_summary(tr, 0.10);
    std::stringstream out;
    write_detection_csv(ps, {"pA", "pB"}, {0.0, 1.0}, out);
    std::string line;
    std::getline(out, line);
    CHECK(line == "probe_id,position,omega,detected,t_lo,t_hi,diff");
    std::getline(out, line);
    CHECK(line.rfind("pA,0,1,1,1,2,", 0) == 0);  // detected probe carries its contrast
    std::getline(out, line);
    CHECK(line == "pB,1,0,0,,,");
}

TEST_CASE("JSON configuration round-trips are lossless") {
    ModelHyperParams par;
    par.rho = 0.17;
    par.gamma = 0.93;
    par.eta = 0.002;
    par.prior.beta_rate = 2.5;
    ModelHyperParams par2;
    from_json(to_json(par), par2);
    CHECK(to_json(par2) == to_json(par));
    CHECK(par2.rho == par.rho);
    CHECK(par2.prior.beta_rate == par.prior.beta_rate);

    SamplerConfig cfg;
    cfg.n_iter = 123;
    cfg.seed = 99;
    cfg.adapt = false;
    SamplerConfig cfg2;
    from_json(to_json(cfg), cfg2);
    CHECK(to_json(cfg2) == to_json(cfg));

    SimSpec spec;
    spec.p = 77;
    spec.distance_model = DistanceModel::uniform;
    spec.transform = Transform::log1p;
    SimSpec spec2;
    from_json(to_json(spec), spec2);
    CHECK(to_json(spec2) == to_json(spec));

    // hashing is stable and sensitive
    CHECK(config_hash(to_json(spec)) == config_hash(to_json(spec2)));
    spec2.seed += 1;
    CHECK(config_hash(to_json(spec)) != config_hash(to_json(spec2)));
}

TEST_CASE("checkpoint refuses a mismatched dataset") {
    Dataset d = demo_dataset(1);
    ModelHyperParams par;
    SamplerConfig cfg;
    cfg.n_iter = 10;
    cfg.burn_in = 4;
    cfg.thin = 1;
    cfg.seed = 2;
    cfg.H_G = 10;
    Sampler smp(d, par, cfg);
    smp.run();
    std::stringstream buf;
    smp.save_checkpoint(buf);

    Dataset other = demo_dataset(2);
    CHECK_THROWS_AS(Sampler::load_checkpoint(buf, other), input_error);
}
