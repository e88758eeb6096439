#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>

#include "forkcast/bench.hpp"
#include "forkcast/checkpoint.hpp"
#include "forkcast/csv.hpp"
#include "forkcast/inference.hpp"
#include "forkcast/metrics.hpp"
#include "forkcast/theory.hpp"
#include "forkcast/training.hpp"

namespace fs = std::filesystem;
using namespace forkcast;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitMissingArtifact = 3;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key=value configuration: file contents overridden by --set flags.
class RunConfig {
public:
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw MissingArtifact("config file not found: " + path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
            kv_[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    void set_override(const std::string& kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got: " + kv);
        kv_[kv.substr(0, eq)] = kv.substr(eq + 1);
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& dflt) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }

    long long integer(const std::string& key, long long dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        auto v = csv::parse_int(it->second);
        if (!v) throw UsageError("key '" + key + "' expects an integer, got: " + it->second);
        return *v;
    }

    double real(const std::string& key, double dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        auto v = csv::parse_double(it->second);
        if (!v) throw UsageError("key '" + key + "' expects a number, got: " + it->second);
        return *v;
    }

    std::vector<int> int_list(const std::string& key, std::vector<int> dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        std::vector<int> out;
        for (const auto& cell : csv::split_line(it->second)) {
            auto v = csv::parse_int(cell);
            if (!v) throw UsageError("key '" + key + "' expects integers, got: " + it->second);
            out.push_back(static_cast<int>(*v));
        }
        return out;
    }

    std::vector<double> real_list(const std::string& key, std::vector<double> dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        std::vector<double> out;
        for (const auto& cell : csv::split_line(it->second)) {
            auto v = csv::parse_double(cell);
            if (!v) throw UsageError("key '" + key + "' expects numbers, got: " + it->second);
            out.push_back(*v);
        }
        return out;
    }

    std::vector<std::string> str_list(const std::string& key, std::vector<std::string> dflt) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        return csv::split_line(it->second);
    }

    void reject_unknown(const std::set<std::string>& known) const {
        for (const auto& [k, v] : kv_)
            if (!known.count(k)) throw UsageError("unknown configuration key: " + k);
    }

    void write_resolved(const std::string& path) const {
        std::ofstream out(path);
        for (const auto& [k, v] : kv_) out << k << "=" << v << "\n";
    }

private:
    std::map<std::string, std::string> kv_;
};

std::string timestamp_now() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    return buf;
}

/// runs/<timestamp>-<command>-<seed>/ plus the resolved snapshot.
struct RunDir {
    fs::path dir;
    std::vector<std::string> files;

    RunDir(const RunConfig& cfg, const std::string& command, uint64_t seed) {
        fs::path base = cfg.str("out", "runs");
        dir = base / (timestamp_now() + "-" + command + "-" + std::to_string(seed));
        fs::create_directories(dir);
        cfg.write_resolved((dir / "config.resolved").string());
        files.push_back("config.resolved");
    }

    std::string path(const std::string& name) {
        files.push_back(name);
        return (dir / name).string();
    }

    ~RunDir() {
        std::ofstream m(dir / "manifest.txt");
        for (const auto& f : files) m << f << "\n";
        m << "manifest.txt\n";
    }
};

const std::set<std::string> kDataKeys = {
    "data", "freq.name", "freq.seasonality", "freq.horizon",
    "synth.n_series", "synth.length", "synth.noise_std", "synth.seed",
};

struct LoadedData {
    TimeSeriesPanel panel;
    std::vector<LoadReportRow> report;  // empty for synthetic data

    /// Emits the load report next to the run outputs when a file was read.
    void write_report(RunDir& run) const {
        if (!report.empty()) write_load_report(run.path("load_report.csv"), report);
    }
};

LoadedData load_data(const RunConfig& cfg) {
    std::string data = cfg.str("data", "synthetic");
    FrequencyMeta meta;
    meta.name = cfg.str("freq.name", "Monthly");
    meta.seasonality = static_cast<int>(cfg.integer("freq.seasonality", 12));
    meta.horizon = static_cast<int>(cfg.integer("freq.horizon", 18));
    if (data == "synthetic") {
        return {synthesize_panel(static_cast<int>(cfg.integer("synth.n_series", 100)),
                                 static_cast<int>(cfg.integer("synth.length", 150)),
                                 meta.seasonality, cfg.real("synth.noise_std", 0.5),
                                 static_cast<uint64_t>(cfg.integer("synth.seed", 42)),
                                 meta.horizon),
                {}};
    }
    if (!fs::exists(data)) throw MissingArtifact("data file not found: " + data);
    auto result = load_long_panel(data, meta);
    if (result.dropped > 0)
        std::cerr << "note: dropped " << result.dropped << " series shorter than 3H+1\n";
    return {std::move(result.panel), std::move(result.report)};
}

const std::set<std::string> kEncoderKeys = {"encoder", "enc.width", "enc.cnn_channels"};

EncoderSpec encoder_from_config(const RunConfig& cfg, int horizon) {
    EncoderSpec enc;
    enc.family = encoder_family_from_string(cfg.str("encoder", "cnn"));
    enc.horizon = horizon;
    if (cfg.has("enc.width")) {
        int w = static_cast<int>(cfg.integer("enc.width", 128));
        enc.mlp_width = w;
        enc.rnn_width = w;
        enc.tf_hidden = w;
    }
    enc.cnn_channels = static_cast<int>(cfg.integer("enc.cnn_channels", enc.cnn_channels));
    return enc;
}

std::map<std::string, std::string> model_meta(const TrainConfig& tc) {
    std::map<std::string, std::string> meta;
    meta["scheme"] = to_string(tc.scheme);
    meta["encoder"] = to_string(tc.encoder.family);
    meta["horizon"] = std::to_string(tc.decoder.horizon);
    meta["enc.width"] = std::to_string(tc.encoder.mlp_width);
    meta["enc.cnn_channels"] = std::to_string(tc.encoder.cnn_channels);
    meta["window_length"] = std::to_string(resolve_window_length(tc));
    return meta;
}

EncoderSpec encoder_from_meta(const std::map<std::string, std::string>& meta) {
    EncoderSpec enc;
    enc.family = encoder_family_from_string(meta.at("encoder"));
    enc.horizon = std::stoi(meta.at("horizon"));
    if (meta.count("enc.width")) {
        int w = std::stoi(meta.at("enc.width"));
        enc.mlp_width = w;
        enc.rnn_width = w;
        enc.tf_hidden = w;
    }
    if (meta.count("enc.cnn_channels")) enc.cnn_channels = std::stoi(meta.at("enc.cnn_channels"));
    return enc;
}

int cmd_train(RunConfig& cfg) {
    std::set<std::string> known = kDataKeys;
    known.insert(kEncoderKeys.begin(), kEncoderKeys.end());
    known.insert({"scheme", "batch_size", "lr0", "max_steps", "lr_decay", "lr_step",
                  "window_length", "seed", "out"});
    cfg.reject_unknown(known);

    LoadedData data = load_data(cfg);
    TimeSeriesPanel& panel = data.panel;
    TrainConfig tc;
    tc.scheme = scheme_from_string(cfg.str("scheme", "fs"));
    tc.decoder.horizon = panel.frequency.horizon;
    tc.encoder = encoder_from_config(cfg, panel.frequency.horizon);
    tc.batch_size = static_cast<int>(cfg.integer("batch_size", 8));
    tc.lr0 = cfg.real("lr0", 0.001);
    tc.max_steps = static_cast<int>(cfg.integer("max_steps", 30000));
    tc.lr_decay = cfg.real("lr_decay", 0.1);
    tc.lr_step = static_cast<int>(cfg.integer("lr_step", 10000));
    tc.window_length = static_cast<int>(cfg.integer("window_length", 0));
    tc.seed = static_cast<uint64_t>(cfg.integer("seed", 1));

    RunDir run(cfg, "train", tc.seed);
    data.write_report(run);
    TrainResult result = train(panel, tc);
    save_checkpoint(run.path("checkpoint.csv"), result.params, model_meta(tc));
    write_trajectory_csv(run.path("trajectory.csv"), result.trajectory);
    std::cout << "final loss " << csv::fmt(result.trajectory.back().loss) << " after "
              << result.trajectory.size() << " steps -> " << run.dir.string() << "\n";
    return 0;
}

int cmd_forecast(RunConfig& cfg) {
    std::set<std::string> known = kDataKeys;
    known.insert({"checkpoint", "scheme", "window_length", "ensemble", "ensemble.window",
                  "eta", "seed", "out"});
    cfg.reject_unknown(known);

    std::string ckpt_path = cfg.str("checkpoint", "");
    if (ckpt_path.empty() || !fs::exists(ckpt_path))
        throw MissingArtifact("checkpoint not found: " + ckpt_path);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    LoadedData data = load_data(cfg);
    TimeSeriesPanel& panel = data.panel;

    EncoderSpec enc = encoder_from_meta(ckpt.meta);
    DecoderSpec dec;
    dec.horizon = panel.frequency.horizon;
    InferenceScheme scheme = inference_scheme_from_string(cfg.str(
        "scheme", ckpt.meta.count("scheme") && ckpt.meta.at("scheme") == "ws" ? "ws_restricted" : "fs"));
    int L = static_cast<int>(cfg.integer("window_length",
        ckpt.meta.count("window_length") ? std::stoll(ckpt.meta.at("window_length")) : 2 * dec.horizon));

    uint64_t seed = static_cast<uint64_t>(cfg.integer("seed", 1));
    RunDir run(cfg, "forecast", seed);
    data.write_report(run);
    ForecastGrid grid = forecast_panel_test(panel, enc, dec, ckpt.store, scheme, L);

    std::string method = cfg.str("ensemble", "none");
    if (method != "none") {
        EnsembleSpec es;
        es.method = ensemble_method_from_string(method);
        es.window = static_cast<int>(cfg.integer("ensemble.window", dec.horizon));
        int eta = static_cast<int>(cfg.integer("eta", 1));
        grid = ensemble(grid, es, eta);
        std::ofstream meta(run.path("grid.meta"));
        meta << "method=" << method << "\nwindow=" << es.window << "\neta=" << eta << "\n";
    }
    write_grid_csv(run.path("grid.csv"), grid);
    std::cout << "forecast grid " << grid.n_series() << " series x " << grid.n_fcds()
              << " FCDs -> " << run.dir.string() << "\n";
    return 0;
}

struct SeedMetrics {
    double scrps_plain, sqpc_plain, mae_plain;
    double scrps_ens, sqpc_ens, mae_ens;
};

int cmd_evaluate(RunConfig& cfg) {
    std::set<std::string> known = kDataKeys;
    known.insert({"checkpoints", "dataset", "window_length", "ensemble", "ensemble.window",
                  "seed", "out", "parallel"});
    cfg.reject_unknown(known);

    auto ckpt_paths = cfg.str_list("checkpoints", {});
    if (ckpt_paths.empty()) throw MissingArtifact("no checkpoints given");
    for (const auto& p : ckpt_paths)
        if (!fs::exists(p)) throw MissingArtifact("checkpoint not found: " + p);

    LoadedData data = load_data(cfg);
    TimeSeriesPanel& panel = data.panel;
    uint64_t seed = static_cast<uint64_t>(cfg.integer("seed", 1));
    RunDir run(cfg, "evaluate", seed);
    data.write_report(run);

    EnsembleSpec es;
    es.method = ensemble_method_from_string(cfg.str("ensemble", "moving_average"));
    es.window = static_cast<int>(cfg.integer("ensemble.window", panel.frequency.horizon));

    int parallel = static_cast<int>(cfg.integer("parallel", 1));
    auto eval_one = [&](const std::string& path) {
        Checkpoint ckpt = load_checkpoint(path);
        EncoderSpec enc = encoder_from_meta(ckpt.meta);
        DecoderSpec dec;
        dec.horizon = panel.frequency.horizon;
        bool ws_trained = ckpt.meta.count("scheme") && ckpt.meta.at("scheme") == "ws";
        InferenceScheme scheme = ws_trained ? InferenceScheme::WS_restricted : InferenceScheme::FS;
        int L = static_cast<int>(cfg.integer("window_length",
            ckpt.meta.count("window_length") ? std::stoll(ckpt.meta.at("window_length"))
                                             : 2 * dec.horizon));
        ForecastGrid grid = forecast_panel_test(panel, enc, dec, ckpt.store, scheme, L);
        ForecastGrid ens = ensemble(grid, es, 1);
        EvalArrays ev = test_targets(panel, grid);
        SeedMetrics m{};
        m.scrps_plain = scrps(ev.targets, grid, ev.mask);
        m.sqpc_plain = sqpc(grid);
        m.mae_plain = mae(ev.targets, grid, ev.mask);
        m.scrps_ens = scrps(ev.targets, ens, ev.mask);
        m.sqpc_ens = sqpc(ens);
        m.mae_ens = mae(ev.targets, ens, ev.mask);
        return m;
    };

    std::vector<SeedMetrics> per_seed(ckpt_paths.size());
    if (parallel > 1) {
        std::vector<std::future<SeedMetrics>> futs;
        for (const auto& p : ckpt_paths)
            futs.push_back(std::async(std::launch::async, eval_one, p));
        for (size_t i = 0; i < futs.size(); ++i) per_seed[i] = futs[i].get();
    } else {
        for (size_t i = 0; i < ckpt_paths.size(); ++i) per_seed[i] = eval_one(ckpt_paths[i]);
    }

    std::string dataset = cfg.str("dataset", "synthetic");
    std::string freq = panel.frequency.name;
    Checkpoint first = load_checkpoint(ckpt_paths[0]);
    std::string model = first.meta.count("encoder") ? first.meta.at("encoder") : "?";
    std::string scheme_label = first.meta.count("scheme") ? first.meta.at("scheme") : "?";

    std::vector<EvalRow> rows;
    auto emit = [&](const std::string& scheme_col, const std::string& metric,
                    double SeedMetrics::*field) {
        std::vector<double> vals;
        for (const SeedMetrics& s : per_seed) vals.push_back(s.*field);
        double mean = 0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        for (size_t i = 0; i < vals.size(); ++i)
            rows.push_back({dataset, freq, model, scheme_col + "@seed" + std::to_string(i + 1),
                            metric, vals[i], false, 0});
        EvalRow agg{dataset, freq, model, scheme_col, metric, mean, false, 0};
        if (vals.size() > 1) {
            double var = 0;
            for (double v : vals) var += (v - mean) * (v - mean);
            agg.has_stderr = true;
            agg.stderr_ = std::sqrt(var / static_cast<double>(vals.size() - 1) /
                                    static_cast<double>(vals.size()));
        }
        rows.push_back(agg);
    };
    emit(scheme_label, "scrps", &SeedMetrics::scrps_plain);
    emit(scheme_label + "+ens", "scrps", &SeedMetrics::scrps_ens);
    emit(scheme_label, "sqpc", &SeedMetrics::sqpc_plain);
    emit(scheme_label + "+ens", "sqpc", &SeedMetrics::sqpc_ens);
    emit(scheme_label, "mae", &SeedMetrics::mae_plain);
    emit(scheme_label + "+ens", "mae", &SeedMetrics::mae_ens);
    write_eval_report(run.path("report.csv"), rows);
    std::cout << "evaluated " << ckpt_paths.size() << " checkpoint(s) -> " << run.dir.string() << "\n";
    return 0;
}

int cmd_ablate(RunConfig& cfg) {
    std::set<std::string> known = kDataKeys;
    known.insert({"sample_sizes", "learning_rates", "max_steps", "lr_decay", "lr_decay_every",
                  "ar_order", "seed", "out", "parallel"});
    cfg.reject_unknown(known);

    AblationConfig ac;
    ac.sample_sizes = cfg.int_list("sample_sizes", ac.sample_sizes);
    ac.learning_rates = cfg.real_list("learning_rates", ac.learning_rates);
    ac.max_steps = static_cast<int>(cfg.integer("max_steps", ac.max_steps));
    ac.lr_decay = cfg.real("lr_decay", ac.lr_decay);
    ac.lr_decay_every = static_cast<int>(cfg.integer("lr_decay_every", ac.lr_decay_every));
    ac.ar_order = static_cast<int>(cfg.integer("ar_order", ac.ar_order));
    ac.seed = static_cast<uint64_t>(cfg.integer("seed", 1));

    RunConfig data_cfg = cfg;
    if (!cfg.has("synth.length")) data_cfg.set("synth.length", "132");
    if (!cfg.has("synth.n_series")) data_cfg.set("synth.n_series", "4");
    if (!cfg.has("freq.horizon")) data_cfg.set("freq.horizon", "1");
    if (!cfg.has("freq.seasonality")) data_cfg.set("freq.seasonality", "12");
    LoadedData data = load_data(data_cfg);

    RunDir run(cfg, "ablate", ac.seed);
    data.write_report(run);
    int parallel = static_cast<int>(cfg.integer("parallel", 1));
    auto cells = ar_convergence_ablation(ac, data.panel, parallel);
    csv::Writer w(run.path("ablation.csv"));
    w.row({"sample_size", "lr", "step", "loss"});
    for (const auto& cell : cells)
        for (const auto& p : cell.trajectory)
            w.row({std::to_string(cell.sample_size), csv::fmt(cell.lr), std::to_string(p.step),
                   csv::fmt(p.loss)});
    csv::Writer s(run.path("ablation_summary.csv"));
    s.row({"sample_size", "lr", "status", "final_loss", "steps_to_110pct"});
    for (const auto& cell : cells)
        s.row({std::to_string(cell.sample_size), csv::fmt(cell.lr),
               cell.diverged ? "diverged" : "ok",
               cell.trajectory.empty() ? "" : csv::fmt(cell.trajectory.back().loss),
               cell.trajectory.empty() ? "" : std::to_string(steps_to_threshold(cell.trajectory))});
    std::cout << "ablation grid " << ac.sample_sizes.size() << " x " << ac.learning_rates.size()
              << " -> " << run.dir.string() << "\n";
    return 0;
}

int cmd_simulate(RunConfig& cfg) {
    cfg.reject_unknown({"theorem", "M", "reps", "T_grid", "sizes", "seed", "out"});
    int theorem = static_cast<int>(cfg.integer("theorem", 1));
    auto Ms = cfg.int_list("M", {0, 2, 5});
    uint64_t seed = static_cast<uint64_t>(cfg.integer("seed", 1));
    RunDir run(cfg, "simulate", seed);

    if (theorem == 1) {
        int reps = static_cast<int>(cfg.integer("reps", 200));
        std::vector<int> T_grid = cfg.int_list("T_grid", {2, 4, 8, 16, 32, 64, 128, 256, 512,
                                                          1024, 2048, 4096});
        csv::Writer w(run.path("variance_curve.csv"));
        w.row({"M", "T", "variance", "analytic_variance"});
        for (int M : Ms) {
            MDependentProcess proc;
            proc.M = M;
            proc.seed = derive_seed(seed, static_cast<uint64_t>(M));
            auto curve = mean_estimator_variance(proc, T_grid, reps);
            for (size_t i = 0; i < curve.size(); ++i)
                w.row({std::to_string(M), std::to_string(T_grid[i]), csv::fmt(curve[i].second),
                       csv::fmt(analytic_mean_variance(proc, T_grid[i]))});
            std::cout << "theorem 1, M=" << M << ": slope " << csv::fmt(loglog_slope(curve)) << "\n";
        }
    } else if (theorem == 2) {
        int reps = static_cast<int>(cfg.integer("reps", 500));
        std::vector<int> sizes = cfg.int_list("sizes", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12,
                                                        13, 14, 15, 16, 17, 18});
        csv::Writer w(run.path("forecast_variance.csv"));
        w.row({"M", "ensemble_size", "variance"});
        for (int M : Ms) {
            auto curve = forecast_variance_decay(sizes, M, reps, derive_seed(seed, static_cast<uint64_t>(M)));
            for (auto [n, v] : curve)
                w.row({std::to_string(M), std::to_string(static_cast<int>(n)), csv::fmt(v)});
            std::cout << "theorem 2, M=" << M << ": slope " << csv::fmt(loglog_slope(curve)) << "\n";
        }
    } else {
        throw UsageError("theorem must be 1 or 2");
    }
    return 0;
}

int cmd_bench(RunConfig& cfg) {
    cfg.reject_unknown({"family", "schemes", "T_grid", "reps", "seed", "window_length",
                        "wall_clock", "out"});
    EncoderFamily family = encoder_family_from_string(cfg.str("family", "cnn"));
    auto scheme_names = cfg.str_list("schemes", {"fs", "ws_restricted", "ws_full"});
    uint64_t seed = static_cast<uint64_t>(cfg.integer("seed", 1));

    BenchSettings bs;
    bs.T_grid = cfg.int_list("T_grid", bs.T_grid);
    bs.reps = static_cast<int>(cfg.integer("reps", 3));
    bs.seed = seed;
    bs.window_length = static_cast<int>(cfg.integer("window_length", 0));
    bs.time_wall_clock = cfg.integer("wall_clock", 1) != 0;

    RunDir run(cfg, "bench", seed);
    EncoderSpec enc = slim_encoder(family);
    DecoderSpec dec = slim_decoder();

    BenchResult all;
    csv::Writer ew(run.path("exponents.csv"));
    ew.row({"family", "scheme", "wall_exponent", "wall_r2", "count_exponent", "count_r2"});
    for (const auto& sname : scheme_names) {
        InferenceScheme scheme = inference_scheme_from_string(sname);
        BenchResult res = run_scaling_bench(enc, dec, scheme, bs);
        std::vector<std::pair<double, double>> count_pairs;
        for (const BenchRow& r : res) count_pairs.emplace_back(r.T, r.op_count);
        ExponentFit wall = fit_exponent(res);
        ExponentFit count = fit_exponent_pairs(count_pairs);
        ew.row({to_string(family), sname, csv::fmt(wall.exponent), csv::fmt(wall.r_squared),
                csv::fmt(count.exponent), csv::fmt(count.r_squared)});
        std::cout << to_string(family) << "/" << sname << ": wall exponent "
                  << csv::fmt(wall.exponent) << ", count exponent " << csv::fmt(count.exponent)
                  << "\n";
        all.insert(all.end(), res.begin(), res.end());
    }
    write_bench_csv(run.path("bench.csv"), all);
    write_machine_info(run.path("machine.txt"));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-horizon quantile forecasting with forking-sequences training, "
                 "ensembled temporal cross-validation inference, and scaling benchmarks"};
    app.require_subcommand(1);

    std::map<std::string, std::function<int(RunConfig&)>> handlers = {
        {"train", cmd_train},       {"forecast", cmd_forecast}, {"evaluate", cmd_evaluate},
        {"ablate", cmd_ablate},     {"simulate", cmd_simulate}, {"bench", cmd_bench},
    };

    std::map<std::string, std::pair<std::string, std::vector<std::string>>> sub_cfg;
    for (const auto& [name, fn] : handlers) {
        auto* sub = app.add_subcommand(name, name + " command");
        auto& slot = sub_cfg[name];
        sub->add_option("--config", slot.first, "key=value configuration file");
        sub->add_option("--set", slot.second, "override: key=value (repeatable)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    std::string name = app.get_subcommands().front()->get_name();
    try {
        RunConfig cfg;
        const auto& slot = sub_cfg[name];
        if (!slot.first.empty()) cfg.load_file(slot.first);
        for (const auto& kv : slot.second) cfg.set_override(kv);
        return handlers[name](cfg);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const MissingArtifact& e) {
        std::cerr << "missing artifact: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const DomainError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
