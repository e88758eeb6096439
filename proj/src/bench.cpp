#include "forkcast/bench.hpp"

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "forkcast/csv.hpp"
#include "forkcast/errors.hpp"
#include "forkcast/theory.hpp"

namespace forkcast {

namespace {

Tensor random_input(int T, int d_in, uint64_t seed) {
    Rng rng(seed);
    Tensor x({T, d_in});
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    return x;
}

}  // namespace

EncoderSpec slim_encoder(EncoderFamily family) {
    EncoderSpec spec;
    spec.family = family;
    spec.horizon = 6;
    spec.mlp_width = 16;
    spec.mlp_layers = 2;
    spec.rnn_width = 16;
    spec.rnn_dilations = {{1, 2}};
    spec.cnn_channels = 6;
    spec.tf_hidden = 16;
    spec.tf_layers = 1;
    spec.tf_patch_lens = {2};
    spec.tf_heads = 1;
    spec.tf_dropout = 0.0;
    return spec;
}

DecoderSpec slim_decoder() {
    DecoderSpec dec;
    dec.agnostic_dim = 16;
    dec.specific_dim = 4;
    dec.horizon = 6;
    dec.quantiles = {0.1, 0.5, 0.9};
    return dec;
}

BenchResult run_scaling_bench(const EncoderSpec& enc, const DecoderSpec& dec,
                              InferenceScheme scheme, const BenchSettings& settings) {
    if (settings.T_grid.size() < 4) throw DomainError("bench needs at least 4 T points");
    for (size_t i = 1; i < settings.T_grid.size(); ++i)
        if (settings.T_grid[i] <= settings.T_grid[i - 1])
            throw DomainError("bench T grid must be strictly increasing");
    int rf = receptive_field(enc);
    if (rf != kUnboundedField && settings.T_grid.front() < 2 * rf)
        throw DomainError("bench: min T must be at least twice the receptive field");

    // Large tensors would otherwise be mmap'd and re-faulted every rep,
    // which skews wall-clock scaling; keep them on the reusable heap.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);

    EncoderSpec enc_local = enc;
    enc_local.horizon = dec.horizon;
    ParamStore store(settings.seed);
    Rng init_rng(settings.seed);
    init_encoder_params(enc_local, store, init_rng);
    init_decoder_params(dec, hidden_dim(enc_local), 0, store, init_rng);

    int L = settings.window_length > 0
                ? settings.window_length
                : (rf == kUnboundedField ? 2 * dec.horizon : std::max(rf, 2 * dec.horizon));

    // Scheme equivalence gate: identical weights must give identical
    // forecasts wherever the window covers the receptive field. Capped at a
    // moderate T so the gate stays cheap next to the timed runs.
    {
        int cap = rf == kUnboundedField ? 256 : std::max(256, 2 * rf);
        int T = std::min(settings.T_grid.front(), cap);
        Tensor x = random_input(T, enc_local.d_in, derive_seed(settings.seed, 99));
        int lo = rf == kUnboundedField ? 1 : rf;
        ForecastGrid fs = cross_val_forecast(enc_local, dec, store, x, InferenceScheme::FS, L, {lo, T});
        ForecastGrid wf =
            cross_val_forecast(enc_local, dec, store, x, InferenceScheme::WS_full, L, {lo, T});
        double max_diff = (fs.values.array() - wf.values.array()).abs().maxCoeff();
        if (max_diff > 1e-12)
            throw ContractError("bench equivalence gate failed: FS vs WS_full diff " +
                                std::to_string(max_diff));
    }

    BenchResult result;
    for (int T : settings.T_grid) {
        Tensor x = random_input(T, enc_local.d_in, derive_seed(settings.seed, static_cast<uint64_t>(T)));
        OpCounter counter;
        OpCounter encoder_probe;
        {
            // Encoder share measured on a bare encode pass over the same work.
            if (scheme == InferenceScheme::FS) {
                Tape probe(false);
                encode_full(enc_local, store, probe, probe.leaf(x));
                encoder_probe = probe.counter_view();
            } else {
                for (int t = 1; t <= T; ++t) {
                    Tape probe(false);
                    int len = scheme == InferenceScheme::WS_full ? t : L;
                    Tensor w({len, enc_local.d_in});
                    for (int j = 0; j < len; ++j)
                        if (t - len + j >= 0) w.at(j, 0) = x.at(t - len + j, 0);
                    encode_window(enc_local, store, probe, probe.leaf(w));
                    encoder_probe.units += probe.counter_view().units;
                    encoder_probe.ingested += probe.counter_view().ingested;
                    encoder_probe.encoder_calls += probe.counter_view().encoder_calls;
                }
            }
        }

        std::vector<double> times;
        int reps = settings.time_wall_clock ? settings.reps : 1;
        for (int r = -1; r < reps; ++r) {
            OpCounter local;
            auto t0 = std::chrono::steady_clock::now();
            ForecastGrid g = cross_val_forecast(enc_local, dec, store, x, scheme, L, {1, T}, &local);
            auto t1 = std::chrono::steady_clock::now();
            if (r >= 0) times.push_back(std::chrono::duration<double>(t1 - t0).count());
            if (r == reps - 1) counter = local;  // counters are deterministic
        }
        std::sort(times.begin(), times.end());
        double median = times[times.size() / 2];

        BenchRow row;
        row.family = to_string(enc.family);
        row.scheme = to_string(scheme);
        row.T = T;
        row.reps = reps;
        row.median_seconds = median;
        row.op_count = counter.units + counter.ingested;
        row.encoder_op_count = encoder_probe.units + encoder_probe.ingested;
        result.push_back(row);
    }
    return result;
}

ExponentFit fit_exponent_pairs(const std::vector<std::pair<double, double>>& pairs) {
    double slope = loglog_slope(pairs);
    double sx = 0, sy = 0;
    for (auto [x, y] : pairs) {
        sx += std::log(x);
        sy += std::log(y);
    }
    double n = static_cast<double>(pairs.size());
    double mx = sx / n, my = sy / n;
    double ss_res = 0, ss_tot = 0;
    for (auto [x, y] : pairs) {
        double pred = my + slope * (std::log(x) - mx);
        double d = std::log(y) - pred;
        ss_res += d * d;
        double dt = std::log(y) - my;
        ss_tot += dt * dt;
    }
    ExponentFit fit;
    fit.exponent = slope;
    fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return fit;
}

ExponentFit fit_exponent(const BenchResult& result) {
    if (result.size() < 4) throw DomainError("fit_exponent: need at least 4 points");
    std::vector<std::pair<double, double>> pairs;
    for (const BenchRow& r : result) {
        if (r.median_seconds <= 0) throw DomainError("fit_exponent: nonpositive time");
        pairs.emplace_back(static_cast<double>(r.T), r.median_seconds);
    }
    return fit_exponent_pairs(pairs);
}

void write_bench_csv(const std::string& path, const BenchResult& result) {
    csv::Writer w(path);
    w.row({"family", "scheme", "T", "median_seconds", "op_count"});
    for (const BenchRow& r : result)
        w.row({r.family, r.scheme, std::to_string(r.T), csv::fmt(r.median_seconds),
               csv::fmt(r.op_count)});
}

void write_machine_info(const std::string& path) {
    std::ofstream out(path);
    out << "clock_source=std::chrono::steady_clock\n";
    out << "threads=1\n";
    std::ifstream cpuinfo("/proc/cpuinfo");
    std::string line;
    while (std::getline(cpuinfo, line)) {
        if (line.rfind("model name", 0) == 0) {
            out << "cpu=" << line.substr(line.find(':') + 2) << "\n";
            break;
        }
    }
}

}  // namespace forkcast
