#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "forkcast/inference.hpp"

namespace forkcast {

struct BenchRow {
    std::string family;
    std::string scheme;
    int T = 0;
    int reps = 0;
    double median_seconds = 0;
    double op_count = 0;         // primitive work units, encoder + decoder
    double encoder_op_count = 0; // encoder share only
};

using BenchResult = std::vector<BenchRow>;

struct BenchSettings {
    std::vector<int> T_grid = {256, 512, 1024, 2048, 4096};
    int reps = 3;
    uint64_t seed = 1;
    int window_length = 0;  // WS_restricted; 0 -> max(receptive_field, 2H)
    bool time_wall_clock = true;  // counters are always recorded
};

/// Times `cross_val_forecast` over all FCDs of random fixed-weight inputs,
/// one warm-up excluded, per T. Before any timing is accepted the FS and
/// WS_full forecasts are checked to agree past the receptive field.
BenchResult run_scaling_bench(const EncoderSpec& enc, const DecoderSpec& dec,
                              InferenceScheme scheme, const BenchSettings& settings);

struct ExponentFit {
    double exponent = 0;
    double r_squared = 0;
};

/// Log-log least squares on (T, median wall time).
ExponentFit fit_exponent(const BenchResult& result);

/// Log-log least squares on arbitrary positive pairs.
ExponentFit fit_exponent_pairs(const std::vector<std::pair<double, double>>& pairs);

/// Compact hyperparameters for scaling studies; complexity orders do not
/// depend on widths, so these keep large-T runs cheap.
EncoderSpec slim_encoder(EncoderFamily family);
DecoderSpec slim_decoder();

void write_bench_csv(const std::string& path, const BenchResult& result);
void write_machine_info(const std::string& path);

}  // namespace forkcast
