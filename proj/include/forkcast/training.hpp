#pragma once

#include <cstdint>
#include <vector>

#include "forkcast/decoder.hpp"
#include "forkcast/encoders.hpp"
#include "forkcast/panel.hpp"

namespace forkcast {

enum class Scheme { FS, WS };

Scheme scheme_from_string(const std::string& s);
std::string to_string(Scheme s);

struct TrainConfig {
    Scheme scheme = Scheme::FS;
    EncoderSpec encoder;
    DecoderSpec decoder;
    int batch_size = 8;   // FS: series per step, WS: windows per step
    double lr0 = 0.001;
    int max_steps = 30000;
    double lr_decay = 0.1;
    int lr_step = 10000;
    int window_length = 0;  // WS only; 0 -> max(receptive_field, 2H)
    uint64_t seed = 1;
};

struct TrajPoint {
    int step;
    double loss;
    double lr;
    double grad_norm;
};

using LossTrajectory = std::vector<TrajPoint>;

void write_trajectory_csv(const std::string& path, const LossTrajectory& traj);

/// Raised when the training loss becomes non-finite; carries the trajectory
/// recorded up to that point.
struct DivergenceError : Error {
    explicit DivergenceError(LossTrajectory t)
        : Error("training loss diverged"), trajectory(std::move(t)) {}
    LossTrajectory trajectory;
};

double pinball(double y, double yhat, double q);

/// Mean pinball over masked (b,t,h) cells and all quantile columns.
/// grid (B,T,H,Q), targets (B,T,H), mask 0/1 (B,T,H).
double fs_loss(const Tensor& grid, const Tensor& targets, const Tensor& mask,
               const std::vector<double>& quantiles);

/// Step-decay schedule: lr0 * decay^floor(step / lr_step).
double lr_at(int step, const TrainConfig& cfg);

/// Per-series training state: scaled inputs, target blocks and the train
/// mask, all aligned on 1-based series indices.
struct PreparedSeries {
    Tensor x;        // (train_end, d_in) scaled values
    Tensor targets;  // (train_end, H) scaled, zero where masked out
    Tensor mask;     // (train_end, H) 0/1 train mask
    SplitSpec split;
    ScaleParams scale;
    std::vector<double> scaled_values;  // full series, scaled
};

std::vector<PreparedSeries> prepare_panel(const TimeSeriesPanel& panel);

/// Effective window length for window-sampled training/inference.
int resolve_window_length(const TrainConfig& cfg);

struct WsWindow {
    int series = 0;
    int fcd = 0;        // 1-based
    Tensor window;      // (L, d_in)
    Tensor targets;     // (H)
};

/// Forecast creation dates valid for window sampling: the window fits and
/// every horizon target stays inside the train segment.
std::pair<int, int> valid_ws_fcd_range(const SplitSpec& split, int L);

std::vector<WsWindow> ws_sample(const std::vector<PreparedSeries>& prepared, int L,
                                int batch_size, Rng& rng);

struct TrainResult {
    ParamStore params;
    LossTrajectory trajectory;
};

/// Deterministic in cfg.seed. FS aggregates the masked multi-horizon loss
/// over every train FCD of each sampled series; WS averages over sampled
/// windows only.
TrainResult train(const TimeSeriesPanel& panel, const TrainConfig& cfg);

}  // namespace forkcast
