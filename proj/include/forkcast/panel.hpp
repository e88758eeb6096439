#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "forkcast/tensor.hpp"

namespace forkcast {

struct SeriesRecord {
    std::string id;
    std::vector<double> values;
    std::optional<Eigen::VectorXd> static_covariate;
};

/// Named frequency with its seasonality and forecast horizon, e.g.
/// Monthly -> (12, 18).
struct FrequencyMeta {
    std::string name;
    int seasonality = 1;
    int horizon = 1;
};

struct TimeSeriesPanel {
    std::vector<SeriesRecord> series;
    FrequencyMeta frequency;
};

/// 1-based inclusive phase boundaries for one series:
/// train [1..train_end], validation (train_end..val_end], test (val_end..series_end].
struct SplitSpec {
    int train_end = 0;
    int val_end = 0;
    int series_end = 0;
    int horizon = 0;
};

struct ScaleParams {
    double mean = 0;
    double std = 1;
};

struct LoadReportRow {
    std::string id;
    std::string status;  // "ok" | "dropped"
    std::string reason;
};

struct LoadResult {
    TimeSeriesPanel panel;
    std::vector<LoadReportRow> report;
    int dropped = 0;
};

/// Long-format CSV `unique_id,ds,y`. Rows are grouped by id in order of
/// first appearance and sorted by ds within a series (numeric when every ds
/// parses as an integer, lexicographic otherwise, which orders ISO-8601
/// dates correctly). Series too short to be split (< 3H+1 points) are
/// dropped and counted in the report.
LoadResult load_long_panel(const std::string& path, const FrequencyMeta& meta);

void write_long_panel(const std::string& path, const TimeSeriesPanel& panel);
void write_load_report(const std::string& path, const std::vector<LoadReportRow>& report);

/// Final 3H points are held out: validation gets H, test gets 2H, so the
/// test range contains H forecast creation dates with full target windows.
SplitSpec temporal_split(int series_length, int horizon);

enum class Phase { train, validation, test };

/// 0/1 grid over (t, h), t in [1..T] mapped to row t-1, h in [1..H] mapped
/// to column h-1. True iff t is a forecast creation date of the phase and
/// the target t+h stays inside the phase.
Tensor build_target_mask(const SplitSpec& split, int T, int H, Phase phase);

std::vector<SplitSpec> make_splits(const TimeSeriesPanel& panel);

/// Mean/std fitted on the train segment only (population std, clamped away
/// from zero), applied to the whole series.
std::pair<TimeSeriesPanel, std::vector<ScaleParams>> standard_scale(
    const TimeSeriesPanel& panel, const std::vector<SplitSpec>& splits);

inline double scale_value(double y, const ScaleParams& p) { return (y - p.mean) / p.std; }
inline double unscale_value(double z, const ScaleParams& p) { return z * p.std + p.mean; }

/// Trend + sinusoidal seasonality + Gaussian noise, deterministic in seed.
/// horizon < 0 picks 3*seasonality/2 (the monthly-style pairing).
TimeSeriesPanel synthesize_panel(int n_series, int length, int seasonality,
                                 double noise_std, uint64_t seed, int horizon = -1);

}  // namespace forkcast
