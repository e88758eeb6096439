#pragma once

#include <string>
#include <utility>
#include <vector>

#include "forkcast/decoder.hpp"
#include "forkcast/encoders.hpp"
#include "forkcast/training.hpp"

namespace forkcast {

/// (t, h) pairs whose forecasts target date tau with horizon >= eta.
struct AvailableSet {
    int target_date = 0;
    int min_horizon = 1;
    std::vector<std::pair<int, int>> members;  // 1-based (fcd, horizon)
};

AvailableSet available_set(int tau, int eta, int T, int H);

enum class EnsembleMethod { moving_average, moving_median, cumulative_average };

EnsembleMethod ensemble_method_from_string(const std::string& s);
std::string to_string(EnsembleMethod m);

inline constexpr int kUnboundedWindow = std::numeric_limits<int>::max();

struct EnsembleSpec {
    EnsembleMethod method = EnsembleMethod::moving_average;
    int window = 18;  // most recent FCDs considered; ignored by cumulative_average
};

/// Re-indexed aggregation: the output cell (t, h) holds the aggregate of all
/// forecasts of target date t+h issued at grid FCDs <= t (horizon >= max(h,
/// eta), rolling variants keep the `window` most recent). Members never
/// leave the grid's own FCD range; cells with no members pass through.
ForecastGrid ensemble(const ForecastGrid& grid, const EnsembleSpec& spec, int eta = 1);

enum class InferenceScheme { FS, WS_restricted, WS_full };

InferenceScheme inference_scheme_from_string(const std::string& s);
std::string to_string(InferenceScheme s);

/// Forecasts for every FCD in [fcd_range.first, fcd_range.second] (1-based,
/// inclusive) of a single scaled series x (T, d_in). FS encodes the prefix
/// once and decodes every FCD; the WS variants re-encode a window per FCD
/// (length L, or the whole prefix for WS_full).
ForecastGrid cross_val_forecast(const EncoderSpec& enc, const DecoderSpec& dec,
                                ParamStore& store, const Tensor& x, InferenceScheme scheme,
                                int L, std::pair<int, int> fcd_range,
                                OpCounter* counter = nullptr);

/// Test-phase forecasts for a whole panel, in original units.
ForecastGrid forecast_panel_test(const TimeSeriesPanel& panel, const EncoderSpec& enc,
                                 const DecoderSpec& dec, ParamStore& store,
                                 InferenceScheme scheme, int L);

/// Leading-order operation counts claimed for temporal cross-validation
/// inference, by encoder family and scheme.
double analytic_op_count(InferenceScheme scheme, EncoderFamily family, double T, double L);

}  // namespace forkcast
