#pragma once

#include <span>
#include <string>
#include <vector>

#include "forkcast/decoder.hpp"
#include "forkcast/panel.hpp"

namespace forkcast {

/// Discrete-quantile CRPS approximation: (2/|Q|) * sum_q pinball.
double crps_from_quantiles(double y, std::span<const double> yhat_q,
                           std::span<const double> quantiles);

/// Sum of per-cell CRPS over masked (b,t,h) divided by the summed |y| over
/// the same cells. targets/mask are (B,T,H) aligned with the grid.
double scrps(const Tensor& targets, const ForecastGrid& grid, const Tensor& mask);

/// Symmetric quantile percentage change at one quantile level: mean symmetric
/// relative difference between consecutive-FCD forecasts of the same target
/// date, scaled to [0, 200]. Terms with a zero denominator contribute 0.
/// `literal_norm` divides by B*T*H instead of the number of summed terms.
double sqpc(const ForecastGrid& grid, double quantile = 0.5, bool literal_norm = false);

/// Mean absolute error of the median column over masked cells.
double mae(const Tensor& targets, const ForecastGrid& grid, const Tensor& mask);

/// Aligned evaluation inputs for a test-phase grid.
struct EvalArrays {
    Tensor targets;  // (B,T,H)
    Tensor mask;     // (B,T,H) 0/1
};

EvalArrays test_targets(const TimeSeriesPanel& panel, const ForecastGrid& grid);

struct EvalRow {
    std::string dataset;
    std::string frequency;
    std::string model;
    std::string scheme;
    std::string metric;
    double mean = 0;
    bool has_stderr = false;
    double stderr_ = 0;
};

void write_eval_report(const std::string& path, const std::vector<EvalRow>& rows);

}  // namespace forkcast
