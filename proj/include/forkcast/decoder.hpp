#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forkcast/autodiff.hpp"

namespace forkcast {

/// Horizon-agnostic trunk feeding per-horizon heads, each emitting one value
/// per quantile level. Quantiles stay in the declared order; no monotone
/// rearrangement is applied.
struct DecoderSpec {
    int agnostic_dim = 100;
    int specific_dim = 20;
    int horizon = 18;
    std::vector<double> quantiles = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    int n_quantiles() const { return static_cast<int>(quantiles.size()); }
    int median_index() const;
};

void init_decoder_params(const DecoderSpec& spec, int hidden_dim, int static_dim,
                         ParamStore& store, Rng& rng, const std::string& prefix = "dec.");

Eigen::Index decoder_param_count(const DecoderSpec& spec, int hidden_dim, int static_dim);

/// All forecast creation dates at once: hs (T, d_h) -> (T, H, Q). A static
/// covariate, when present, is appended to the trunk input at every row.
Var decode_all(const DecoderSpec& spec, ParamStore& store, Tape& tape, Var hs,
               const std::optional<Tensor>& static_cov = std::nullopt,
               const std::string& prefix = "dec.");

/// Single hidden row (1, d_h) -> (H, Q).
Var decode(const DecoderSpec& spec, ParamStore& store, Tape& tape, Var h_t,
           const std::optional<Tensor>& static_cov = std::nullopt,
           const std::string& prefix = "dec.");

/// Dense multi-series prediction block (B, T, H, Q) in the units recorded by
/// `scaled`; `fcd_offset[b]` maps grid axis t to the absolute 1-based series
/// index of the forecast creation date.
struct ForecastGrid {
    Tensor values;  // (B, T, H, Q)
    std::vector<int> fcd_offset;
    std::vector<std::string> ids;
    std::vector<double> quantiles;
    bool scaled = false;

    int n_series() const { return values.dim(0); }
    int n_fcds() const { return values.dim(1); }
    int horizon() const { return values.dim(2); }
    int n_quantiles() const { return values.dim(3); }
};

void write_grid_csv(const std::string& path, const ForecastGrid& grid);
ForecastGrid read_grid_csv(const std::string& path);

}  // namespace forkcast
