#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "forkcast/panel.hpp"
#include "forkcast/tensor.hpp"
#include "forkcast/training.hpp"

namespace forkcast {

/// Stationary process whose autocovariance vanishes beyond lag M, realized
/// as an order-M moving average of iid Gaussian innovations with equal
/// weights, normalized to unit marginal variance at innovation_std = 1.
struct MDependentProcess {
    int M = 0;
    int P = 1;
    double innovation_std = 1.0;
    uint64_t seed = 1;
};

/// One realization of length T, shape (T, P).
Tensor gen_mdependent(const MDependentProcess& proc, int T);

/// Autocovariance gamma(b) of the generated process.
double mdependent_autocov(const MDependentProcess& proc, int lag);

/// Exact variance of the mean of T consecutive samples:
/// (1/T) * sum_{|b|<=min(M,T-1)} (1 - |b|/T) gamma(b).
double analytic_mean_variance(const MDependentProcess& proc, int T);

/// Empirical variance (averaged over coordinates) of the T-sample mean
/// across `reps` independent realizations, one pair per T.
std::vector<std::pair<double, double>> mean_estimator_variance(
    const MDependentProcess& proc, const std::vector<int>& T_grid, int reps);

/// Least-squares slope of log y on log x.
double loglog_slope(const std::vector<std::pair<double, double>>& pairs);

/// Linear autoregressor: yhat_{t+1} = c + theta_0 y_t + ... + theta_p y_{t-p}.
struct ARModelSpec {
    int order = 12;                // p; uses lags y_t .. y_{t-p}
    double intercept = 0;
    std::vector<double> theta;     // size p+1

    double predict(const std::vector<double>& y, int t) const;  // t is 1-based FCD
    int n_params() const { return order + 2; }
};

struct AblationConfig {
    std::vector<int> sample_sizes = {2, 14, 27, 40, 53, 66, 80, 93, 106, 119, 132};
    std::vector<double> learning_rates = {0.001, 0.005, 0.01, 0.05};
    int max_steps = 15000;
    double lr_decay = 0.1;
    int lr_decay_every = 1000;
    int batch_size = 1;
    uint64_t seed = 1;
    double quantile = 0.5;
    int ar_order = 12;
};

struct AblationCell {
    int sample_size;
    double lr;
    bool diverged = false;
    LossTrajectory trajectory;
};

/// One quantile-loss SGD run per (sample size, learning rate) cell; each
/// step draws `sample_size` distinct FCDs (capped at the number available —
/// the capped cell is the full forking-sequences set) from one sampled
/// series. Divergence is recorded per cell without aborting the grid.
/// Cells are independent; their RNG streams derive from (seed, cell index),
/// so results do not depend on n_threads.
std::vector<AblationCell> ar_convergence_ablation(const AblationConfig& cfg,
                                                  const TimeSeriesPanel& panel,
                                                  int n_threads = 1);

/// First step at which the trailing-smoothed loss reaches `factor` times its
/// final smoothed value.
int steps_to_threshold(const LossTrajectory& traj, double factor = 1.1, int smooth_window = 200);

struct SynthSpec {
    int length = 132;
    int seasonality = 12;
    double noise_std = 0.5;
    uint64_t skeleton_seed = 7;
};

/// Variance of the subsampled-FCD gradient estimator at a frozen parameter
/// point, per sample size. Each rep redraws the observation noise on a fixed
/// deterministic skeleton and draws a fresh FCD subset; variance is the
/// trace of the estimator covariance across reps.
std::vector<std::pair<double, double>> ar_gradient_variance(
    const SynthSpec& synth, const std::vector<int>& sample_sizes, int reps, uint64_t seed);

/// Variance of the ensembled forecast versus ensemble size, for synthetic
/// unbiased forecasts whose errors are M-dependent across FCDs.
std::vector<std::pair<double, double>> forecast_variance_decay(
    const std::vector<int>& ensemble_sizes, int M, int reps, uint64_t seed);

}  // namespace forkcast
