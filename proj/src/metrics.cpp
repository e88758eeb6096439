#include "forkcast/metrics.hpp"

#include <cmath>

#include "forkcast/csv.hpp"
#include "forkcast/errors.hpp"
#include "forkcast/training.hpp"

namespace forkcast {

double crps_from_quantiles(double y, std::span<const double> yhat_q,
                           std::span<const double> quantiles) {
    if (yhat_q.size() != quantiles.size() || quantiles.empty())
        throw ShapeError("crps_from_quantiles: quantile count mismatch");
    double acc = 0;
    for (size_t q = 0; q < quantiles.size(); ++q) acc += pinball(y, yhat_q[q], quantiles[q]);
    return 2.0 * acc / static_cast<double>(quantiles.size());
}

namespace {

void check_eval_shapes(const Tensor& targets, const ForecastGrid& grid, const Tensor& mask) {
    if (targets.ndim() != 3) throw ShapeError("targets must be (B,T,H)");
    if (!mask.same_shape(targets)) throw ShapeError("mask must match targets");
    if (targets.dim(0) != grid.n_series() || targets.dim(1) != grid.n_fcds() ||
        targets.dim(2) != grid.horizon())
        throw ShapeError("grid and targets disagree");
}

}  // namespace

double scrps(const Tensor& targets, const ForecastGrid& grid, const Tensor& mask) {
    check_eval_shapes(targets, grid, mask);
    int B = grid.n_series(), T = grid.n_fcds(), H = grid.horizon(), Q = grid.n_quantiles();
    double num = 0, den = 0;
    long n = 0;
    std::vector<double> row(static_cast<size_t>(Q));
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t)
            for (int h = 0; h < H; ++h) {
                if (mask.at(b, t, h) == 0.0) continue;
                for (int q = 0; q < Q; ++q) row[static_cast<size_t>(q)] = grid.values.at(b, t, h, q);
                num += crps_from_quantiles(targets.at(b, t, h), row, grid.quantiles);
                den += std::abs(targets.at(b, t, h));
                ++n;
            }
    if (n == 0) throw UndefinedMetricError("scrps: empty mask");
    if (den == 0) throw UndefinedMetricError("scrps: all-zero targets");
    return num / den;
}

double sqpc(const ForecastGrid& grid, double quantile, bool literal_norm) {
    int B = grid.n_series(), T = grid.n_fcds(), H = grid.horizon(), Q = grid.n_quantiles();
    int qi = -1;
    for (int q = 0; q < Q; ++q)
        if (std::abs(grid.quantiles[static_cast<size_t>(q)] - quantile) < 1e-12) qi = q;
    if (qi < 0) throw UndefinedMetricError("sqpc: quantile level not in grid");
    if (T < 2 || H < 2) throw UndefinedMetricError("sqpc: needs T >= 2 and H >= 2");

    double acc = 0;
    long n = 0;
    for (int b = 0; b < B; ++b)
        for (int t = 0; t + 1 < T; ++t)
            for (int h = 0; h + 1 < H; ++h) {
                // Same target date seen from consecutive FCDs.
                double a = grid.values.at(b, t + 1, h, qi);
                double c = grid.values.at(b, t, h + 1, qi);
                double den = std::abs(a) + std::abs(c);
                if (den > 0) acc += std::abs(a - c) / den;
                ++n;
            }
    if (n == 0) throw UndefinedMetricError("sqpc: no valid terms");
    double norm = literal_norm ? static_cast<double>(B) * T * H : static_cast<double>(n);
    return 200.0 * acc / norm;
}

double mae(const Tensor& targets, const ForecastGrid& grid, const Tensor& mask) {
    check_eval_shapes(targets, grid, mask);
    int qi = -1;
    for (size_t q = 0; q < grid.quantiles.size(); ++q)
        if (std::abs(grid.quantiles[q] - 0.5) < 1e-12) qi = static_cast<int>(q);
    if (qi < 0) throw UndefinedMetricError("mae: grid has no median column");
    double acc = 0;
    long n = 0;
    for (int b = 0; b < grid.n_series(); ++b)
        for (int t = 0; t < grid.n_fcds(); ++t)
            for (int h = 0; h < grid.horizon(); ++h) {
                if (mask.at(b, t, h) == 0.0) continue;
                acc += std::abs(targets.at(b, t, h) - grid.values.at(b, t, h, qi));
                ++n;
            }
    if (n == 0) throw UndefinedMetricError("mae: empty mask");
    return acc / static_cast<double>(n);
}

EvalArrays test_targets(const TimeSeriesPanel& panel, const ForecastGrid& grid) {
    int B = grid.n_series(), T = grid.n_fcds(), H = grid.horizon();
    if (B != static_cast<int>(panel.series.size()))
        throw ShapeError("grid series count does not match panel");
    EvalArrays out;
    out.targets = Tensor({B, T, H});
    out.mask = Tensor({B, T, H});
    for (int b = 0; b < B; ++b) {
        const auto& v = panel.series[static_cast<size_t>(b)].values;
        int off = grid.fcd_offset[static_cast<size_t>(b)];
        for (int t = 0; t < T; ++t)
            for (int h = 1; h <= H; ++h) {
                int idx = off + t + h - 1;  // 0-based target index
                if (idx >= static_cast<int>(v.size())) continue;
                out.targets.at(b, t, h - 1) = v[static_cast<size_t>(idx)];
                out.mask.at(b, t, h - 1) = 1.0;
            }
    }
    return out;
}

void write_eval_report(const std::string& path, const std::vector<EvalRow>& rows) {
    csv::Writer w(path);
    w.row({"dataset", "frequency", "model", "scheme", "metric", "mean", "stderr"});
    for (const EvalRow& r : rows)
        w.row({r.dataset, r.frequency, r.model, r.scheme, r.metric, csv::fmt(r.mean),
               r.has_stderr ? csv::fmt(r.stderr_) : ""});
}

}  // namespace forkcast
