#include "forkcast/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "forkcast/errors.hpp"
#include "forkcast/inference.hpp"
#include "forkcast/rng.hpp"

namespace forkcast {

Tensor gen_mdependent(const MDependentProcess& proc, int T) {
    if (T < 1 || proc.P < 1 || proc.M < 0) throw DomainError("gen_mdependent: bad dimensions");
    if (proc.innovation_std <= 0) throw DomainError("gen_mdependent: nonpositive innovation std");
    Rng rng(proc.seed);
    double w = proc.innovation_std / std::sqrt(static_cast<double>(proc.M + 1));
    Tensor out({T, proc.P});
    // Innovations reach back M steps before the start.
    std::vector<double> eps(static_cast<size_t>(T + proc.M));
    for (int p = 0; p < proc.P; ++p) {
        for (auto& e : eps) e = rng.normal();
        for (int t = 0; t < T; ++t) {
            double s = 0;
            for (int i = 0; i <= proc.M; ++i) s += eps[static_cast<size_t>(t + proc.M - i)];
            out.at(t, p) = w * s;
        }
    }
    return out;
}

double mdependent_autocov(const MDependentProcess& proc, int lag) {
    int b = std::abs(lag);
    if (b > proc.M) return 0;
    double v = proc.innovation_std * proc.innovation_std;
    return v * static_cast<double>(proc.M + 1 - b) / static_cast<double>(proc.M + 1);
}

double analytic_mean_variance(const MDependentProcess& proc, int T) {
    double acc = 0;
    int bmax = std::min(proc.M, T - 1);
    for (int b = -bmax; b <= bmax; ++b)
        acc += (1.0 - std::abs(b) / static_cast<double>(T)) * mdependent_autocov(proc, b);
    return acc / T;
}

std::vector<std::pair<double, double>> mean_estimator_variance(
    const MDependentProcess& proc, const std::vector<int>& T_grid, int reps) {
    if (reps < 2) throw DomainError("mean_estimator_variance: reps too small");
    std::vector<std::pair<double, double>> out;
    out.reserve(T_grid.size());
    for (size_t ti = 0; ti < T_grid.size(); ++ti) {
        int T = T_grid[ti];
        std::vector<double> means(static_cast<size_t>(reps) * proc.P);
        for (int r = 0; r < reps; ++r) {
            MDependentProcess local = proc;
            local.seed = derive_seed(proc.seed, (ti << 20) + static_cast<uint64_t>(r));
            Tensor sample = gen_mdependent(local, T);
            for (int p = 0; p < proc.P; ++p) {
                double m = 0;
                for (int t = 0; t < T; ++t) m += sample.at(t, p);
                means[static_cast<size_t>(r) * proc.P + p] = m / T;
            }
        }
        // Per-coordinate sample variance, averaged across coordinates.
        double var = 0;
        for (int p = 0; p < proc.P; ++p) {
            double mean = 0;
            for (int r = 0; r < reps; ++r) mean += means[static_cast<size_t>(r) * proc.P + p];
            mean /= reps;
            double acc = 0;
            for (int r = 0; r < reps; ++r) {
                double d = means[static_cast<size_t>(r) * proc.P + p] - mean;
                acc += d * d;
            }
            var += acc / (reps - 1);
        }
        out.emplace_back(static_cast<double>(T), var / proc.P);
    }
    return out;
}

double loglog_slope(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 3) throw DomainError("loglog_slope: need at least 3 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pairs) {
        if (x <= 0 || y <= 0) throw DomainError("loglog_slope: nonpositive value");
        double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    double n = static_cast<double>(pairs.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double ARModelSpec::predict(const std::vector<double>& y, int t) const {
    double v = intercept;
    for (int i = 0; i <= order; ++i) v += theta[static_cast<size_t>(i)] * y[static_cast<size_t>(t - 1 - i)];
    return v;
}

namespace {

struct ArGrad {
    double d_intercept = 0;
    std::vector<double> d_theta;
};

// Pinball subgradient for one forecast creation date.
void ar_cell_grad(const ARModelSpec& model, const std::vector<double>& y, int t, double q,
                  ArGrad& g, double& loss_acc) {
    double yhat = model.predict(y, t);
    double target = y[static_cast<size_t>(t)];
    double diff = target - yhat;
    loss_acc += std::max(q * diff, (q - 1.0) * diff);
    double dl = diff > 0 ? -q : (diff < 0 ? 1.0 - q : 0.0);
    g.d_intercept += dl;
    for (int i = 0; i <= model.order; ++i)
        g.d_theta[static_cast<size_t>(i)] += dl * y[static_cast<size_t>(t - 1 - i)];
}

// n distinct draws from [lo, hi] (1-based), capped at the range size.
// Returned sorted so accumulation order is canonical: drawing the full set
// is then bit-identical to not sampling at all.
std::vector<int> sample_fcds(int lo, int hi, int n, Rng& rng) {
    int count = hi - lo + 1;
    n = std::min(n, count);
    std::vector<int> pool(static_cast<size_t>(count));
    std::iota(pool.begin(), pool.end(), lo);
    for (int i = 0; i < n; ++i) {
        int j = i + rng.below(count - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(n));
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

namespace {

AblationCell run_ablation_cell(const AblationConfig& cfg, const TimeSeriesPanel& panel,
                               const std::vector<SplitSpec>& splits, int n, double lr0,
                               uint64_t cell_seed) {
    int p = cfg.ar_order;
    AblationCell cell;
    cell.sample_size = n;
    cell.lr = lr0;
    Rng rng(cell_seed);
    ARModelSpec model;
    model.order = p;
    model.theta.assign(static_cast<size_t>(p + 1), 0.0);

    try {
        for (int step = 0; step < cfg.max_steps; ++step) {
            double lr = lr0 * std::pow(cfg.lr_decay, static_cast<double>(step / cfg.lr_decay_every));
            ArGrad g;
            g.d_theta.assign(static_cast<size_t>(p + 1), 0.0);
            double loss = 0;
            long terms = 0;
            for (int bi = 0; bi < cfg.batch_size; ++bi) {
                size_t b = panel.series.size() == 1
                               ? 0
                               : static_cast<size_t>(rng.below(static_cast<int>(panel.series.size())));
                const auto& y = panel.series[b].values;
                int lo = p + 1;
                int hi = splits[b].train_end - 1;
                if (lo > hi) throw SamplerError("series too short for AR order");
                for (int t : sample_fcds(lo, hi, n, rng)) {
                    ar_cell_grad(model, y, t, cfg.quantile, g, loss);
                    ++terms;
                }
            }
            loss /= static_cast<double>(terms);
            if (!std::isfinite(loss)) throw DivergenceError(std::move(cell.trajectory));
            double inv = 1.0 / static_cast<double>(terms);
            double gnorm2 = g.d_intercept * g.d_intercept * inv * inv;
            model.intercept -= lr * g.d_intercept * inv;
            for (int i = 0; i <= p; ++i) {
                double gi = g.d_theta[static_cast<size_t>(i)] * inv;
                gnorm2 += gi * gi;
                model.theta[static_cast<size_t>(i)] -= lr * gi;
            }
            cell.trajectory.push_back({step, loss, lr, std::sqrt(gnorm2)});
        }
    } catch (const DivergenceError& e) {
        cell.diverged = true;
        cell.trajectory = e.trajectory;
    }
    return cell;
}

}  // namespace

std::vector<AblationCell> ar_convergence_ablation(const AblationConfig& cfg,
                                                  const TimeSeriesPanel& panel, int n_threads) {
    if (panel.series.empty()) throw DomainError("ablation: empty panel");
    // 1-step-ahead problem: split with horizon 1. Values are used as given;
    // the linear model carries an intercept and the quantile-loss gradient
    // scales with the data, which the fixed learning-rate grid relies on.
    std::vector<SplitSpec> splits;
    for (const auto& s : panel.series)
        splits.push_back(temporal_split(static_cast<int>(s.values.size()), 1));

    struct CellPlan {
        int n;
        double lr;
        uint64_t seed;
    };
    std::vector<CellPlan> plan;
    int cell_idx = 0;
    for (int n : cfg.sample_sizes)
        for (double lr0 : cfg.learning_rates)
            plan.push_back({n, lr0, derive_seed(cfg.seed, static_cast<uint64_t>(cell_idx++))});

    std::vector<AblationCell> cells(plan.size());
    if (n_threads > 1) {
        std::vector<std::future<AblationCell>> futs;
        for (const CellPlan& cp : plan)
            futs.push_back(std::async(std::launch::async, run_ablation_cell, std::cref(cfg),
                                      std::cref(panel), std::cref(splits), cp.n, cp.lr, cp.seed));
        for (size_t i = 0; i < futs.size(); ++i) cells[i] = futs[i].get();
    } else {
        for (size_t i = 0; i < plan.size(); ++i)
            cells[i] = run_ablation_cell(cfg, panel, splits, plan[i].n, plan[i].lr, plan[i].seed);
    }
    return cells;
}

int steps_to_threshold(const LossTrajectory& traj, double factor, int smooth_window) {
    if (traj.empty()) throw DomainError("steps_to_threshold: empty trajectory");
    std::vector<double> smooth(traj.size());
    double acc = 0;
    for (size_t i = 0; i < traj.size(); ++i) {
        acc += traj[i].loss;
        if (i >= static_cast<size_t>(smooth_window)) acc -= traj[i - static_cast<size_t>(smooth_window)].loss;
        smooth[i] = acc / std::min<double>(static_cast<double>(i + 1), smooth_window);
    }
    double target = factor * smooth.back();
    for (size_t i = 0; i < smooth.size(); ++i)
        if (smooth[i] <= target) return traj[i].step;
    return traj.back().step;
}

std::vector<std::pair<double, double>> ar_gradient_variance(
    const SynthSpec& synth, const std::vector<int>& sample_sizes, int reps, uint64_t seed) {
    if (reps < 2) throw DomainError("ar_gradient_variance: reps too small");
    TimeSeriesPanel skeleton_panel =
        synthesize_panel(1, synth.length, synth.seasonality, 0.0, synth.skeleton_seed, 1);
    std::vector<double> skeleton = skeleton_panel.series[0].values;

    // Work in standardized units.
    double mean = std::accumulate(skeleton.begin(), skeleton.end(), 0.0) / skeleton.size();
    double var = 0;
    for (double v : skeleton) var += (v - mean) * (v - mean);
    double sd = std::max(std::sqrt(var / skeleton.size()), 1e-12);
    for (double& v : skeleton) v = (v - mean) / sd;

    // Frozen point: least-squares fit on the noiseless skeleton, so that
    // residuals on noisy draws are noise-dominated.
    const int p = 12;
    int lo = p + 1, hi = synth.length - 1;
    int rows = hi - lo + 1;
    Eigen::MatrixXd X(rows, p + 2);
    Eigen::VectorXd yv(rows);
    for (int t = lo; t <= hi; ++t) {
        int r = t - lo;
        X(r, 0) = 1.0;
        for (int i = 0; i <= p; ++i) X(r, 1 + i) = skeleton[static_cast<size_t>(t - 1 - i)];
        yv(r) = skeleton[static_cast<size_t>(t)];
    }
    Eigen::VectorXd beta = X.colPivHouseholderQr().solve(yv);
    ARModelSpec model;
    model.order = p;
    model.intercept = beta(0);
    model.theta.assign(static_cast<size_t>(p + 1), 0.0);
    for (int i = 0; i <= p; ++i) model.theta[static_cast<size_t>(i)] = beta(1 + i);

    int dim = model.n_params();
    std::vector<std::pair<double, double>> out;
    for (size_t si = 0; si < sample_sizes.size(); ++si) {
        int n = std::min(sample_sizes[si], rows);
        std::vector<double> draws(static_cast<size_t>(reps) * dim);
        for (int r = 0; r < reps; ++r) {
            Rng rng(derive_seed(seed, (si << 24) + static_cast<uint64_t>(r)));
            std::vector<double> y = skeleton;
            for (double& v : y) v += synth.noise_std * rng.normal();
            ArGrad g;
            g.d_theta.assign(static_cast<size_t>(p + 1), 0.0);
            double loss = 0;
            for (int t : sample_fcds(lo, hi, n, rng)) ar_cell_grad(model, y, t, 0.5, g, loss);
            double inv = 1.0 / n;
            draws[static_cast<size_t>(r) * dim] = g.d_intercept * inv;
            for (int i = 0; i <= p; ++i)
                draws[static_cast<size_t>(r) * dim + 1 + i] = g.d_theta[static_cast<size_t>(i)] * inv;
        }
        double trace = 0;
        for (int c = 0; c < dim; ++c) {
            double m = 0;
            for (int r = 0; r < reps; ++r) m += draws[static_cast<size_t>(r) * dim + c];
            m /= reps;
            double acc = 0;
            for (int r = 0; r < reps; ++r) {
                double d = draws[static_cast<size_t>(r) * dim + c] - m;
                acc += d * d;
            }
            trace += acc / (reps - 1);
        }
        out.emplace_back(static_cast<double>(n), trace);
    }
    return out;
}

std::vector<std::pair<double, double>> forecast_variance_decay(
    const std::vector<int>& ensemble_sizes, int M, int reps, uint64_t seed) {
    if (reps < 2) throw DomainError("forecast_variance_decay: reps too small");
    int H = *std::max_element(ensemble_sizes.begin(), ensemble_sizes.end());
    int T = H + 1;
    const double truth = 1.0;

    // One grid per rep: every forecast issued at FCD t carries that FCD's
    // error, M-dependent across FCDs.
    std::vector<std::vector<double>> ensembled(
        ensemble_sizes.size(), std::vector<double>(static_cast<size_t>(reps)));
    for (int r = 0; r < reps; ++r) {
        MDependentProcess proc;
        proc.M = M;
        proc.P = 1;
        proc.seed = derive_seed(seed, static_cast<uint64_t>(r));
        Tensor errs = gen_mdependent(proc, T);
        ForecastGrid grid;
        grid.values = Tensor({1, T, H, 1});
        grid.fcd_offset = {1};
        grid.ids = {"sim"};
        grid.quantiles = {0.5};
        for (int t = 0; t < T; ++t)
            for (int h = 0; h < H; ++h) grid.values.at(0, t, h, 0) = truth + errs.at(t, 0);

        EnsembleSpec spec;
        spec.method = EnsembleMethod::cumulative_average;
        for (size_t si = 0; si < ensemble_sizes.size(); ++si) {
            int n = ensemble_sizes[si];
            int eta = H - n + 1;
            ForecastGrid agg = ensemble(grid, spec, eta);
            // Cell holding target date T+1 at horizon eta.
            ensembled[si][static_cast<size_t>(r)] = agg.values.at(0, T - eta, eta - 1, 0);
        }
    }

    std::vector<std::pair<double, double>> out;
    for (size_t si = 0; si < ensemble_sizes.size(); ++si) {
        double m = 0;
        for (double v : ensembled[si]) m += v;
        m /= reps;
        double acc = 0;
        for (double v : ensembled[si]) acc += (v - m) * (v - m);
        out.emplace_back(static_cast<double>(ensemble_sizes[si]), acc / (reps - 1));
    }
    return out;
}

}  // namespace forkcast
