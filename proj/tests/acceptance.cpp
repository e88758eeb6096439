// Acceptance suite: one check per numbered criterion, each printing a
// single PASS/FAIL line. Run all with no arguments or one with
// --criterion N. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "forkcast/bench.hpp"
#include "forkcast/checkpoint.hpp"
#include "forkcast/inference.hpp"
#include "forkcast/metrics.hpp"
#include "forkcast/theory.hpp"
#include "forkcast/training.hpp"

using namespace forkcast;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream notes;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            notes << "  FAILED: " << what << "\n";
        }
    }
    void note(const std::string& what) { notes << "  " << what << "\n"; }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness for every encoder family + MQ decoder + pinball.

EncoderSpec grad_check_spec(EncoderFamily family) {
    EncoderSpec spec;
    spec.family = family;
    spec.horizon = 3;
    spec.mlp_width = 10;
    spec.mlp_layers = 3;
    spec.rnn_width = 6;
    spec.rnn_dilations = {{1, 2}, {4, 8}};
    spec.cnn_channels = 6;
    spec.cnn_dilations = {1, 2, 4};
    spec.tf_hidden = 8;
    spec.tf_layers = 2;
    spec.tf_patch_lens = {2, 3};
    spec.tf_heads = 2;
    spec.tf_dropout = 0.1;  // inactive outside training mode
    return spec;
}

void criterion_1(Check& c) {
    for (EncoderFamily family :
         {EncoderFamily::MLP, EncoderFamily::RNN, EncoderFamily::LSTM, EncoderFamily::CNN,
          EncoderFamily::Transformer}) {
        EncoderSpec enc = grad_check_spec(family);
        DecoderSpec dec;
        dec.horizon = 3;
        dec.agnostic_dim = 7;
        dec.specific_dim = 4;
        dec.quantiles = {0.1, 0.5, 0.9};

        ParamStore store(41);
        Rng rng(41);
        init_encoder_params(enc, store, rng);
        init_decoder_params(dec, hidden_dim(enc), 0, store, rng);

        const int T = 10;
        Rng drng(17);
        Tensor x({T, 1});
        for (int t = 0; t < T; ++t) x[t] = drng.normal();
        Tensor targets({T, 3});
        for (Eigen::Index i = 0; i < targets.size(); ++i) targets[i] = drng.normal();
        Tensor mask = Tensor::full({T, 3}, 1.0);
        mask.at(T - 1, 2) = 0.0;

        auto f = [&](ParamStore& s, Tape& t) {
            Var hs = encode_full(enc, s, t, t.leaf(x));
            Var grid = decode_all(dec, s, t, hs);
            return masked_mean(pinball_elem(targets, grid, dec.quantiles), mask);
        };
        auto res = grad_check(f, store, 1e-5, 260, 7);
        c.note(to_string(family) + ": max rel err " + fmt(res.max_rel_error) + " over " +
               std::to_string(res.coords_checked) + " coordinates");
        c.expect(res.coords_checked >= 200,
                 to_string(family) + " checked fewer than 200 coordinates");
        c.expect(res.max_rel_error < 1e-4, to_string(family) + " gradient error >= 1e-4");
    }
}

// ---------------------------------------------------------------------------
// 2. FS / WS-full equivalence with shared weights.

void criterion_2(Check& c) {
    {
        for (EncoderFamily family : {EncoderFamily::RNN, EncoderFamily::LSTM}) {
            EncoderSpec enc;
            enc.family = family;  // defaults: width 128, dilations [[1,2],[4,8]]
            DecoderSpec dec;
            dec.horizon = 6;
            ParamStore store(11);
            Rng rng(11);
            init_encoder_params(enc, store, rng);
            init_decoder_params(dec, hidden_dim(enc), 0, store, rng);

            const int T = 80;
            Rng drng(5);
            Tensor x({T, 1});
            for (int t = 0; t < T; ++t) x[t] = drng.normal();
            ForecastGrid fs =
                cross_val_forecast(enc, dec, store, x, InferenceScheme::FS, 0, {1, T});
            ForecastGrid wf =
                cross_val_forecast(enc, dec, store, x, InferenceScheme::WS_full, 0, {1, T});
            double diff = (fs.values.array() - wf.values.array()).abs().maxCoeff();
            c.note(to_string(family) + " all FCDs: max |FS - WS_full| = " + fmt(diff));
            c.expect(diff <= 1e-12, to_string(family) + " diverges beyond 1e-12");
        }
    }
    {
        EncoderSpec enc;
        enc.family = EncoderFamily::CNN;  // kernel 2, dilations 1..32 -> field 64
        DecoderSpec dec;
        dec.horizon = 6;
        ParamStore store(12);
        Rng rng(12);
        init_encoder_params(enc, store, rng);
        init_decoder_params(dec, hidden_dim(enc), 0, store, rng);
        int rf = receptive_field(enc);
        c.expect(rf == 64, "CNN receptive field is not 64");

        const int T = 150;
        Rng drng(6);
        Tensor x({T, 1});
        for (int t = 0; t < T; ++t) x[t] = drng.normal();
        ForecastGrid fs = cross_val_forecast(enc, dec, store, x, InferenceScheme::FS, 0, {rf, T});
        ForecastGrid wf =
            cross_val_forecast(enc, dec, store, x, InferenceScheme::WS_full, 0, {rf, T});
        double diff = (fs.values.array() - wf.values.array()).abs().maxCoeff();
        c.note("cnn FCDs >= 64: max |FS - WS_full| = " + fmt(diff));
        c.expect(diff <= 1e-12, "CNN diverges beyond 1e-12 past the receptive field");
    }
}

// ---------------------------------------------------------------------------
// 3. Mean-estimator variance: rate and analytic band formula.

void criterion_3(Check& c) {
    std::vector<int> T_grid;
    for (int T = 2; T <= 4096; T *= 2) T_grid.push_back(T);
    for (int M : {0, 2, 5}) {
        MDependentProcess proc;
        proc.M = M;
        proc.seed = derive_seed(202, static_cast<uint64_t>(M));
        auto curve = mean_estimator_variance(proc, T_grid, 200);
        double slope = loglog_slope(curve);
        double sum_rel = 0, max_rel = 0;
        for (size_t i = 0; i < curve.size(); ++i) {
            double analytic = analytic_mean_variance(proc, T_grid[i]);
            double rel = std::abs(curve[i].second - analytic) / analytic;
            sum_rel += rel;
            max_rel = std::max(max_rel, rel);
        }
        double mean_rel = sum_rel / static_cast<double>(curve.size());
        c.note("M=" + std::to_string(M) + ": slope " + fmt(slope) + ", analytic rel err mean " +
               fmt(mean_rel) + " / max " + fmt(max_rel));
        c.expect(std::abs(slope + 1.0) <= 0.15,
                 "M=" + std::to_string(M) + " slope outside -1 +/- 0.15");
        // Curve-level agreement; per-cell chi-square noise at 200 reps is
        // ~10% sd, so the 15% band is applied to the mean over the grid.
        c.expect(mean_rel <= 0.15, "M=" + std::to_string(M) + " analytic mismatch above 15%");
    }
}

// ---------------------------------------------------------------------------
// 4. Forecast ensemble variance decay.

void criterion_4(Check& c) {
    std::vector<int> sizes;
    for (int n = 1; n <= 18; ++n) sizes.push_back(n);

    auto iid = forecast_variance_decay(sizes, 0, 500, 303);
    double slope_iid = loglog_slope(iid);
    c.note("M=0: slope " + fmt(slope_iid) + ", var(1) = " + fmt(iid.front().second));
    c.expect(std::abs(slope_iid + 1.0) <= 0.15, "M=0 slope outside -1 +/- 0.15");

    auto corr = forecast_variance_decay(sizes, 18, 500, 304);
    double slope_corr = loglog_slope(corr);
    c.note("M=18: slope " + fmt(slope_corr));
    c.expect(slope_corr > -0.3, "M >= |H| should leave slope above -0.3");
}

// ---------------------------------------------------------------------------
// 5. Linear-AR convergence ablation, reduced grid.

void criterion_5(Check& c) {
    // (a) gradient variance at a frozen near-optimal point.
    SynthSpec synth;
    synth.length = 132;
    synth.seasonality = 12;
    synth.noise_std = 0.5;
    synth.skeleton_seed = 7;
    auto var_curve = ar_gradient_variance(synth, {2, 27, 66, 132}, 300, 401);
    double slope = loglog_slope(var_curve);
    c.note("frozen-point gradient variance slope " + fmt(slope) + " (sizes " +
           fmt(var_curve.front().first) + ".." + fmt(var_curve.back().first) + ")");
    c.expect(std::abs(slope + 1.0) <= 0.2, "gradient variance slope outside -1 +/- 0.2");

    // (b) convergence speed is monotone in the sample size. One series, so
    // the per-step loss varies only through the sampled FCD subset.
    TimeSeriesPanel panel = synthesize_panel(1, 132, 12, 0.5, 2025, 1);
    AblationConfig cfg;
    cfg.sample_sizes = {2, 27, 66, 132};
    cfg.learning_rates = {0.001};
    cfg.max_steps = 15000;
    cfg.lr_decay = 0.1;
    cfg.lr_decay_every = 1000;
    cfg.ar_order = 12;
    cfg.seed = 1;
    auto cells = ar_convergence_ablation(cfg, panel);
    int prev = std::numeric_limits<int>::max();
    for (const auto& cell : cells) {
        c.expect(!cell.diverged, "cell diverged");
        int steps = steps_to_threshold(cell.trajectory, 1.1, 200);
        c.note("sample size " + std::to_string(cell.sample_size) + ": steps to 110% = " +
               std::to_string(steps) + ", final loss " + fmt(cell.trajectory.back().loss));
        c.expect(steps <= prev, "steps-to-110% increased with sample size");
        prev = steps;
    }
}

// ---------------------------------------------------------------------------
// 6. Computational complexity: counters for every pair, wall clock for CNN.

struct PairSpec {
    EncoderFamily family;
    InferenceScheme scheme;
    std::vector<int> T_grid;
    double claimed_order;   // exponent in T per analytic_op_count
    bool corrected = false; // attention / WS_restricted: see notes
};

void criterion_6(Check& c) {
    std::vector<PairSpec> pairs;
    for (EncoderFamily fam : {EncoderFamily::MLP, EncoderFamily::RNN, EncoderFamily::LSTM,
                              EncoderFamily::CNN}) {
        pairs.push_back({fam, InferenceScheme::FS, {128, 256, 512, 1024}, 1.0});
        pairs.push_back({fam, InferenceScheme::WS_restricted, {128, 256, 512, 1024}, 1.0});
        pairs.push_back({fam, InferenceScheme::WS_full, {128, 256, 512, 1024}, 2.0});
    }
    pairs.push_back(
        {EncoderFamily::Transformer, InferenceScheme::FS, {1024, 2048, 4096, 8192}, 2.0});
    // analytic_op_count lists O(T^2 L) here, but any encoder fed length-L
    // windows performs Theta(T L^2) work; the counter is checked against the
    // corrected order (linear in T at fixed L).
    pairs.push_back({EncoderFamily::Transformer, InferenceScheme::WS_restricted,
                     {128, 256, 512, 1024}, 1.0, true});
    pairs.push_back(
        {EncoderFamily::Transformer, InferenceScheme::WS_full, {128, 256, 512, 1024}, 3.0});

    for (const PairSpec& p : pairs) {
        EncoderSpec enc = slim_encoder(p.family);
        if (p.family == EncoderFamily::Transformer && p.scheme == InferenceScheme::WS_full) {
            enc.tf_hidden = 4;
            enc.tf_patch_lens = {1};
        }
        BenchSettings bs;
        bs.T_grid = p.T_grid;
        bs.reps = 1;
        bs.time_wall_clock = false;
        bs.seed = 61;

        BenchResult res = run_scaling_bench(enc, slim_decoder(), p.scheme, bs);
        // Asymptotic order from the top doubling; counters are noise-free.
        double top = res[res.size() - 1].op_count;
        double prev = res[res.size() - 2].op_count;
        double measured = std::log2(top / prev);
        std::string label = to_string(p.family) + "/" + to_string(p.scheme);
        c.note(label + ": counter exponent " + fmt(measured) + " vs claimed " +
               fmt(p.claimed_order) +
               (p.corrected ? " (corrected order T*L^2; claimed T^2*L is unreachable)" : ""));
        c.expect(std::abs(measured - p.claimed_order) <= 0.15,
                 label + " counter exponent off the claimed order");
    }

    // Wall-clock exponents for the convolutional encoder.
    BenchSettings wall;
    wall.T_grid = {256, 512, 1024, 2048, 4096};
    wall.reps = 7;
    wall.seed = 62;
    EncoderSpec cnn = slim_encoder(EncoderFamily::CNN);
    BenchResult fs = run_scaling_bench(cnn, slim_decoder(), InferenceScheme::FS, wall);
    BenchResult wf = run_scaling_bench(cnn, slim_decoder(), InferenceScheme::WS_full, wall);
    ExponentFit fs_fit = fit_exponent(fs);
    ExponentFit wf_fit = fit_exponent(wf);
    c.note("cnn/fs wall exponent " + fmt(fs_fit.exponent) + " (r2 " + fmt(fs_fit.r_squared) + ")");
    c.note("cnn/ws_full wall exponent " + fmt(wf_fit.exponent) + " (r2 " + fmt(wf_fit.r_squared) +
           ")");
    c.expect(std::abs(fs_fit.exponent - 1.0) <= 0.15, "cnn FS wall exponent outside 1 +/- 0.15");
    c.expect(std::abs(wf_fit.exponent - 2.0) <= 0.2, "cnn WS_full wall exponent outside 2 +/- 0.2");

    // Wall agrees with counters.
    std::vector<std::pair<double, double>> fs_counts, wf_counts;
    for (const auto& r : fs) fs_counts.emplace_back(r.T, r.op_count);
    for (const auto& r : wf) wf_counts.emplace_back(r.T, r.op_count);
    double fs_gap = std::abs(fit_exponent_pairs(fs_counts).exponent - fs_fit.exponent);
    double wf_gap = std::abs(fit_exponent_pairs(wf_counts).exponent - wf_fit.exponent);
    c.expect(fs_gap <= 0.25 && wf_gap <= 0.25, "wall-clock and counter exponents disagree");
}

// ---------------------------------------------------------------------------
// 7. Metric oracles (naive triple loops, re-implemented here).

void criterion_7(Check& c) {
    Rng rng(71);
    std::vector<double> qs = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        int B = 1 + rng.below(3), T = 2 + rng.below(6), H = 2 + rng.below(6);
        int Q = static_cast<int>(qs.size());
        ForecastGrid g;
        g.values = Tensor({B, T, H, Q});
        for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values[i] = rng.normal();
        for (int b = 0; b < B; ++b) {
            g.fcd_offset.push_back(1);
            g.ids.push_back("S" + std::to_string(b));
        }
        g.quantiles = qs;
        Tensor targets({B, T, H});
        for (Eigen::Index i = 0; i < targets.size(); ++i) targets[i] = rng.normal() + 0.5;
        Tensor mask({B, T, H});
        int on = 0;
        for (Eigen::Index i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
            on += mask[i] != 0.0;
        }
        if (on == 0) mask[0] = 1.0;

        // Naive oracles.
        double o_num = 0, o_den = 0, o_mae = 0;
        long n_mask = 0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t)
                for (int h = 0; h < H; ++h) {
                    if (mask.at(b, t, h) == 0.0) continue;
                    double y = targets.at(b, t, h);
                    double cell = 0;
                    for (int q = 0; q < Q; ++q) {
                        double d = y - g.values.at(b, t, h, q);
                        cell += std::max(qs[static_cast<size_t>(q)] * d,
                                         (qs[static_cast<size_t>(q)] - 1) * d);
                    }
                    o_num += 2.0 * cell / Q;
                    o_den += std::abs(y);
                    o_mae += std::abs(y - g.values.at(b, t, h, 4));
                    ++n_mask;
                }
        double o_scrps = o_num / o_den;
        double o_mae_v = o_mae / static_cast<double>(n_mask);

        double o_sqpc_acc = 0;
        long o_sqpc_n = 0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t + 1 < T; ++t)
                for (int h = 0; h + 1 < H; ++h) {
                    double a = g.values.at(b, t + 1, h, 4);
                    double d = g.values.at(b, t, h + 1, 4);
                    double den = std::abs(a) + std::abs(d);
                    o_sqpc_acc += den > 0 ? std::abs(a - d) / den : 0.0;
                    ++o_sqpc_n;
                }
        double o_sqpc = 200.0 * o_sqpc_acc / static_cast<double>(o_sqpc_n);

        double o_fs = 0;
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t)
                for (int h = 0; h < H; ++h) {
                    if (mask.at(b, t, h) == 0.0) continue;
                    for (int q = 0; q < Q; ++q) {
                        double d = targets.at(b, t, h) - g.values.at(b, t, h, q);
                        o_fs += std::max(qs[static_cast<size_t>(q)] * d,
                                         (qs[static_cast<size_t>(q)] - 1) * d);
                    }
                }
        o_fs /= static_cast<double>(n_mask) * Q;

        double v = sqpc(g);
        worst = std::max(worst, std::abs(scrps(targets, g, mask) - o_scrps));
        worst = std::max(worst, std::abs(mae(targets, g, mask) - o_mae_v));
        worst = std::max(worst, std::abs(v - o_sqpc));
        worst = std::max(worst, std::abs(fs_loss(g.values, targets, mask, qs) - o_fs));
        if (v < 0.0 || v > 200.0) {
            c.expect(false, "sQPC left [0, 200]");
            break;
        }
    }
    c.note("max oracle deviation over 100 grids: " + fmt(worst));
    c.expect(worst < 1e-12, "a metric deviates from its naive oracle");

    // Scale invariance.
    ForecastGrid g;
    g.values = Tensor({1, 4, 3, 9});
    for (Eigen::Index i = 0; i < g.values.size(); ++i) g.values[i] = rng.normal() + 2.0;
    g.fcd_offset = {1};
    g.ids = {"A"};
    g.quantiles = qs;
    Tensor targets({1, 4, 3});
    for (Eigen::Index i = 0; i < targets.size(); ++i) targets[i] = rng.normal() + 2.0;
    Tensor mask = Tensor::full({1, 4, 3}, 1.0);
    double base = scrps(targets, g, mask);
    ForecastGrid gs = g;
    Tensor ts = targets;
    gs.values.array() *= 123.456;
    ts.array() *= 123.456;
    double scaled = scrps(ts, gs, mask);
    c.note("sCRPS scale drift: " + fmt(std::abs(scaled - base)));
    c.expect(std::abs(scaled - base) < 1e-12, "sCRPS is not scale invariant");
}

// ---------------------------------------------------------------------------
// 8. End-to-end directional comparison on a synthetic monthly-style panel.

void criterion_8(Check& c) {
    TimeSeriesPanel panel = synthesize_panel(100, 150, 12, 0.5, 2024, 18);
    double sqpc_fs = 0, sqpc_ws = 0, scrps_fs = 0, scrps_ws = 0;
    const std::vector<uint64_t> seeds = {1, 2, 3};

    for (uint64_t seed : seeds) {
        TrainConfig base;
        base.encoder.family = EncoderFamily::CNN;
        base.decoder.horizon = 18;
        base.batch_size = 8;
        base.lr0 = 0.001;
        base.max_steps = 3000;
        base.lr_step = 10000;
        base.seed = seed;

        TrainConfig fs_cfg = base;
        fs_cfg.scheme = Scheme::FS;
        TrainConfig ws_cfg = base;
        ws_cfg.scheme = Scheme::WS;

        TrainResult fs_model = train(panel, fs_cfg);
        TrainResult ws_model = train(panel, ws_cfg);

        int L = resolve_window_length(ws_cfg);
        ForecastGrid fs_grid = forecast_panel_test(panel, fs_cfg.encoder, fs_cfg.decoder,
                                                   fs_model.params, InferenceScheme::FS, 0);
        ForecastGrid ws_grid =
            forecast_panel_test(panel, ws_cfg.encoder, ws_cfg.decoder, ws_model.params,
                                InferenceScheme::WS_restricted, L);
        EnsembleSpec es;
        es.method = EnsembleMethod::moving_average;
        es.window = 18;
        ForecastGrid fs_ens = ensemble(fs_grid, es, 1);

        EvalArrays ev = test_targets(panel, fs_grid);
        double s_fs = scrps(ev.targets, fs_ens, ev.mask);
        double s_ws = scrps(ev.targets, ws_grid, ev.mask);
        double q_fs = sqpc(fs_ens);
        double q_ws = sqpc(ws_grid);
        c.note("seed " + std::to_string(seed) + ": sCRPS fs+ens " + fmt(s_fs) + " vs ws " +
               fmt(s_ws) + "; sQPC fs+ens " + fmt(q_fs) + " vs ws " + fmt(q_ws));
        scrps_fs += s_fs;
        scrps_ws += s_ws;
        sqpc_fs += q_fs;
        sqpc_ws += q_ws;
    }
    double n = static_cast<double>(seeds.size());
    scrps_fs /= n;
    scrps_ws /= n;
    sqpc_fs /= n;
    sqpc_ws /= n;
    c.note("means: sCRPS fs+ens " + fmt(scrps_fs) + " vs ws " + fmt(scrps_ws) + "; sQPC fs+ens " +
           fmt(sqpc_fs) + " vs ws " + fmt(sqpc_ws));
    c.expect(sqpc_fs < sqpc_ws, "mean sQPC of FS+ensemble is not strictly below WS");
    c.expect(scrps_fs <= 1.05 * scrps_ws, "mean sCRPS of FS+ensemble exceeds 1.05x WS");
}

// ---------------------------------------------------------------------------
// 9. Ensembling fidelity.

void criterion_9(Check& c) {
    // Constant grids are fixed points.
    ForecastGrid g;
    g.values = Tensor::full({2, 6, 4, 3}, 3.25);
    g.fcd_offset = {1, 1};
    g.ids = {"A", "B"};
    g.quantiles = {0.1, 0.5, 0.9};
    for (EnsembleMethod m : {EnsembleMethod::moving_average, EnsembleMethod::moving_median,
                             EnsembleMethod::cumulative_average}) {
        ForecastGrid out = ensemble(g, {m, 3}, 1);
        bool fixed = true;
        for (Eigen::Index i = 0; i < out.values.size(); ++i)
            if (out.values[i] != 3.25) fixed = false;
        c.expect(fixed, "constant grid not a fixed point of " + to_string(m));
    }

    // moving_median with window 1 is the identity.
    Rng rng(91);
    ForecastGrid r;
    r.values = Tensor({1, 7, 5, 2});
    for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values[i] = rng.normal();
    r.fcd_offset = {1};
    r.ids = {"A"};
    r.quantiles = {0.4, 0.6};
    ForecastGrid ident = ensemble(r, {EnsembleMethod::moving_median, 1}, 1);
    bool same = true;
    for (Eigen::Index i = 0; i < r.values.size(); ++i)
        if (ident.values[i] != r.values[i]) same = false;
    c.expect(same, "moving_median window 1 is not the identity");

    // available_set against exhaustive enumeration.
    long checked = 0;
    bool all_match = true;
    for (int T = 1; T <= 20; ++T)
        for (int H = 1; H <= 10; ++H)
            for (int eta = 1; eta <= H; ++eta)
                for (int tau = 1; tau <= T + H + 2; ++tau) {
                    AvailableSet s = available_set(tau, eta, T, H);
                    std::vector<std::pair<int, int>> brute;
                    for (int t = 1; t <= T; ++t)
                        for (int h = 1; h <= H; ++h)
                            if (t + h == tau && h >= eta) brute.emplace_back(t, h);
                    std::sort(brute.begin(), brute.end());
                    auto got = s.members;
                    std::sort(got.begin(), got.end());
                    if (got != brute) all_match = false;
                    ++checked;
                }
    c.note("available_set enumerations checked: " + std::to_string(checked));
    c.expect(all_match, "available_set disagrees with exhaustive enumeration");
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);
    }

    std::map<int, std::pair<std::string, std::function<void(Check&)>>> criteria = {
        {1, {"gradient correctness (all encoder families, < 1e-4)", criterion_1}},
        {2, {"FS/WS-full forecast equivalence (<= 1e-12)", criterion_2}},
        {3, {"mean-estimator variance rate and band formula", criterion_3}},
        {4, {"forecast ensemble variance rate", criterion_4}},
        {5, {"linear-AR convergence ablation", criterion_5}},
        {6, {"cross-validation inference complexity", criterion_6}},
        {7, {"metric oracles (1e-12)", criterion_7}},
        {8, {"end-to-end FS vs WS directional comparison", criterion_8}},
        {9, {"ensembling fidelity", criterion_9}},
    };

    int failures = 0;
    for (auto& [id, entry] : criteria) {
        if (only != 0 && id != only) continue;
        Check check;
        auto t0 = std::chrono::steady_clock::now();
        try {
            entry.second(check);
        } catch (const std::exception& e) {
            check.expect(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (check.ok ? "[PASS] " : "[FAIL] ") << "criterion " << id << ": "
                  << entry.first << " (" << fmt(secs) << "s)\n"
                  << check.notes.str();
        if (!check.ok) ++failures;
    }
    return failures;
}
