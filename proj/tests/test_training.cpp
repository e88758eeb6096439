#include <doctest.h>

#include <cmath>

#include "forkcast/errors.hpp"
#include "forkcast/training.hpp"

using namespace forkcast;

namespace {

// Deliberately naive re-summation used as the oracle.
double naive_fs_loss(const Tensor& grid, const Tensor& targets, const Tensor& mask,
                     const std::vector<double>& quantiles) {
    double acc = 0;
    long n = 0;
    for (int b = 0; b < grid.dim(0); ++b)
        for (int t = 0; t < grid.dim(1); ++t)
            for (int h = 0; h < grid.dim(2); ++h) {
                if (mask.at(b, t, h) == 0.0) continue;
                for (int q = 0; q < grid.dim(3); ++q) {
                    double y = targets.at(b, t, h);
                    double yh = grid.at(b, t, h, q);
                    double qq = quantiles[static_cast<size_t>(q)];
                    double d = y - yh;
                    acc += d >= 0 ? qq * d : (qq - 1) * d;
                    (void)0;
                }
                ++n;
            }
    return acc / (static_cast<double>(n) * grid.dim(3));
}

TrainConfig tiny_config(Scheme scheme, uint64_t seed) {
    TrainConfig cfg;
    cfg.scheme = scheme;
    cfg.encoder.family = EncoderFamily::CNN;
    cfg.encoder.cnn_channels = 6;
    cfg.encoder.cnn_dilations = {1, 2, 4};
    cfg.decoder.horizon = 4;
    cfg.decoder.agnostic_dim = 12;
    cfg.decoder.specific_dim = 4;
    cfg.decoder.quantiles = {0.1, 0.5, 0.9};
    cfg.batch_size = 4;
    cfg.max_steps = 60;
    cfg.lr_step = 40;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("pinball loss values") {
    CHECK(pinball(1, 0, 0.5) == doctest::Approx(0.5));
    CHECK(pinball(0, 1, 0.9) == doctest::Approx(0.1));
    CHECK(pinball(3.7, 3.7, 0.3) == 0.0);
}

TEST_CASE("fs_loss single-term and perfect-forecast cases") {
    Tensor grid({1, 1, 1, 1}, {0.0});
    Tensor targets({1, 1, 1}, {2.0});
    Tensor mask = Tensor::full({1, 1, 1}, 1.0);
    CHECK(fs_loss(grid, targets, mask, {0.5}) == doctest::Approx(1.0));

    Tensor perfect({1, 1, 1, 1}, {2.0});
    CHECK(fs_loss(perfect, targets, mask, {0.5}) == 0.0);

    CHECK_THROWS_AS(fs_loss(grid, targets, Tensor({1, 1, 1}), {0.5}), EmptyLossError);
}

TEST_CASE("fs_loss equals the brute-force oracle under partial masks") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        int B = 1 + rng.below(3), T = 2 + rng.below(5), H = 1 + rng.below(4);
        std::vector<double> quantiles = {0.1, 0.5, 0.9};
        Tensor grid({B, T, H, 3});
        for (Eigen::Index i = 0; i < grid.size(); ++i) grid[i] = rng.normal();
        Tensor targets({B, T, H});
        for (Eigen::Index i = 0; i < targets.size(); ++i) targets[i] = rng.normal();
        Tensor mask({B, T, H});
        int on = 0;
        for (Eigen::Index i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            on += mask[i] != 0.0;
        }
        if (on == 0) mask[0] = 1.0;
        CHECK(fs_loss(grid, targets, mask, quantiles) ==
              doctest::Approx(naive_fs_loss(grid, targets, mask, quantiles)).epsilon(1e-12));
    }
}

TEST_CASE("masked-out targets never change fs_loss") {
    Rng rng(6);
    Tensor grid({1, 4, 3, 2});
    for (Eigen::Index i = 0; i < grid.size(); ++i) grid[i] = rng.normal();
    Tensor targets({1, 4, 3});
    for (Eigen::Index i = 0; i < targets.size(); ++i) targets[i] = rng.normal();
    Tensor mask = Tensor::full({1, 4, 3}, 1.0);
    mask.at(0, 2, 1) = 0.0;
    double before = fs_loss(grid, targets, mask, {0.3, 0.7});
    targets.at(0, 2, 1) = 1e9;
    CHECK(fs_loss(grid, targets, mask, {0.3, 0.7}) == before);
}

TEST_CASE("lr_at follows the step-decay schedule") {
    TrainConfig cfg;
    CHECK(lr_at(0, cfg) == doctest::Approx(0.001));
    CHECK(lr_at(10000, cfg) == doctest::Approx(0.0001));
    CHECK(lr_at(29999, cfg) == doctest::Approx(0.00001));

    // Piecewise constant with exactly floor(max_steps/lr_step) decay events.
    int decays = 0;
    for (int s = 1; s < cfg.max_steps; ++s)
        if (lr_at(s, cfg) != lr_at(s - 1, cfg)) ++decays;
    CHECK(decays == cfg.max_steps / cfg.lr_step - (cfg.max_steps % cfg.lr_step == 0 ? 1 : 0));
    CHECK_THROWS_AS(lr_at(30000, cfg), DomainError);
}

TEST_CASE("window sampler validity range") {
    SplitSpec split{100, 118, 136, 18};
    auto [lo, hi] = valid_ws_fcd_range(split, 48);
    CHECK(lo == 48);
    CHECK(hi == 82);
}

TEST_CASE("window sampler is deterministic and rejects impossible windows") {
    TimeSeriesPanel panel = synthesize_panel(3, 40, 4, 0.2, 9, 3);
    auto prepared = prepare_panel(panel);

    Rng r1(7), r2(7);
    auto b1 = ws_sample(prepared, 6, 5, r1);
    auto b2 = ws_sample(prepared, 6, 5, r2);
    REQUIRE(b1.size() == b2.size());
    for (size_t i = 0; i < b1.size(); ++i) {
        CHECK(b1[i].series == b2[i].series);
        CHECK(b1[i].fcd == b2[i].fcd);
        auto [lo, hi] = valid_ws_fcd_range(prepared[static_cast<size_t>(b1[i].series)].split, 6);
        CHECK(b1[i].fcd >= lo);
        CHECK(b1[i].fcd <= hi);
    }

    Rng r3(8);
    CHECK_THROWS_AS(ws_sample(prepared, 1000, 2, r3), SamplerError);
}

TEST_CASE("training is reproducible bitwise") {
    TimeSeriesPanel panel = synthesize_panel(6, 40, 4, 0.3, 17, 4);
    TrainConfig cfg = tiny_config(Scheme::FS, 5);
    cfg.max_steps = 25;
    TrainResult a = train(panel, cfg);
    TrainResult b = train(panel, cfg);
    REQUIRE(a.trajectory.size() == b.trajectory.size());
    for (size_t i = 0; i < a.trajectory.size(); ++i) {
        CHECK(a.trajectory[i].loss == b.trajectory[i].loss);
        CHECK(a.trajectory[i].grad_norm == b.trajectory[i].grad_norm);
    }
    for (const auto& name : a.params.names())
        for (Eigen::Index i = 0; i < a.params.value(name).size(); ++i)
            CHECK(a.params.value(name)[i] == b.params.value(name)[i]);
}

TEST_CASE("training reduces the loss on clean seasonal data") {
    TimeSeriesPanel panel = synthesize_panel(6, 40, 4, 0.05, 23, 4);
    TrainConfig cfg = tiny_config(Scheme::FS, 6);
    cfg.max_steps = 800;
    cfg.lr_step = 400;
    cfg.lr0 = 0.1;
    TrainResult res = train(panel, cfg);
    double first = res.trajectory.front().loss;
    double last = res.trajectory.back().loss;
    CHECK(last < 0.5 * first);
}

TEST_CASE("window-sampling scheme trains end to end") {
    TimeSeriesPanel panel = synthesize_panel(6, 40, 4, 0.3, 29, 4);
    TrainConfig cfg = tiny_config(Scheme::WS, 7);
    cfg.max_steps = 30;
    TrainResult res = train(panel, cfg);
    CHECK(res.trajectory.size() == 30);
    for (const auto& p : res.trajectory) CHECK(std::isfinite(p.loss));
}

TEST_CASE("divergence aborts with the trajectory so far") {
    TimeSeriesPanel panel = synthesize_panel(4, 40, 4, 0.3, 31, 4);
    TrainConfig cfg = tiny_config(Scheme::FS, 8);
    // Large enough that stacked layers overflow on the next forward pass;
    // the piecewise-linear loss itself never squares anything.
    cfg.lr0 = 1e200;
    cfg.max_steps = 50;
    try {
        train(panel, cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.trajectory.size() >= 1);
    }
}

TEST_CASE("WS minibatch gradient is unbiased for the matched-FCD FS gradient") {
    // MLP encoder: window and full paths compute identical per-FCD values,
    // so the expectation over uniform FCD draws must equal the full-set
    // gradient restricted to the same FCDs.
    TimeSeriesPanel panel = synthesize_panel(1, 36, 4, 0.4, 37, 2);
    auto prepared = prepare_panel(panel);
    const PreparedSeries& ps = prepared[0];

    TrainConfig cfg;
    cfg.encoder.family = EncoderFamily::MLP;
    cfg.encoder.mlp_layers = 1;
    cfg.encoder.mlp_width = 4;
    cfg.encoder.horizon = 2;
    cfg.decoder.horizon = 2;
    cfg.decoder.agnostic_dim = 5;
    cfg.decoder.specific_dim = 3;
    cfg.decoder.quantiles = {0.5};
    int L = resolve_window_length(cfg);  // max(2H, 2H) = 4

    ParamStore store(3);
    Rng init(3);
    init_encoder_params(cfg.encoder, store, init);
    init_decoder_params(cfg.decoder, hidden_dim(cfg.encoder), 0, store, init);

    auto [lo, hi] = valid_ws_fcd_range(ps.split, L);
    REQUIRE(lo <= hi);

    // Reference: mean over all valid FCDs of the per-window gradient.
    std::vector<double> ref;
    {
        store.zero_grad();
        Tape tape;
        std::vector<Var> losses;
        for (int fcd = lo; fcd <= hi; ++fcd) {
            Tensor window({L, 1});
            for (int j = 0; j < L; ++j) window[j] = ps.scaled_values[static_cast<size_t>(fcd - L + j)];
            Tensor targets({2});
            for (int h = 1; h <= 2; ++h) targets[h - 1] = ps.scaled_values[static_cast<size_t>(fcd + h - 1)];
            Var hvar = encode_window(cfg.encoder, store, tape, tape.leaf(window));
            Var pred = decode(cfg.decoder, store, tape, hvar);
            losses.push_back(masked_mean(pinball_elem(targets, pred, cfg.decoder.quantiles),
                                         Tensor::full({2}, 1.0)));
        }
        Var total = losses[0];
        for (size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
        tape.backward(scale(total, 1.0 / static_cast<double>(losses.size())));
        for (const auto& name : store.names())
            for (Eigen::Index i = 0; i < store.grad(name).size(); ++i)
                ref.push_back(store.grad(name)[i]);
    }

    // Monte Carlo: 10^4 batch-2 draws.
    std::vector<double> acc(ref.size(), 0.0);
    Rng rng(101);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        store.zero_grad();
        Tape tape;
        std::vector<Var> losses;
        for (int k = 0; k < 2; ++k) {
            int fcd = lo + rng.below(hi - lo + 1);
            Tensor window({L, 1});
            for (int j = 0; j < L; ++j) window[j] = ps.scaled_values[static_cast<size_t>(fcd - L + j)];
            Tensor targets({2});
            for (int h = 1; h <= 2; ++h) targets[h - 1] = ps.scaled_values[static_cast<size_t>(fcd + h - 1)];
            Var hvar = encode_window(cfg.encoder, store, tape, tape.leaf(window));
            Var pred = decode(cfg.decoder, store, tape, hvar);
            losses.push_back(masked_mean(pinball_elem(targets, pred, cfg.decoder.quantiles),
                                         Tensor::full({2}, 1.0)));
        }
        tape.backward(scale(add(losses[0], losses[1]), 0.5));
        size_t j = 0;
        for (const auto& name : store.names())
            for (Eigen::Index i = 0; i < store.grad(name).size(); ++i)
                acc[j++] += store.grad(name)[i];
    }

    // Same relative-error convention as grad_check: floor the denominator at 1.
    double l2_err = 0, l2_ref = 0;
    for (size_t i = 0; i < ref.size(); ++i) {
        double mc = acc[i] / draws;
        CHECK(std::abs(mc - ref[i]) / std::max(1.0, std::abs(ref[i])) < 0.02);
        l2_err += (mc - ref[i]) * (mc - ref[i]);
        l2_ref += ref[i] * ref[i];
    }
    REQUIRE(l2_ref > 0);
    CHECK(std::sqrt(l2_err / l2_ref) < 0.02);
}

TEST_CASE("FS reaches shared loss thresholds in fewer steps than WS") {
    TimeSeriesPanel panel = synthesize_panel(10, 90, 12, 0.4, 77, 6);
    TrainConfig base;
    base.encoder.family = EncoderFamily::CNN;
    base.encoder.cnn_channels = 8;
    base.decoder.horizon = 6;
    base.decoder.agnostic_dim = 20;
    base.decoder.specific_dim = 5;
    base.batch_size = 2;
    base.lr0 = 0.02;
    base.max_steps = 800;
    base.lr_step = 800;
    base.seed = 3;
    TrainConfig fs_cfg = base;
    fs_cfg.scheme = Scheme::FS;
    TrainConfig ws_cfg = base;
    ws_cfg.scheme = Scheme::WS;

    auto smooth = [](const LossTrajectory& t, int w) {
        std::vector<double> sm(t.size());
        double acc = 0;
        for (size_t i = 0; i < t.size(); ++i) {
            acc += t[i].loss;
            if (i >= static_cast<size_t>(w)) acc -= t[i - static_cast<size_t>(w)].loss;
            sm[i] = acc / std::min<double>(static_cast<double>(i + 1), w);
        }
        return sm;
    };
    auto crossing = [](const std::vector<double>& sm, double thr) {
        for (size_t i = 0; i < sm.size(); ++i)
            if (sm[i] <= thr) return static_cast<int>(i);
        return static_cast<int>(sm.size());
    };

    auto fs_sm = smooth(train(panel, fs_cfg).trajectory, 60);
    auto ws_sm = smooth(train(panel, ws_cfg).trajectory, 60);

    // Thresholds spanning the loss range both schemes attain.
    double lo = std::max(fs_sm.back(), ws_sm.back());
    double hi = std::min(fs_sm[20], ws_sm[20]);
    REQUIRE(lo < hi);
    for (double frac : {0.3, 0.5, 0.7}) {
        double thr = lo + frac * (hi - lo);
        CHECK(crossing(fs_sm, thr) <= crossing(ws_sm, thr));
    }
}
