#include "forkcast/training.hpp"

#include <algorithm>
#include <cmath>

#include "forkcast/csv.hpp"

namespace forkcast {

Scheme scheme_from_string(const std::string& s) {
    if (s == "fs") return Scheme::FS;
    if (s == "ws") return Scheme::WS;
    throw DomainError("unknown training scheme: " + s);
}

std::string to_string(Scheme s) { return s == Scheme::FS ? "fs" : "ws"; }

void write_trajectory_csv(const std::string& path, const LossTrajectory& traj) {
    csv::Writer w(path);
    w.row({"step", "loss", "lr", "grad_norm"});
    for (const TrajPoint& p : traj)
        w.row({std::to_string(p.step), csv::fmt(p.loss), csv::fmt(p.lr), csv::fmt(p.grad_norm)});
}

double pinball(double y, double yhat, double q) {
    double diff = y - yhat;
    return std::max(q * diff, (q - 1.0) * diff);
}

double fs_loss(const Tensor& grid, const Tensor& targets, const Tensor& mask,
               const std::vector<double>& quantiles) {
    if (grid.ndim() != 4) throw ShapeError("fs_loss expects grid (B,T,H,Q)");
    int B = grid.dim(0), T = grid.dim(1), H = grid.dim(2), Q = grid.dim(3);
    if (targets.ndim() != 3 || targets.dim(0) != B || targets.dim(1) != T || targets.dim(2) != H)
        throw ShapeError("fs_loss: target shape");
    if (!mask.same_shape(targets)) throw ShapeError("fs_loss: mask shape");
    if (Q != static_cast<int>(quantiles.size())) throw ShapeError("fs_loss: quantile count");

    double acc = 0;
    long n = 0;
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t)
            for (int h = 0; h < H; ++h) {
                if (mask.at(b, t, h) == 0.0) continue;
                ++n;
                for (int q = 0; q < Q; ++q)
                    acc += pinball(targets.at(b, t, h), grid.at(b, t, h, q),
                                   quantiles[static_cast<size_t>(q)]);
            }
    if (n == 0) throw EmptyLossError("fs_loss: empty mask");
    return acc / (static_cast<double>(n) * Q);
}

double lr_at(int step, const TrainConfig& cfg) {
    if (step < 0 || step >= cfg.max_steps) throw DomainError("step outside schedule");
    return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(step / cfg.lr_step));
}

std::vector<PreparedSeries> prepare_panel(const TimeSeriesPanel& panel) {
    auto splits = make_splits(panel);
    auto [scaled, params] = standard_scale(panel, splits);
    int H = panel.frequency.horizon;

    std::vector<PreparedSeries> out;
    out.reserve(panel.series.size());
    for (size_t b = 0; b < scaled.series.size(); ++b) {
        const auto& v = scaled.series[b].values;
        PreparedSeries ps;
        ps.split = splits[b];
        ps.scale = params[b];
        ps.scaled_values = v;
        int n = ps.split.train_end;
        ps.x = Tensor({n, 1});
        for (int t = 0; t < n; ++t) ps.x[t] = v[static_cast<size_t>(t)];
        Tensor full_mask = build_target_mask(ps.split, ps.split.series_end, H, Phase::train);
        ps.mask = Tensor({n, H});
        for (int t = 0; t < n; ++t)
            for (int h = 0; h < H; ++h) ps.mask.at(t, h) = full_mask.at(t, h);
        ps.targets = Tensor({n, H});
        for (int t = 1; t <= n; ++t)
            for (int h = 1; h <= H; ++h)
                if (ps.mask.at(t - 1, h - 1) != 0.0)
                    ps.targets.at(t - 1, h - 1) = v[static_cast<size_t>(t + h - 1)];
        out.push_back(std::move(ps));
    }
    return out;
}

int resolve_window_length(const TrainConfig& cfg) {
    if (cfg.window_length > 0) return cfg.window_length;
    int rf = receptive_field(cfg.encoder);
    int floor_len = 2 * cfg.decoder.horizon;
    if (rf == kUnboundedField) return floor_len;
    return std::max(rf, floor_len);
}

std::pair<int, int> valid_ws_fcd_range(const SplitSpec& split, int L) {
    // t >= L so the window is fully observed, t + H <= train_end so no
    // horizon target is padded or leaks out of train.
    return {L, split.train_end - split.horizon};
}

std::vector<WsWindow> ws_sample(const std::vector<PreparedSeries>& prepared, int L,
                                int batch_size, Rng& rng) {
    struct Range { int series, lo, hi; };
    std::vector<Range> ranges;
    for (size_t b = 0; b < prepared.size(); ++b) {
        auto [lo, hi] = valid_ws_fcd_range(prepared[b].split, L);
        if (lo <= hi) ranges.push_back({static_cast<int>(b), lo, hi});
    }
    if (ranges.empty()) throw SamplerError("no valid window-sampling FCD exists");

    std::vector<WsWindow> batch;
    batch.reserve(static_cast<size_t>(batch_size));
    int H = prepared[0].split.horizon;
    for (int i = 0; i < batch_size; ++i) {
        const Range& r = ranges[static_cast<size_t>(rng.below(static_cast<int>(ranges.size())))];
        const PreparedSeries& ps = prepared[static_cast<size_t>(r.series)];
        int fcd = r.lo + rng.below(r.hi - r.lo + 1);
        WsWindow w;
        w.series = r.series;
        w.fcd = fcd;
        w.window = Tensor({L, 1});
        for (int j = 0; j < L; ++j) w.window[j] = ps.scaled_values[static_cast<size_t>(fcd - L + j)];
        w.targets = Tensor({H});
        for (int h = 1; h <= H; ++h) w.targets[h - 1] = ps.scaled_values[static_cast<size_t>(fcd + h - 1)];
        batch.push_back(std::move(w));
    }
    return batch;
}

TrainResult train(const TimeSeriesPanel& panel, const TrainConfig& cfg) {
    auto prepared = prepare_panel(panel);
    // Borderline-length series split fine but have no in-train target.
    std::erase_if(prepared, [](const PreparedSeries& ps) { return ps.mask.array().sum() == 0.0; });
    if (prepared.empty()) throw DomainError("panel has no trainable series");

    TrainConfig cfg_local = cfg;
    cfg_local.encoder.horizon = cfg.decoder.horizon;

    ParamStore store(cfg.seed);
    Rng init_rng(cfg.seed);
    init_encoder_params(cfg_local.encoder, store, init_rng);
    init_decoder_params(cfg_local.decoder, hidden_dim(cfg_local.encoder), 0, store, init_rng);

    Rng sample_rng(derive_seed(cfg.seed, 0x5a5a5a5aULL));
    int L = resolve_window_length(cfg_local);
    int n_series = static_cast<int>(prepared.size());

    LossTrajectory traj;
    traj.reserve(static_cast<size_t>(cfg.max_steps));

    for (int step = 0; step < cfg.max_steps; ++step) {
        double lr = lr_at(step, cfg);
        store.zero_grad();
        Tape tape;
        Var loss{};

        if (cfg.scheme == Scheme::FS) {
            std::vector<Var> losses;
            for (int i = 0; i < cfg.batch_size; ++i) {
                const PreparedSeries& ps =
                    prepared[static_cast<size_t>(n_series == 1 ? 0 : sample_rng.below(n_series))];
                EncodeOptions opt;
                opt.training = true;
                opt.dropout_seed = derive_seed(cfg.seed, 0x1000ULL + static_cast<uint64_t>(step) * 64 +
                                                              static_cast<uint64_t>(i));
                Var hs = encode_full(cfg_local.encoder, store, tape, tape.leaf(ps.x), opt);
                Var grid = decode_all(cfg_local.decoder, store, tape, hs);
                Var elems = pinball_elem(ps.targets, grid, cfg_local.decoder.quantiles);
                losses.push_back(masked_mean(elems, ps.mask));
            }
            loss = losses[0];
            for (size_t i = 1; i < losses.size(); ++i) loss = add(loss, losses[i]);
            loss = scale(loss, 1.0 / static_cast<double>(losses.size()));
        } else {
            auto batch = ws_sample(prepared, L, cfg.batch_size, sample_rng);
            std::vector<Var> losses;
            for (size_t i = 0; i < batch.size(); ++i) {
                EncodeOptions opt;
                opt.training = true;
                opt.dropout_seed = derive_seed(cfg.seed, 0x2000ULL + static_cast<uint64_t>(step) * 64 +
                                                              static_cast<uint64_t>(i));
                Var h = encode_window(cfg_local.encoder, store, tape, tape.leaf(batch[i].window), opt);
                Var pred = decode(cfg_local.decoder, store, tape, h);
                Var elems = pinball_elem(batch[i].targets, pred, cfg_local.decoder.quantiles);
                Tensor ones = Tensor::full({cfg_local.decoder.horizon}, 1.0);
                losses.push_back(masked_mean(elems, ones));
            }
            loss = losses[0];
            for (size_t i = 1; i < losses.size(); ++i) loss = add(loss, losses[i]);
            loss = scale(loss, 1.0 / static_cast<double>(losses.size()));
        }

        double loss_val = loss.value()[0];
        if (!std::isfinite(loss_val)) throw DivergenceError(std::move(traj));

        tape.backward(loss);
        double gnorm = std::sqrt(store.grad_sq_norm());
        store.sgd_step(lr);
        traj.push_back({step, loss_val, lr, gnorm});
    }
    return {std::move(store), std::move(traj)};
}

}  // namespace forkcast
