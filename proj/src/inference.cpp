#include "forkcast/inference.hpp"

#include <algorithm>
#include <cmath>

#include "forkcast/errors.hpp"

namespace forkcast {

AvailableSet available_set(int tau, int eta, int T, int H) {
    if (eta < 1 || eta > H) throw DomainError("eta must lie in [1, H]");
    AvailableSet s;
    s.target_date = tau;
    s.min_horizon = eta;
    for (int h = eta; h <= H; ++h) {
        int t = tau - h;
        if (t >= 1 && t <= T) s.members.emplace_back(t, h);
    }
    return s;
}

EnsembleMethod ensemble_method_from_string(const std::string& s) {
    if (s == "moving_average") return EnsembleMethod::moving_average;
    if (s == "moving_median") return EnsembleMethod::moving_median;
    if (s == "cumulative_average") return EnsembleMethod::cumulative_average;
    throw DomainError("unknown ensemble method: " + s);
}

std::string to_string(EnsembleMethod m) {
    switch (m) {
        case EnsembleMethod::moving_average: return "moving_average";
        case EnsembleMethod::moving_median: return "moving_median";
        case EnsembleMethod::cumulative_average: return "cumulative_average";
    }
    return "?";
}

ForecastGrid ensemble(const ForecastGrid& grid, const EnsembleSpec& spec, int eta) {
    if (spec.method != EnsembleMethod::cumulative_average && spec.window < 1)
        throw DomainError("ensemble window must be >= 1");
    ForecastGrid out = grid;
    int T = grid.n_fcds(), H = grid.horizon(), Q = grid.n_quantiles();
    std::vector<double> vals;
    for (int b = 0; b < grid.n_series(); ++b) {
        for (int t = 0; t < T; ++t) {
            for (int h = 0; h < H; ++h) {
                int tau = t + h + 2;  // 1-based target date of cell (t, h)
                int min_h = std::max(h + 1, eta);
                // Members ordered by decreasing FCD (most recent first).
                std::vector<std::pair<int, int>> members;
                for (int hh = min_h; hh <= H; ++hh) {
                    int tt = tau - hh;
                    if (tt >= 1 && tt <= T) members.emplace_back(tt, hh);
                }
                if (members.empty()) continue;
                if (spec.method != EnsembleMethod::cumulative_average &&
                    static_cast<int>(members.size()) > spec.window)
                    members.resize(static_cast<size_t>(spec.window));
                for (int q = 0; q < Q; ++q) {
                    vals.clear();
                    for (auto [tt, hh] : members)
                        vals.push_back(grid.values.at(b, tt - 1, hh - 1, q));
                    double agg;
                    if (spec.method == EnsembleMethod::moving_median) {
                        std::sort(vals.begin(), vals.end());
                        size_t n = vals.size();
                        agg = (n % 2 == 1) ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
                    } else {
                        double s = 0;
                        for (double v : vals) s += v;
                        agg = s / static_cast<double>(vals.size());
                    }
                    out.values.at(b, t, h, q) = agg;
                }
            }
        }
    }
    return out;
}

InferenceScheme inference_scheme_from_string(const std::string& s) {
    if (s == "fs") return InferenceScheme::FS;
    if (s == "ws_restricted") return InferenceScheme::WS_restricted;
    if (s == "ws_full") return InferenceScheme::WS_full;
    throw DomainError("unknown inference scheme: " + s);
}

std::string to_string(InferenceScheme s) {
    switch (s) {
        case InferenceScheme::FS: return "fs";
        case InferenceScheme::WS_restricted: return "ws_restricted";
        case InferenceScheme::WS_full: return "ws_full";
    }
    return "?";
}

namespace {

Tensor window_slice(const Tensor& x, int fcd, int L) {
    int d = x.dim(1);
    Tensor w({L, d});
    for (int j = 0; j < L; ++j) {
        int src = fcd - L + j;  // 0-based source row
        if (src < 0) continue;  // left zero padding
        std::copy_n(x.data() + static_cast<Eigen::Index>(src) * d, d,
                    w.data() + static_cast<Eigen::Index>(j) * d);
    }
    return w;
}

}  // namespace

ForecastGrid cross_val_forecast(const EncoderSpec& enc, const DecoderSpec& dec,
                                ParamStore& store, const Tensor& x, InferenceScheme scheme,
                                int L, std::pair<int, int> fcd_range, OpCounter* counter) {
    if (x.ndim() != 2) throw ShapeError("cross_val_forecast expects x (T, d_in)");
    int T = x.dim(0);
    auto [lo, hi] = fcd_range;
    if (lo < 1 || hi > T || lo > hi) throw ShapeError("fcd_range outside series bounds");
    if (scheme == InferenceScheme::WS_restricted && L < 1)
        throw DomainError("WS_restricted requires a window length");

    int H = dec.horizon, Q = dec.n_quantiles();
    int n = hi - lo + 1;
    ForecastGrid grid;
    grid.values = Tensor({1, n, H, Q});
    grid.fcd_offset = {lo};
    grid.ids = {"series"};
    grid.quantiles = dec.quantiles;
    grid.scaled = true;

    auto merge = [&](const Tape& tape) {
        if (!counter) return;
        counter->units += tape.counter_view().units;
        counter->ingested += tape.counter_view().ingested;
        counter->encoder_calls += tape.counter_view().encoder_calls;
    };

    if (scheme == InferenceScheme::FS) {
        Tape tape(false);
        Var hs = encode_full(enc, store, tape, tape.leaf(window_slice(x, hi, hi)));
        Var all = decode_all(dec, store, tape, hs);
        for (int i = 0; i < n; ++i) {
            int t = lo + i - 1;  // 0-based row in hs
            for (int h = 0; h < H; ++h)
                for (int q = 0; q < Q; ++q)
                    grid.values.at(0, i, h, q) = all.value().at(t, h, q);
        }
        merge(tape);
    } else {
        for (int i = 0; i < n; ++i) {
            // A tape per window keeps memory flat across the FCD sweep.
            Tape tape(false);
            int fcd = lo + i;
            int len = scheme == InferenceScheme::WS_full ? fcd : L;
            Var h = encode_window(enc, store, tape, tape.leaf(window_slice(x, fcd, len)));
            Var pred = decode(dec, store, tape, h);
            for (int hh = 0; hh < H; ++hh)
                for (int q = 0; q < Q; ++q)
                    grid.values.at(0, i, hh, q) = pred.value().at(hh, q);
            merge(tape);
        }
    }
    return grid;
}

ForecastGrid forecast_panel_test(const TimeSeriesPanel& panel, const EncoderSpec& enc,
                                 const DecoderSpec& dec, ParamStore& store,
                                 InferenceScheme scheme, int L) {
    auto prepared = prepare_panel(panel);
    int H = panel.frequency.horizon;
    int B = static_cast<int>(prepared.size());
    if (B == 0) throw DomainError("empty panel");
    int Q = dec.n_quantiles();

    ForecastGrid grid;
    grid.values = Tensor({B, H, H, Q});
    grid.quantiles = dec.quantiles;
    grid.scaled = false;
    for (int b = 0; b < B; ++b) {
        const PreparedSeries& ps = prepared[static_cast<size_t>(b)];
        int fcd_lo = ps.split.val_end + 1;
        int fcd_hi = ps.split.series_end - H;
        Tensor x({ps.split.series_end, 1});
        for (int t = 0; t < ps.split.series_end; ++t)
            x[t] = ps.scaled_values[static_cast<size_t>(t)];
        ForecastGrid one = cross_val_forecast(enc, dec, store, x, scheme, L, {fcd_lo, fcd_hi});
        for (int t = 0; t < H; ++t)
            for (int h = 0; h < H; ++h)
                for (int q = 0; q < Q; ++q)
                    grid.values.at(b, t, h, q) =
                        unscale_value(one.values.at(0, t, h, q), ps.scale);
        grid.fcd_offset.push_back(fcd_lo);
        grid.ids.push_back(panel.series[static_cast<size_t>(b)].id);
    }
    return grid;
}

double analytic_op_count(InferenceScheme scheme, EncoderFamily family, double T, double L) {
    bool attention = family == EncoderFamily::Transformer;
    bool mlp = family == EncoderFamily::MLP;
    switch (scheme) {
        case InferenceScheme::FS:
            if (attention) return T * T;
            if (mlp) return T * L;
            return T;
        case InferenceScheme::WS_restricted:
            if (attention) return T * T * L;
            return T * L;
        case InferenceScheme::WS_full:
            if (attention) return T * T * T;
            return T * T;
    }
    return 0;
}

}  // namespace forkcast
