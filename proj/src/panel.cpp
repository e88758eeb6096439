#include "forkcast/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "forkcast/csv.hpp"
#include "forkcast/errors.hpp"
#include "forkcast/rng.hpp"

namespace forkcast {

namespace {

struct RawRow {
    std::string ds;
    long long ds_int = 0;
    bool ds_is_int = false;
    double y = 0;
};

}  // namespace

LoadResult load_long_panel(const std::string& path, const FrequencyMeta& meta) {
    auto lines = csv::read_lines(path);
    if (lines.empty()) throw FormatError("empty file: " + path);

    auto header = csv::split_line(lines[0]);
    if (header.size() != 3 || header[0] != "unique_id" || header[1] != "ds" || header[2] != "y")
        throw FormatError("expected header unique_id,ds,y in " + path);

    std::vector<std::string> order;
    std::map<std::string, std::vector<RawRow>> groups;
    bool all_int = true;

    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        auto cells = csv::split_line(lines[ln]);
        if (cells.size() != 3)
            throw FormatError("row " + std::to_string(ln + 1) + ": expected 3 columns");
        RawRow row;
        row.ds = cells[1];
        if (auto iv = csv::parse_int(cells[1])) {
            row.ds_is_int = true;
            row.ds_int = *iv;
        } else {
            all_int = false;
        }
        auto y = csv::parse_double(cells[2]);
        if (!y || !std::isfinite(*y))
            throw ParseError("row " + std::to_string(ln + 1) + ": non-numeric y value '" + cells[2] + "'");
        row.y = *y;
        auto it = groups.find(cells[0]);
        if (it == groups.end()) {
            order.push_back(cells[0]);
            it = groups.emplace(cells[0], std::vector<RawRow>{}).first;
        }
        it->second.push_back(std::move(row));
    }

    LoadResult result;
    result.panel.frequency = meta;
    const int min_len = 3 * meta.horizon + 1;

    for (const std::string& id : order) {
        auto& rows = groups[id];
        if (all_int) {
            std::stable_sort(rows.begin(), rows.end(),
                             [](const RawRow& a, const RawRow& b) { return a.ds_int < b.ds_int; });
        } else {
            std::stable_sort(rows.begin(), rows.end(),
                             [](const RawRow& a, const RawRow& b) { return a.ds < b.ds; });
        }
        for (size_t i = 1; i < rows.size(); ++i) {
            bool dup = all_int ? rows[i].ds_int == rows[i - 1].ds_int : rows[i].ds == rows[i - 1].ds;
            if (dup) throw DuplicateError("duplicate timestamp '" + rows[i].ds + "' in series " + id);
        }
        if (static_cast<int>(rows.size()) < min_len) {
            result.report.push_back({id, "dropped", "too_short"});
            ++result.dropped;
            continue;
        }
        SeriesRecord rec;
        rec.id = id;
        rec.values.reserve(rows.size());
        for (const RawRow& r : rows) rec.values.push_back(r.y);
        result.panel.series.push_back(std::move(rec));
        result.report.push_back({id, "ok", ""});
    }
    return result;
}

void write_long_panel(const std::string& path, const TimeSeriesPanel& panel) {
    csv::Writer w(path);
    w.row({"unique_id", "ds", "y"});
    for (const SeriesRecord& s : panel.series)
        for (size_t i = 0; i < s.values.size(); ++i)
            w.row({s.id, std::to_string(i + 1), csv::fmt(s.values[i])});
}

void write_load_report(const std::string& path, const std::vector<LoadReportRow>& report) {
    csv::Writer w(path);
    w.row({"unique_id", "status", "reason"});
    for (const auto& r : report) w.row({r.id, r.status, r.reason});
}

SplitSpec temporal_split(int series_length, int horizon) {
    if (horizon < 1) throw DomainError("horizon must be positive");
    if (series_length < 3 * horizon + 1)
        throw SeriesTooShort("series length " + std::to_string(series_length) +
                             " < " + std::to_string(3 * horizon + 1));
    SplitSpec s;
    s.horizon = horizon;
    s.series_end = series_length;
    s.train_end = series_length - 3 * horizon;
    s.val_end = series_length - 2 * horizon;
    return s;
}

Tensor build_target_mask(const SplitSpec& split, int T, int H, Phase phase) {
    if (split.series_end > T || split.train_end < 1)
        throw DomainError("split does not fit series length");
    Tensor mask({T, H});
    int fcd_lo = 0, fcd_hi = -1, target_end = 0;
    switch (phase) {
        case Phase::train:
            fcd_lo = 1;
            fcd_hi = split.train_end;
            target_end = split.train_end;
            break;
        case Phase::validation:
            fcd_lo = split.train_end + 1;
            fcd_hi = split.val_end;
            target_end = split.val_end;
            break;
        case Phase::test:
            // Only FCDs with a full H-step window.
            fcd_lo = split.val_end + 1;
            fcd_hi = split.series_end - H;
            target_end = split.series_end;
            break;
    }
    for (int t = fcd_lo; t <= fcd_hi; ++t)
        for (int h = 1; h <= H; ++h)
            if (t + h <= target_end) mask.at(t - 1, h - 1) = 1.0;
    return mask;
}

std::vector<SplitSpec> make_splits(const TimeSeriesPanel& panel) {
    std::vector<SplitSpec> splits;
    splits.reserve(panel.series.size());
    for (const SeriesRecord& s : panel.series)
        splits.push_back(temporal_split(static_cast<int>(s.values.size()), panel.frequency.horizon));
    return splits;
}

std::pair<TimeSeriesPanel, std::vector<ScaleParams>> standard_scale(
    const TimeSeriesPanel& panel, const std::vector<SplitSpec>& splits) {
    if (splits.size() != panel.series.size())
        throw DomainError("one split per series required");
    TimeSeriesPanel scaled = panel;
    std::vector<ScaleParams> params(panel.series.size());
    for (size_t b = 0; b < panel.series.size(); ++b) {
        const auto& v = panel.series[b].values;
        int n = splits[b].train_end;
        if (n < 1) throw DomainError("empty train segment");
        double mean = 0;
        for (int i = 0; i < n; ++i) mean += v[static_cast<size_t>(i)];
        mean /= n;
        double var = 0;
        for (int i = 0; i < n; ++i) {
            double d = v[static_cast<size_t>(i)] - mean;
            var += d * d;
        }
        double sd = std::sqrt(var / n);
        sd = std::max(sd, 1e-8 * std::abs(mean) + 1e-8);
        params[b] = {mean, sd};
        for (double& y : scaled.series[b].values) y = (y - mean) / sd;
    }
    return {std::move(scaled), std::move(params)};
}

TimeSeriesPanel synthesize_panel(int n_series, int length, int seasonality,
                                 double noise_std, uint64_t seed, int horizon) {
    if (n_series < 1 || length < 1 || seasonality < 1)
        throw DomainError("synthesize_panel: bad dimensions");
    if (noise_std < 0) throw DomainError("synthesize_panel: negative noise");
    if (horizon < 0) horizon = std::max(1, 3 * seasonality / 2);

    TimeSeriesPanel panel;
    panel.frequency = {"synthetic", seasonality, horizon};
    Rng rng(seed);
    const double two_pi = 6.283185307179586476925286766559;
    for (int b = 0; b < n_series; ++b) {
        SeriesRecord rec;
        rec.id = "S" + std::to_string(b + 1);
        double level = rng.uniform(10.0, 20.0);
        double slope = rng.uniform(-0.05, 0.05);
        double amp = rng.uniform(1.0, 3.0);
        double phase = rng.uniform(0.0, static_cast<double>(seasonality));
        rec.values.reserve(static_cast<size_t>(length));
        for (int t = 0; t < length; ++t) {
            double y = level + slope * t + amp * std::sin(two_pi * (t + phase) / seasonality);
            if (noise_std > 0) y += noise_std * rng.normal();
            rec.values.push_back(y);
        }
        panel.series.push_back(std::move(rec));
    }
    return panel;
}

}  // namespace forkcast
