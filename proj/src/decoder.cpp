#include "forkcast/decoder.hpp"

#include <cmath>
#include <map>

#include "forkcast/csv.hpp"
#include "forkcast/errors.hpp"

namespace forkcast {

int DecoderSpec::median_index() const {
    for (size_t i = 0; i < quantiles.size(); ++i)
        if (std::abs(quantiles[i] - 0.5) < 1e-12) return static_cast<int>(i);
    throw DomainError("quantile set does not contain 0.5");
}

namespace {

void check_quantiles(const DecoderSpec& spec) {
    if (spec.quantiles.empty()) throw DomainError("empty quantile set");
    for (size_t i = 0; i < spec.quantiles.size(); ++i) {
        if (spec.quantiles[i] <= 0 || spec.quantiles[i] >= 1)
            throw DomainError("quantiles must lie in (0,1)");
        if (i > 0 && spec.quantiles[i] <= spec.quantiles[i - 1])
            throw DomainError("quantiles must be strictly increasing");
    }
}

void init_matrix(Tensor& t, int fan_in, int fan_out, Rng& rng) {
    double r = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(-r, r);
}

}  // namespace

void init_decoder_params(const DecoderSpec& spec, int hidden_dim, int static_dim,
                         ParamStore& store, Rng& rng, const std::string& prefix) {
    check_quantiles(spec);
    int in = hidden_dim + static_dim;
    int H = spec.horizon, Q = spec.n_quantiles();
    auto& Wt = store.create(prefix + "trunk.W", {in, spec.agnostic_dim});
    init_matrix(Wt, in, spec.agnostic_dim, rng);
    store.create(prefix + "trunk.b", {spec.agnostic_dim});
    auto& Ws = store.create(prefix + "specific.W", {spec.agnostic_dim, H * spec.specific_dim});
    init_matrix(Ws, spec.agnostic_dim, spec.specific_dim, rng);
    store.create(prefix + "specific.b", {H * spec.specific_dim});
    auto& Wo = store.create(prefix + "out.W", {H, spec.specific_dim, Q});
    init_matrix(Wo, spec.specific_dim, Q, rng);
    store.create(prefix + "out.b", {H, Q});
}

Eigen::Index decoder_param_count(const DecoderSpec& spec, int hidden_dim, int static_dim) {
    Eigen::Index in = hidden_dim + static_dim;
    Eigen::Index H = spec.horizon, Q = spec.n_quantiles();
    Eigen::Index n = in * spec.agnostic_dim + spec.agnostic_dim;
    n += static_cast<Eigen::Index>(spec.agnostic_dim) * H * spec.specific_dim + H * spec.specific_dim;
    n += H * (static_cast<Eigen::Index>(spec.specific_dim) * Q + Q);
    return n;
}

Var decode_all(const DecoderSpec& spec, ParamStore& store, Tape& tape, Var hs,
               const std::optional<Tensor>& static_cov, const std::string& prefix) {
    if (hs.value().ndim() != 2) throw ShapeError("decode_all expects (T, d_h)");
    int T = hs.value().dim(0);
    Var in = hs;
    if (static_cov) {
        int ds = static_cast<int>(static_cov->size());
        Tensor rep({T, ds});
        for (int t = 0; t < T; ++t)
            std::copy_n(static_cov->data(), ds, rep.data() + static_cast<Eigen::Index>(t) * ds);
        in = concat_cols({hs, tape.leaf(std::move(rep))});
    }
    Var trunk = relu(affine(in, tape.param(store, prefix + "trunk.W"),
                            tape.param(store, prefix + "trunk.b")));
    Var spec_out = relu(affine(trunk, tape.param(store, prefix + "specific.W"),
                               tape.param(store, prefix + "specific.b")));
    Var out = grouped_affine(spec_out, tape.param(store, prefix + "out.W"),
                             tape.param(store, prefix + "out.b"));
    return reshape(out, {T, spec.horizon, spec.n_quantiles()});
}

Var decode(const DecoderSpec& spec, ParamStore& store, Tape& tape, Var h_t,
           const std::optional<Tensor>& static_cov, const std::string& prefix) {
    if (h_t.value().ndim() != 2 || h_t.value().dim(0) != 1)
        throw ShapeError("decode expects a single hidden row (1, d_h)");
    Var all = decode_all(spec, store, tape, h_t, static_cov, prefix);
    return reshape(all, {spec.horizon, spec.n_quantiles()});
}

void write_grid_csv(const std::string& path, const ForecastGrid& grid) {
    csv::Writer w(path);
    w.row({"unique_id", "fcd", "h", "q", "yhat"});
    for (int b = 0; b < grid.n_series(); ++b)
        for (int t = 0; t < grid.n_fcds(); ++t)
            for (int h = 0; h < grid.horizon(); ++h)
                for (int q = 0; q < grid.n_quantiles(); ++q)
                    w.row({grid.ids[static_cast<size_t>(b)],
                           std::to_string(grid.fcd_offset[static_cast<size_t>(b)] + t),
                           std::to_string(h + 1),
                           csv::fmt(grid.quantiles[static_cast<size_t>(q)]),
                           csv::fmt(grid.values.at(b, t, h, q))});
}

ForecastGrid read_grid_csv(const std::string& path) {
    auto lines = csv::read_lines(path);
    if (lines.empty() || csv::split_line(lines[0]) != std::vector<std::string>{"unique_id", "fcd", "h", "q", "yhat"})
        throw FormatError("expected grid header unique_id,fcd,h,q,yhat in " + path);

    struct Cell { int t, h, q; double v; };
    std::vector<std::string> ids;
    std::map<std::string, size_t> id_index;
    std::vector<std::vector<Cell>> cells;
    std::vector<int> offsets;
    std::vector<double> quantiles;
    int max_t = 0, max_h = 0;

    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        auto c = csv::split_line(lines[ln]);
        if (c.size() != 5) throw FormatError("grid row with wrong column count");
        auto fcd = csv::parse_int(c[1]);
        auto h = csv::parse_int(c[2]);
        auto q = csv::parse_double(c[3]);
        auto v = csv::parse_double(c[4]);
        if (!fcd || !h || !q || !v) throw ParseError("bad grid row: " + lines[ln]);
        auto it = id_index.find(c[0]);
        if (it == id_index.end()) {
            it = id_index.emplace(c[0], ids.size()).first;
            ids.push_back(c[0]);
            cells.emplace_back();
            offsets.push_back(static_cast<int>(*fcd));
        }
        size_t b = it->second;
        offsets[b] = std::min(offsets[b], static_cast<int>(*fcd));
        int qi = -1;
        for (size_t i = 0; i < quantiles.size(); ++i)
            if (std::abs(quantiles[i] - *q) < 1e-12) qi = static_cast<int>(i);
        if (qi < 0) {
            qi = static_cast<int>(quantiles.size());
            quantiles.push_back(*q);
        }
        cells[b].push_back({static_cast<int>(*fcd), static_cast<int>(*h), qi, *v});
        max_h = std::max(max_h, static_cast<int>(*h));
    }
    for (size_t b = 0; b < ids.size(); ++b)
        for (const Cell& c : cells[b]) max_t = std::max(max_t, c.t - offsets[b] + 1);

    ForecastGrid grid;
    grid.ids = ids;
    grid.fcd_offset = offsets;
    grid.quantiles = quantiles;
    grid.values = Tensor({static_cast<int>(ids.size()), max_t, max_h,
                          static_cast<int>(quantiles.size())});
    for (size_t b = 0; b < ids.size(); ++b)
        for (const Cell& c : cells[b])
            grid.values.at(static_cast<int>(b), c.t - offsets[b], c.h - 1, c.q) = c.v;
    return grid;
}

}  // namespace forkcast
