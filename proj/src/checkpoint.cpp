#include "forkcast/checkpoint.hpp"

#include <fstream>

#include "forkcast/csv.hpp"
#include "forkcast/errors.hpp"

namespace forkcast {

namespace {
constexpr const char* kHeader = "forkcast_checkpoint,v1";
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
    out << kHeader << "\n";
    out << "#seed=" << store.seed() << "\n";
    for (const auto& [k, v] : meta) out << "#" << k << "=" << v << "\n";
    for (const std::string& name : store.names()) {
        const Tensor& t = store.value(name);
        out << name << ",";
        const auto& shape = t.shape();
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) out << 'x';
            out << shape[i];
        }
        for (Eigen::Index i = 0; i < t.size(); ++i) out << ',' << csv::fmt(t[i]);
        out << "\n";
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    auto lines = csv::read_lines(path);
    if (lines.empty() || lines[0] != kHeader)
        throw FormatError("not a checkpoint file (bad header): " + path);

    std::map<std::string, std::string> meta;
    uint64_t seed = 0;
    size_t ln = 1;
    for (; ln < lines.size() && !lines[ln].empty() && lines[ln][0] == '#'; ++ln) {
        auto eq = lines[ln].find('=');
        if (eq == std::string::npos) continue;
        std::string key = lines[ln].substr(1, eq - 1);
        std::string val = lines[ln].substr(eq + 1);
        if (key == "seed") {
            if (auto s = csv::parse_int(val)) seed = static_cast<uint64_t>(*s);
        } else {
            meta[key] = val;
        }
    }

    Checkpoint ckpt{ParamStore(seed), std::move(meta)};
    for (; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        auto cells = csv::split_line(lines[ln]);
        if (cells.size() < 3) throw FormatError("malformed checkpoint row");
        std::vector<int> shape;
        size_t pos = 0;
        const std::string& sh = cells[1];
        while (pos < sh.size()) {
            size_t x = sh.find('x', pos);
            std::string dim = sh.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
            auto d = csv::parse_int(dim);
            if (!d || *d < 1) throw ParseError("bad shape in checkpoint: " + sh);
            shape.push_back(static_cast<int>(*d));
            if (x == std::string::npos) break;
            pos = x + 1;
        }
        Tensor& t = ckpt.store.create(cells[0], shape);
        if (static_cast<Eigen::Index>(cells.size()) - 2 != t.size())
            throw ParseError("checkpoint row value count does not match shape");
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            auto v = csv::parse_double(cells[static_cast<size_t>(i) + 2]);
            if (!v) throw ParseError("bad value in checkpoint row " + cells[0]);
            t[i] = *v;
        }
    }
    return ckpt;
}

}  // namespace forkcast
