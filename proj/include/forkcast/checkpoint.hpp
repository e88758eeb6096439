#pragma once

#include <map>
#include <string>

#include "forkcast/autodiff.hpp"

namespace forkcast {

/// Versioned CSV checkpoint: one `name,shape,values...` row per parameter,
/// values in round-trip-exact decimal form, plus free-form metadata lines.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta = {});

struct Checkpoint {
    ParamStore store;
    std::map<std::string, std::string> meta;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace forkcast
