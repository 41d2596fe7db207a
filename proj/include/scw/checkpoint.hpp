#pragma once

#include <string>

#include "scw/layers.hpp"

namespace scw::nn {

// Parameter checkpoint, magic "SCW1". Per parameter: length-prefixed UTF-8
// name, u32 rank, u32 dims, f64 little-endian values row-major. Entries run
// to end of file in ParamSet creation order.
void save_checkpoint(const ParamSet& ps, const std::string& path);

// Loads values into the matching parameters; every file entry must match an
// existing parameter and shape, and every parameter must be filled.
void load_checkpoint(ParamSet& ps, const std::string& path);

}  // namespace scw::nn
