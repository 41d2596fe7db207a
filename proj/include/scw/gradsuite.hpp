#pragma once

#include <string>
#include <vector>

namespace scw::nn {

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
    long coords = 0;
};

// Finite-difference sweep over every layer kind plus the three training
// losses (layout likelihood, all-pairs and hard-mined triplets, word
// prediction), each on a tiny seeded instance. Passing means every entry
// is below 1e-4.
std::vector<GradSuiteEntry> gradient_battery(uint64_t seed);

bool gradient_battery_passes(const std::vector<GradSuiteEntry>& entries, double tol = 1e-4);

}  // namespace scw::nn
