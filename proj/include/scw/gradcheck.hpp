#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scw/autodiff.hpp"

namespace scw::nn {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_coord = -1;
    long coords_checked = 0;
};

// Central finite differences against the analytic gradient. loss_fn must
// rebuild the graph from the current parameter values and return a scalar.
// coords_per_param 0 sweeps every coordinate; otherwise a seeded subset.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-6).
GradCheckResult finite_diff_check(const std::function<ad::Value()>& loss_fn,
                                  const std::vector<ad::Value>& params, double eps = 1e-4,
                                  int coords_per_param = 0, uint64_t seed = 0);

}  // namespace scw::nn
