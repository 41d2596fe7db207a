#include "scw/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "scw/rng.hpp"

namespace scw::nn {

GradCheckResult finite_diff_check(const std::function<ad::Value()>& loss_fn,
                                  const std::vector<ad::Value>& params, double eps,
                                  int coords_per_param, uint64_t seed) {
    for (auto& p : params) p->zero_grad();
    ad::Value root = loss_fn();
    ad::backward(root);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) analytic.push_back(p->grad_ready ? p->grad : Tensor(p->val.shape));

    GradCheckResult res;
    Rng rng(Rng::mix(seed, 0x6fd7));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        ad::Node& p = *params[pi];
        const int n = p.val.numel();
        std::vector<int> coords;
        if (coords_per_param <= 0 || coords_per_param >= n) {
            coords.resize(n);
            for (int i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (int i = 0; i < coords_per_param; ++i)
                coords.push_back(static_cast<int>(rng.uniform_int(0, n - 1)));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        for (int c : coords) {
            const double keep = p.val[c];
            p.val[c] = keep + eps;
            const double lp = loss_fn()->val[0];
            p.val[c] = keep - eps;
            const double lm = loss_fn()->val[0];
            p.val[c] = keep;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = analytic[pi][c];
            const double rel =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            ++res.coords_checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = p.name;
                res.worst_coord = c;
            }
        }
    }
    for (auto& p : params) p->zero_grad();
    return res;
}

}  // namespace scw::nn
