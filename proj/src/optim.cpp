#include "scw/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace scw::nn {

Adam::Adam(std::vector<ad::Value> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg), lr_eff_(cfg.lr) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p->val.shape);
        v_.emplace_back(p->val.shape);
    }
}

void Adam::set_epoch(int epoch) {
    const int k = cfg_.decay_period > 0 ? epoch / cfg_.decay_period : 0;
    lr_eff_ = cfg_.lr * std::pow(cfg_.decay_factor, k);
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        ad::Node& p = *params_[pi];
        if (!p.grad_ready) continue;  // parameter untouched by this step
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        const int n = p.val.numel();
        for (int i = 0; i < n; ++i) {
            const double g = p.grad[i];
            if (!std::isfinite(g))
                throw std::runtime_error("non-finite gradient in parameter " + p.name);
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.val[i] -= lr_eff_ * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                   cfg_.weight_decay * p.val[i]);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p->zero_grad();
}

}  // namespace scw::nn
