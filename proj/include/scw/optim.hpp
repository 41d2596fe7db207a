#pragma once

#include <vector>

#include "scw/autodiff.hpp"

namespace scw::nn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;   // decoupled, applied directly to parameters
    double decay_factor = 1.0;   // effective lr = lr * factor^(epoch / period)
    int decay_period = 1;        // in epochs
};

class Adam {
  public:
    Adam(std::vector<ad::Value> params, AdamConfig cfg);

    // lr schedule is a step function of the epoch index (0-based)
    void set_epoch(int epoch);
    double effective_lr() const { return lr_eff_; }

    // consumes accumulated gradients; throws on non-finite gradient,
    // naming the parameter
    void step();
    void zero_grad();
    int steps_taken() const { return t_; }

  private:
    std::vector<ad::Value> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    double lr_eff_;
    int t_ = 0;
};

}  // namespace scw::nn
