#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scw/tensor.hpp"

namespace scw::ad {

// Reverse-mode autodiff over a define-by-run DAG. Nodes own their forward
// value; gradients are allocated by backward(). Graphs are rebuilt per
// forward pass; parameter leaves persist across passes and accumulate
// gradients until zeroed.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::string name;  // set on parameter leaves
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& g() {
        if (!grad_ready) {
            grad = Tensor(val.shape);
            grad_ready = true;
        }
        return grad;
    }
    void zero_grad() {
        grad_ready = false;
        grad = Tensor();
    }
};

using Value = std::shared_ptr<Node>;

Value constant(Tensor v);
Value param(Tensor v, std::string name);

// Seeds root with ones (root must then be scalar) or an explicit cotangent,
// then runs every reachable backward_fn in reverse topological order.
void backward(const Value& root);
void backward(const Value& root, const Tensor& seed);

}  // namespace scw::ad
