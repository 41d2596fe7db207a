#include "scw/autodiff.hpp"

#include <unordered_set>

namespace scw::ad {

Value constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = false;
    return n;
}

Value param(Tensor v, std::string name) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = true;
    n->name = std::move(name);
    return n;
}

namespace {

// Iterative post-order DFS; recursion would overflow on long LSTM chains.
void topo_sort(const Value& root, std::vector<Node*>& order) {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* in = node->inputs[idx].get();
            ++idx;
            if (in->requires_grad && !seen.count(in)) {
                seen.insert(in);
                stack.emplace_back(in, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const Value& root, const Tensor& seed) {
    if (!root->requires_grad) return;
    if (!root->val.same_shape(seed))
        throw std::invalid_argument("backward seed shape " + seed.shape_str() +
                                    " does not match value shape " + root->val.shape_str());
    std::vector<Node*> order;
    topo_sort(root, order);
    Tensor& rg = root->g();
    for (int i = 0; i < seed.numel(); ++i) rg[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad_ready) n->backward_fn(*n);
    }
}

void backward(const Value& root) {
    if (root->val.numel() != 1)
        throw std::invalid_argument("backward without explicit seed requires a scalar root");
    backward(root, Tensor::scalar(1.0));
}

}  // namespace scw::ad
