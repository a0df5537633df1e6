#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "aada/tensor.hpp"

namespace aada::nn {

struct Node;
using Var = std::shared_ptr<Node>;

/// One vertex of the backward tape. Graphs are rebuilt every iteration and
/// released when the last Var handle goes out of scope; parameter leaves
/// outlive the tape.
struct Node {
    Tensor value;
    Tensor grad;  // lazily allocated, same shape as value
    bool needs_grad = false;
    std::vector<Var> inputs;
    std::function<void(Node&)> backprop;  // scatters this->grad into inputs

    Tensor& ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape());
        return grad;
    }
    void accumulate(const Tensor& g) {
        ensure_grad();
        for (int64_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
};

inline Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

inline Var leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->needs_grad = true;
    return n;
}

inline Var make_node(Tensor value, std::vector<Var> inputs,
                     std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs)
        if (in->needs_grad) n->needs_grad = true;
    if (n->needs_grad) n->backprop = std::move(backprop);
    return n;
}

/// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss)=1 and walks
/// the tape in reverse topological order.
void backward(const Var& loss);

void zero_grad(const std::vector<Var>& params);

}  // namespace aada::nn
