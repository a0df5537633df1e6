#include "aada/autodiff.hpp"

#include <stdexcept>
#include <unordered_set>

namespace aada::nn {

void backward(const Var& loss) {
    if (loss->value.size() != 1)
        throw std::logic_error("backward: loss must be scalar");

    // iterative post-order DFS over grad-relevant subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->needs_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

void zero_grad(const std::vector<Var>& params) {
    for (const auto& p : params)
        if (!p->grad.empty()) p->grad.fill(0.0);
}

}  // namespace aada::nn
