#include "crosslag/core/autodiff.hpp"

#include <unordered_set>

#include "crosslag/errors.hpp"

namespace crosslag {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    value.require_finite("leaf tensor");
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
    if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
    return node_->grad;
}

void Var::zero_grad() { node_->grad = Tensor(); }

Tensor& Var::leaf_value() {
    if (!node_->parents.empty()) throw Error("leaf_value() called on an interior node");
    return node_->value;
}

Var Var::from_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward,
                 const char* op_name) {
    value.require_finite(op_name);
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    for (const auto& p : parents) {
        if (p.requires_grad()) node->requires_grad = true;
    }
    // Graphs that never reach a parameter are not recorded.
    if (node->requires_grad) {
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_);
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (!root.defined()) throw Error("backward on undefined Var");
    if (root.size() != 1) {
        throw DimensionError("backward root must be a single element, got " + shape_str(root.shape()));
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order without recursion depth limits.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
}

}  // namespace crosslag
