#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "crosslag/core/tensor.hpp"

namespace crosslag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode graph. `backward` reads `grad` of this node
// and accumulates into the parents' grads.
struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows back
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    Tensor& grad_buffer();  // allocates a zero grad on first use
};

// Handle to a graph node. Leaves created with requires_grad=true are
// parameters; everything produced by an op is an interior node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const { return static_cast<bool>(node_); }

    // Gradient after backward(); zeros of the value's shape if nothing flowed.
    Tensor grad() const;
    void zero_grad();

    // Only leaves may be mutated in place (optimizer steps, finite differences).
    Tensor& leaf_value();

    const NodePtr& node() const { return node_; }

    // Interior-node factory used by ops. Validates finiteness of `value`.
    static Var from_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward,
                       const char* op_name);

private:
    explicit Var(NodePtr node) : node_(std::move(node)) {}
    NodePtr node_;
};

// Seeds d(root)/d(root) = 1 (root must hold a single element) and propagates
// to every reachable node that requires grad.
void backward(const Var& root);

}  // namespace crosslag
