#ifndef RIS_AUTOGRAD_HPP
#define RIS_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <vector>

#include "ris/tensor.hpp"

namespace ris::inline RIS_PRECISION {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One value in the dynamic graph. Leaves (parameters, inputs) have no
// backward function; interior nodes own their parents until the graph dies.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer();
    void accumulate_grad(const Tensor& g);
};

class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var leaf(Tensor value, bool requires_grad = true);

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    int dim(int i) const { return node_->value.dim(i); }
    bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    // Gradient accumulated so far; empty tensor if none reached this node.
    const Tensor& grad() const { return node_->grad; }
    bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
    void zero_grad() { node_->grad = Tensor(); }

    // Reverse sweep seeded with ones; the value must have exactly one element.
    void backward() const;

    Var detach() const { return constant(node_->value); }
    const NodePtr& node() const noexcept { return node_; }

private:
    NodePtr node_;
};

// Builds a result node; the backward closure is kept only when some input
// needs a gradient and grad recording is enabled.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

bool grad_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Re-enables recording inside a NoGradGuard scope.
class EnableGradGuard {
public:
    EnableGradGuard();
    ~EnableGradGuard();
    EnableGradGuard(const EnableGradGuard&) = delete;
    EnableGradGuard& operator=(const EnableGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace ris

#endif  // RIS_AUTOGRAD_HPP
