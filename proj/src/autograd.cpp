#include "ris/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace ris::inline RIS_PRECISION {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

EnableGradGuard::EnableGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_enabled = previous_; }

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

void Node::accumulate_grad(const Tensor& g) {
    if (grad.empty()) {
        check_same_shape(value, g, "accumulate_grad");
        grad = g;
    } else {
        grad.add_(g);
    }
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (!g_grad_enabled) return Var(std::move(n));
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        n->requires_grad = true;
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

void Var::backward() const {
    if (!node_) throw std::logic_error("backward() on undefined Var");
    if (node_->value.size() != 1)
        throw std::logic_error("backward() needs a single-element output, got " + shape_str(node_->value.shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order without recursion depth limits.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->accumulate_grad(Tensor(node_->value.shape(), Real(1)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace ris
