#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "ap3d/util.hpp"

namespace ap3d {

namespace detail {

// One value in the recorded computation graph. Nodes are created by the op
// functions and linked through `parents`; `backward` reads this node's grad
// and accumulates into the parents' grads.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }

    std::vector<double>& ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

// Scoped "no autodiff recording" switch: forwards built under this guard carry
// no parents/closures, so evaluation does not retain graphs.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
    ~NoGradGuard() { detail::grad_mode_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_mode() { return detail::grad_mode_enabled; }

// Value-semantic handle to a graph node. Copies share the underlying buffer;
// values are treated as immutable once created, except grad buffers and
// in-place parameter updates between steps.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

    static Tensor from_data(std::vector<double> data, Shape shape, bool requires_grad = false) {
        check(shape_numel(shape) == static_cast<std::int64_t>(data.size()),
              "tensor: data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
        for (auto d : shape) check(d > 0, "tensor: extents must be positive, got " + shape_str(shape));
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto count = shape_numel(shape);
        return from_data(std::vector<double>(static_cast<std::size_t>(count), 0.0), std::move(shape), requires_grad);
    }
    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 1.0, requires_grad);
    }
    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        auto count = shape_numel(shape);
        return from_data(std::vector<double>(static_cast<std::size_t>(count), v), std::move(shape), requires_grad);
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({v}, {1}, requires_grad);
    }
    static Tensor rand_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                               bool requires_grad = false) {
        std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : d) x = rng.uniform(lo, hi);
        return from_data(std::move(d), std::move(shape), requires_grad);
    }
    static Tensor rand_normal(Shape shape, Rng& rng, double mean, double stddev,
                              bool requires_grad = false) {
        std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : d) x = rng.normal(mean, stddev);
        return from_data(std::move(d), std::move(shape), requires_grad);
    }
    // He-normal initialization for conv/linear weights (fan_in = per-output input count).
    static Tensor he_normal(Shape shape, std::int64_t fan_in, Rng& rng, bool requires_grad = true) {
        return rand_normal(std::move(shape), rng, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)),
                           requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t size(std::int64_t axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
    std::int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& mutable_values() { return node_->value; }
    const double* data() const { return node_->value.data(); }
    double* data() { return node_->value.data(); }

    double item() const {
        check(numel() == 1, "item(): tensor has " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }

    std::vector<double>& grad() { return node_->ensure_grad(); }
    const std::vector<double>& grad_view() const {
        static const std::vector<double> empty;
        return node_->grad.empty() ? empty : node_->grad;
    }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Builds the output node for an op. Closure attachment follows grad mode and
// input requires_grad flags.
inline Tensor make_op_output(Shape shape, std::vector<double> value,
                             std::vector<std::shared_ptr<Node>> parents,
                             std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool needs = false;
    if (grad_mode_enabled) {
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                needs = true;
                break;
            }
        }
    }
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return Tensor(std::move(n));
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Grads accumulate; callers zero them
// between steps.
inline void backward(const Tensor& loss) {
    check(loss.defined() && loss.numel() == 1, "backward: loss must be a scalar tensor");
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS over the requires_grad subgraph.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            detail::Node* p = node->parents[idx].get();
            ++idx;
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

}  // namespace ap3d
