#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pdn/errors.hpp"

namespace pdn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // lazily allocated, same extent as values
    bool requires_grad = false;
    uint64_t id = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;  // empty for leaves

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        return grad;
    }
};

inline uint64_t next_node_id() {
    static std::atomic<uint64_t> counter{0};
    return ++counter;
}

}  // namespace detail

// Value-semantic handle to a node of the reverse-mode differentiation graph.
// Ops are free functions (ops.hpp) that record an edge plus a backprop
// closure; Tensor::backward() runs the closures once per node in reverse
// topological order.
class Tensor {
public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> values) {
        if (shape_numel(shape) != static_cast<int64_t>(values.size()))
            throw ShapeError("tensor: shape " + shape_str(shape) + " wants " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
        Tensor t;
        t.node_ = std::make_shared<detail::TensorNode>();
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        t.node_->id = detail::next_node_id();
        return t;
    }

    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

    static Tensor full(Shape shape, double v) {
        auto n = static_cast<size_t>(shape_numel(shape));
        return from(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return from({}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t rank() const { return node_->shape.size(); }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    int64_t numel() const { return static_cast<int64_t>(node_->values.size()); }
    uint64_t id() const { return node_->id; }

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }

    double item() const {
        if (numel() != 1)
            throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
        return node_->values[0];
    }

    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<double>& grad() { return node_->grad_buffer(); }
    const std::vector<double>& grad() const { return node_->grad; }

    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    Tensor& set_requires_grad(bool b = true) {
        node_->requires_grad = b;
        return *this;
    }
    bool requires_grad() const { return node_->requires_grad; }

    // Accumulates d(this)/d(leaf) into every reachable grad buffer. Requires a
    // scalar; each graph node's backprop closure runs exactly once.
    void backward() {
        if (numel() != 1)
            throw ShapeError("backward: output " + shape_str(shape()) + " is not a scalar");
        std::vector<detail::TensorNode*> order;
        topo_sort(order);
        node_->grad_buffer()[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::TensorNode* n = *it;
            if (n->backprop && n->requires_grad) n->backprop(*n);
        }
    }

    // For ops: wires parents and the backprop closure into a fresh node.
    static Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                          std::function<void(detail::TensorNode&)> backprop) {
        Tensor t = from(std::move(shape), std::move(values));
        bool req = false;
        t.node_->parents.reserve(parents.size());
        for (auto& p : parents) {
            req = req || p.node_->requires_grad;
            t.node_->parents.push_back(p.node_);
        }
        t.node_->requires_grad = req;
        if (req) t.node_->backprop = std::move(backprop);
        return t;
    }

    detail::TensorNode& node() const { return *node_; }
    const std::shared_ptr<detail::TensorNode>& ptr() const { return node_; }

private:
    // Iterative post-order DFS over parents; prunes at nodes that do not
    // require grad (nothing upstream of them can either).
    void topo_sort(std::vector<detail::TensorNode*>& order) const {
        std::unordered_set<const detail::TensorNode*> visited;
        std::vector<std::pair<detail::TensorNode*, size_t>> stack;
        if (!node_->requires_grad) return;
        stack.emplace_back(node_.get(), 0);
        visited.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                detail::TensorNode* p = n->parents[next++].get();
                if (p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<detail::TensorNode> node_;
};

}  // namespace pdn
