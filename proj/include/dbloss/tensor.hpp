#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dbloss/errors.hpp"

namespace dbloss {

using Shape = std::vector<std::size_t>;

class Graph;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense n-dimensional array of 64-bit floats, stored row-major.
///
/// A tensor is either a constant (no graph node) or the output of a recorded
/// operation on some Graph. Values are immutable and shared between copies;
/// a tensor carrying a node must not outlive its graph.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const;
    bool defined() const { return static_cast<bool>(values_); }

    const std::vector<double>& values() const;
    std::shared_ptr<const std::vector<double>> shared_values() const { return values_; }
    /// Value of a single-element tensor; ContractError otherwise.
    double value() const;

    bool has_node() const { return graph_ != nullptr; }
    Graph* graph() const { return graph_; }
    int node() const { return node_; }

private:
    Shape shape_;
    std::shared_ptr<const std::vector<double>> values_;
    Graph* graph_ = nullptr;
    int node_ = -1;

    friend class Graph;
    friend Tensor detach(const Tensor&);
};

/// Gradients keyed by leaf node id.
using GradientMap = std::unordered_map<int, Tensor>;

/// Accumulates adjoint contributions into parent buffers during backward.
class AdjointSink {
public:
    /// Zero-initialized adjoint buffer for `node`, sized on first access.
    std::vector<double>& grad_for(int node, std::size_t size);

private:
    explicit AdjointSink(std::size_t node_count) : buffers_(node_count) {}
    std::vector<std::vector<double>> buffers_;
    friend class Graph;
};

/// Append-only tape of recorded operations for reverse-mode differentiation.
///
/// Nodes reference only earlier nodes, so reverse insertion order is a
/// reverse topological order. One graph is built and traversed by a single
/// execution context; independent runs use disjoint graphs.
class Graph {
public:
    using PullFn = std::function<void(const std::vector<double>& out_adjoint, AdjointSink& sink)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Register a trainable leaf. Gradients are reported for leaves only.
    Tensor leaf(const Tensor& constant);

    /// Record a custom differentiable operation. `parents` lists the node ids
    /// this output depends on; `pull` routes the output adjoint to them.
    Tensor record_op(Shape shape, std::vector<double> values, std::vector<int> parents, PullFn pull);

    std::size_t node_count() const { return nodes_.size(); }
    bool is_leaf(int node) const;
    const Shape& node_shape(int node) const;

    /// Reverse sweep from a scalar root: gradients for every reachable leaf.
    /// Adjoints over shared subexpressions accumulate by summation, each node
    /// is visited at most once, and results are deterministic for a fixed
    /// recorded graph.
    GradientMap backward(const Tensor& root) const;

private:
    struct Node {
        Shape shape;
        std::vector<int> parents;
        PullFn pull;
        bool leaf = false;
    };
    std::vector<Node> nodes_;
};

/// Free-function form of Graph::backward. A constant scalar root yields an
/// empty map (nothing trainable is reachable).
GradientMap backward(const Tensor& root);

// Elementwise arithmetic. Shapes must match, or b must be a scalar, or b must
// broadcast into a (same rank, each extent equal to a's or 1 — the
// [1,T,1]-against-[B,T,N] weight pattern). Division by any element with
// magnitude below 1e-300 is a NumericError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);
Tensor div(const Tensor& a, double b);

// Componentwise unary operations. abs uses sign(x) as its adjoint with the
// subgradient at 0 taken as 0.
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor neg(const Tensor& a);

/// Matrix product [m,k]x[k,n] -> [m,n], or batched [m,k]x[B,k,n] -> [B,m,n]
/// with the left operand shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Inclusive prefix sum along `axis`; the adjoint is the suffix sum along the
/// same axis over the same summation order.
Tensor cumsum(const Tensor& a, std::size_t axis);

/// Arithmetic mean over all elements, as a scalar tensor.
Tensor mean(const Tensor& a);

/// Sum over all elements, as a scalar tensor.
Tensor sum(const Tensor& a);

/// Same values, no graph node: downstream operations treat the result as a
/// constant and backward contributes nothing to `a` through this path.
Tensor detach(const Tensor& a);

/// Same linear layout reinterpreted under a new shape of equal element count.
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, b); }

}  // namespace dbloss
