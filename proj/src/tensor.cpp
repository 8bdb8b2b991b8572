#include "dbloss/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace dbloss {

namespace {

void check_finite(const std::vector<double>& values, const char* op) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + " produced a non-finite value");
        }
    }
}

constexpr double kDivFloor = 1e-300;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_.empty()) {
        throw DimensionError("tensor shape must have at least one extent");
    }
    for (std::size_t d : shape_) {
        if (d == 0) throw DimensionError("tensor extents must be positive");
    }
    if (shape_numel(shape_) != values.size()) {
        throw DimensionError("shape " + shape_to_string(shape_) + " does not match " +
                             std::to_string(values.size()) + " values");
    }
    check_finite(values, "tensor construction");
    values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

std::size_t Tensor::size() const { return values_ ? values_->size() : 0; }

const std::vector<double>& Tensor::values() const {
    if (!values_) throw ContractError("operation on an undefined tensor");
    return *values_;
}

double Tensor::value() const {
    if (size() != 1) {
        throw ContractError("value() requires a single-element tensor, got shape " +
                            shape_to_string(shape_));
    }
    return (*values_)[0];
}

std::vector<double>& AdjointSink::grad_for(int node, std::size_t size) {
    auto& buf = buffers_[static_cast<std::size_t>(node)];
    if (buf.empty()) buf.assign(size, 0.0);
    return buf;
}

Tensor Graph::leaf(const Tensor& constant) {
    if (!constant.defined()) throw ContractError("leaf requires a defined tensor");
    Tensor t;
    t.shape_ = constant.shape_;
    t.values_ = constant.values_;
    t.graph_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{t.shape_, {}, nullptr, true});
    return t;
}

Tensor Graph::record_op(Shape shape, std::vector<double> values, std::vector<int> parents,
                        PullFn pull) {
    for (int p : parents) {
        if (p < 0 || p >= static_cast<int>(nodes_.size())) {
            throw ContractError("operation references an unknown graph node");
        }
    }
    Tensor t(std::move(shape), std::move(values));
    t.graph_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{t.shape_, std::move(parents), std::move(pull), false});
    return t;
}

bool Graph::is_leaf(int node) const { return nodes_.at(static_cast<std::size_t>(node)).leaf; }

const Shape& Graph::node_shape(int node) const {
    return nodes_.at(static_cast<std::size_t>(node)).shape;
}

GradientMap Graph::backward(const Tensor& root) const {
    if (!root.defined() || root.size() != 1) {
        throw ContractError("backward requires a scalar root");
    }
    if (!root.has_node()) return {};
    if (root.graph() != this) throw ContractError("root belongs to a different graph");

    AdjointSink sink(nodes_.size());
    sink.grad_for(root.node(), 1)[0] = 1.0;

    GradientMap grads;
    for (int i = root.node(); i >= 0; --i) {
        auto& buf = sink.buffers_[static_cast<std::size_t>(i)];
        if (buf.empty()) continue;  // unreachable from the root
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        if (node.leaf) {
            grads.emplace(i, Tensor(node.shape, std::move(buf)));
        } else if (node.pull) {
            node.pull(buf, sink);
        }
    }
    return grads;
}

GradientMap backward(const Tensor& root) {
    if (!root.has_node()) {
        if (!root.defined() || root.size() != 1) {
            throw ContractError("backward requires a scalar root");
        }
        return {};
    }
    return root.graph()->backward(root);
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

enum class EwOp { Add, Sub, Mul, Div };

const char* ew_name(EwOp op) {
    switch (op) {
        case EwOp::Add: return "add";
        case EwOp::Sub: return "sub";
        case EwOp::Mul: return "mul";
        case EwOp::Div: return "div";
    }
    return "?";
}

struct BroadcastPlan {
    enum Kind { Same, Scalar, Strided } kind = Same;
    std::vector<std::size_t> bstride;  // per dim of a; 0 on broadcast dims
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan plan;
    if (a == b) {
        plan.kind = BroadcastPlan::Same;
        return plan;
    }
    if (shape_numel(b) == 1) {
        plan.kind = BroadcastPlan::Scalar;
        return plan;
    }
    if (a.size() == b.size()) {
        bool ok = true;
        for (std::size_t d = 0; d < a.size(); ++d) {
            if (b[d] != a[d] && b[d] != 1) { ok = false; break; }
        }
        if (ok) {
            plan.kind = BroadcastPlan::Strided;
            plan.bstride.assign(a.size(), 0);
            std::size_t stride = 1;
            for (std::size_t d = a.size(); d-- > 0;) {
                plan.bstride[d] = (b[d] == 1) ? 0 : stride;
                stride *= b[d];
            }
            return plan;
        }
    }
    throw DimensionError(std::string(op) + ": shape " + shape_to_string(b) +
                         " does not broadcast into " + shape_to_string(a));
}

// Visits (index into a, index into b) pairs in row-major order of a.
template <typename F>
void for_each_pair(const Shape& ashape, const BroadcastPlan& plan, std::size_t n, F&& f) {
    switch (plan.kind) {
        case BroadcastPlan::Same:
            for (std::size_t i = 0; i < n; ++i) f(i, i);
            return;
        case BroadcastPlan::Scalar:
            for (std::size_t i = 0; i < n; ++i) f(i, std::size_t{0});
            return;
        case BroadcastPlan::Strided: {
            const std::size_t rank = ashape.size();
            std::vector<std::size_t> idx(rank, 0);
            std::size_t ib = 0;
            for (std::size_t ia = 0; ia < n; ++ia) {
                f(ia, ib);
                for (std::size_t d = rank; d-- > 0;) {
                    ++idx[d];
                    ib += plan.bstride[d];
                    if (idx[d] < ashape[d]) break;
                    ib -= plan.bstride[d] * ashape[d];
                    idx[d] = 0;
                }
            }
            return;
        }
    }
}

Tensor elementwise(EwOp op, const Tensor& a, const Tensor& b) {
    const char* name = ew_name(op);
    if (!a.defined() || !b.defined()) throw ContractError("operation on an undefined tensor");
    const BroadcastPlan plan = plan_broadcast(a.shape(), b.shape(), name);

    const auto& av = a.values();
    const auto& bv = b.values();
    const std::size_t n = av.size();

    if (op == EwOp::Div) {
        for (double d : bv) {
            if (std::fabs(d) < kDivFloor) {
                throw NumericError("div: divisor magnitude below 1e-300");
            }
        }
    }

    std::vector<double> out(n);
    for_each_pair(a.shape(), plan, n, [&](std::size_t ia, std::size_t ib) {
        switch (op) {
            case EwOp::Add: out[ia] = av[ia] + bv[ib]; break;
            case EwOp::Sub: out[ia] = av[ia] - bv[ib]; break;
            case EwOp::Mul: out[ia] = av[ia] * bv[ib]; break;
            case EwOp::Div: out[ia] = av[ia] / bv[ib]; break;
        }
    });
    check_finite(out, name);

    Graph* g = a.has_node() ? a.graph() : (b.has_node() ? b.graph() : nullptr);
    if (!g) return Tensor(a.shape(), std::move(out));
    if (a.has_node() && b.has_node() && a.graph() != b.graph()) {
        throw ContractError(std::string(name) + ": operands belong to different graphs");
    }

    std::vector<int> parents;
    if (a.has_node()) parents.push_back(a.node());
    if (b.has_node()) parents.push_back(b.node());

    const int pa = a.has_node() ? a.node() : -1;
    const int pb = b.has_node() ? b.node() : -1;
    auto a_vals = a.shared_values();
    auto b_vals = b.shared_values();
    Shape ashape = a.shape();

    auto pull = [op, pa, pb, a_vals, b_vals, ashape, plan, n](const std::vector<double>& gout,
                                                              AdjointSink& sink) {
        if (pa >= 0) {
            auto& ga = sink.grad_for(pa, n);
            for_each_pair(ashape, plan, n, [&](std::size_t ia, std::size_t ib) {
                switch (op) {
                    case EwOp::Add:
                    case EwOp::Sub: ga[ia] += gout[ia]; break;
                    case EwOp::Mul: ga[ia] += gout[ia] * (*b_vals)[ib]; break;
                    case EwOp::Div: ga[ia] += gout[ia] / (*b_vals)[ib]; break;
                }
            });
        }
        if (pb >= 0) {
            auto& gb = sink.grad_for(pb, b_vals->size());
            for_each_pair(ashape, plan, n, [&](std::size_t ia, std::size_t ib) {
                switch (op) {
                    case EwOp::Add: gb[ib] += gout[ia]; break;
                    case EwOp::Sub: gb[ib] -= gout[ia]; break;
                    case EwOp::Mul: gb[ib] += gout[ia] * (*a_vals)[ia]; break;
                    case EwOp::Div: {
                        const double d = (*b_vals)[ib];
                        gb[ib] -= gout[ia] * (*a_vals)[ia] / (d * d);
                        break;
                    }
                }
            });
        }
    };
    return g->record_op(a.shape(), std::move(out), std::move(parents), std::move(pull));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(EwOp::Div, a, b); }
Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor sub(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor div(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }

// ---------------------------------------------------------------------------
// unary
// ---------------------------------------------------------------------------

namespace {

enum class UnOp { Abs, Square, Neg };

Tensor unary(UnOp op, const Tensor& a) {
    const auto& av = a.values();
    const std::size_t n = av.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (op) {
            case UnOp::Abs: out[i] = std::fabs(av[i]); break;
            case UnOp::Square: out[i] = av[i] * av[i]; break;
            case UnOp::Neg: out[i] = -av[i]; break;
        }
    }
    check_finite(out, op == UnOp::Abs ? "abs" : op == UnOp::Square ? "square" : "neg");
    if (!a.has_node()) return Tensor(a.shape(), std::move(out));

    const int pa = a.node();
    auto a_vals = a.shared_values();
    auto pull = [op, pa, a_vals, n](const std::vector<double>& gout, AdjointSink& sink) {
        auto& ga = sink.grad_for(pa, n);
        for (std::size_t i = 0; i < n; ++i) {
            switch (op) {
                case UnOp::Abs: {
                    const double x = (*a_vals)[i];
                    const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                    ga[i] += gout[i] * s;
                    break;
                }
                case UnOp::Square: ga[i] += gout[i] * 2.0 * (*a_vals)[i]; break;
                case UnOp::Neg: ga[i] -= gout[i]; break;
            }
        }
    };
    return a.graph()->record_op(a.shape(), std::move(out), {pa}, std::move(pull));
}

}  // namespace

Tensor abs(const Tensor& a) { return unary(UnOp::Abs, a); }
Tensor square(const Tensor& a) { return unary(UnOp::Square, a); }
Tensor neg(const Tensor& a) { return unary(UnOp::Neg, a); }

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 3)) {
        throw DimensionError("matmul expects [m,k]x[k,n] or [m,k]x[B,k,n], got " +
                             shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
    }
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const bool batched = b.rank() == 3;
    const std::size_t batch = batched ? b.shape()[0] : 1;
    const std::size_t bk = batched ? b.shape()[1] : b.shape()[0];
    const std::size_t n = batched ? b.shape()[2] : b.shape()[1];
    if (bk != k) {
        throw DimensionError("matmul inner extents differ: " + shape_to_string(a.shape()) +
                             " x " + shape_to_string(b.shape()));
    }

    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(batch * m * n, 0.0);
    for (std::size_t bb = 0; bb < batch; ++bb) {
        const double* bp = bv.data() + bb * k * n;
        double* op = out.data() + bb * m * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = av.data() + i * k;
            double* orow = op + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = arow[kk];
                const double* brow = bp + kk * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
            }
        }
    }
    check_finite(out, "matmul");

    Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
    Graph* g = a.has_node() ? a.graph() : (b.has_node() ? b.graph() : nullptr);
    if (!g) return Tensor(std::move(out_shape), std::move(out));
    if (a.has_node() && b.has_node() && a.graph() != b.graph()) {
        throw ContractError("matmul: operands belong to different graphs");
    }

    std::vector<int> parents;
    if (a.has_node()) parents.push_back(a.node());
    if (b.has_node()) parents.push_back(b.node());
    const int pa = a.has_node() ? a.node() : -1;
    const int pb = b.has_node() ? b.node() : -1;
    auto a_vals = a.shared_values();
    auto b_vals = b.shared_values();

    auto pull = [pa, pb, a_vals, b_vals, batch, m, k, n](const std::vector<double>& gout,
                                                         AdjointSink& sink) {
        if (pa >= 0) {
            auto& ga = sink.grad_for(pa, m * k);
            for (std::size_t bb = 0; bb < batch; ++bb) {
                const double* gp = gout.data() + bb * m * n;
                const double* bp = b_vals->data() + bb * k * n;
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gp + i * n;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double* brow = bp + kk * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + kk] += acc;
                    }
                }
            }
        }
        if (pb >= 0) {
            auto& gb = sink.grad_for(pb, batch * k * n);
            for (std::size_t bb = 0; bb < batch; ++bb) {
                const double* gp = gout.data() + bb * m * n;
                double* gbp = gb.data() + bb * k * n;
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = gp + i * n;
                    const double* arow = a_vals->data() + i * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        const double aik = arow[kk];
                        double* gbrow = gbp + kk * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
                    }
                }
            }
        }
    };
    return g->record_op(std::move(out_shape), std::move(out), std::move(parents), std::move(pull));
}

// ---------------------------------------------------------------------------
// cumsum, mean, sum, detach, reshape
// ---------------------------------------------------------------------------

Tensor cumsum(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw DimensionError("cumsum axis " + std::to_string(axis) + " out of range for shape " +
                             shape_to_string(a.shape()));
    }
    const auto& av = a.values();
    const Shape& shape = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
    const std::size_t len = shape[axis];

    std::vector<double> out(av.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double acc = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                acc += av[base + t * inner];
                out[base + t * inner] = acc;
            }
        }
    }
    check_finite(out, "cumsum");
    if (!a.has_node()) return Tensor(shape, std::move(out));

    const int pa = a.node();
    const std::size_t total = av.size();
    auto pull = [pa, outer, inner, len, total](const std::vector<double>& gout,
                                               AdjointSink& sink) {
        auto& ga = sink.grad_for(pa, total);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const std::size_t base = o * len * inner + i;
                double acc = 0.0;
                for (std::size_t t = len; t-- > 0;) {
                    acc += gout[base + t * inner];
                    ga[base + t * inner] += acc;
                }
            }
        }
    };
    return a.graph()->record_op(shape, std::move(out), {pa}, std::move(pull));
}

namespace {

Tensor reduce_all(const Tensor& a, bool divide) {
    if (!a.defined()) throw DimensionError("reduction over an empty tensor");
    const auto& av = a.values();
    const std::size_t n = av.size();
    double acc = 0.0;
    for (double v : av) acc += v;
    if (divide) acc /= static_cast<double>(n);
    std::vector<double> out{acc};
    check_finite(out, divide ? "mean" : "sum");
    if (!a.has_node()) return Tensor({1}, std::move(out));

    const int pa = a.node();
    auto pull = [pa, n, divide](const std::vector<double>& gout, AdjointSink& sink) {
        auto& ga = sink.grad_for(pa, n);
        const double each = divide ? gout[0] / static_cast<double>(n) : gout[0];
        for (std::size_t i = 0; i < n; ++i) ga[i] += each;
    };
    return a.graph()->record_op({1}, std::move(out), {pa}, std::move(pull));
}

}  // namespace

Tensor mean(const Tensor& a) { return reduce_all(a, true); }
Tensor sum(const Tensor& a) { return reduce_all(a, false); }

Tensor detach(const Tensor& a) {
    if (!a.defined()) throw ContractError("detach of an undefined tensor");
    Tensor t;
    t.shape_ = a.shape_;
    t.values_ = a.values_;
    return t;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size()) {
        throw DimensionError("reshape to " + shape_to_string(shape) + " changes element count of " +
                             shape_to_string(a.shape()));
    }
    if (!a.has_node()) return Tensor(std::move(shape), a.values());

    const int pa = a.node();
    const std::size_t n = a.size();
    auto pull = [pa, n](const std::vector<double>& gout, AdjointSink& sink) {
        auto& ga = sink.grad_for(pa, n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += gout[i];
    };
    return a.graph()->record_op(std::move(shape), a.values(), {pa}, std::move(pull));
}

}  // namespace dbloss
