#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcm/blas.hpp"

namespace mcm {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Bad shapes, bad labels, bad config — caller mistakes.
struct shape_error : error {
    using error::error;
};
// NaN/Inf surfaced by a primitive op.
struct numeric_error : error {
    using error::error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << ')';
    return os.str();
}

// A NaN or Inf anywhere poisons the sum, so one reduction checks the whole
// buffer.
template <class T>
void check_finite(const std::vector<T>& data, const char* op) {
    double s = 0.0;
    for (const T v : data) s += static_cast<double>(v);
    if (!std::isfinite(s)) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (!std::isfinite(static_cast<double>(data[i])))
                throw numeric_error(std::string(op) + ": non-finite value at flat index " +
                                    std::to_string(i));
        }
        // Large finite values can overflow the double accumulator only past
        // ~1e300; unreachable for float inputs, but keep the fallback honest.
        throw numeric_error(std::string(op) + ": non-finite accumulation");
    }
}

template <class T>
struct NodeT {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated on demand, same length as data
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<NodeT>> parents;
    std::function<void(NodeT&)> backward_fn;  // empty for leaves

    std::size_t size() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }
};

// Shared handle to a node in (or feeding) a differentiation tape.
template <class T>
class TensorT {
public:
    using Node = NodeT<T>;
    using value_type = T;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static TensorT leaf(Shape shape, std::vector<T> data, bool requires_grad = false) {
        if (numel(shape) != data.size())
            throw shape_error("tensor: data length " + std::to_string(data.size()) +
                              " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> d(numel(shape), T(0));
        return leaf(std::move(shape), std::move(d), requires_grad);
    }

    static TensorT scalar(T v) { return leaf({1}, {v}); }

    bool valid() const { return node_ != nullptr; }
    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& ptr() const { return node_; }

    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::vector<T>& data() const { return node_->data; }
    std::vector<T>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }

    T item() const {
        if (size() != 1)
            throw shape_error("item: tensor has " + std::to_string(size()) + " elements");
        return node_->data[0];
    }

    T& at(std::size_t i) const { return node_->data[i]; }

private:
    std::shared_ptr<Node> node_;
};

// Records ops in execution order; execution order is a topological order
// because an op's inputs exist before the op runs.
template <class T>
class TapeT {
public:
    using Tensor = TensorT<T>;

    Tensor record(std::shared_ptr<NodeT<T>> node) {
        nodes_.push_back(node);
        return Tensor(std::move(node));
    }

    std::size_t size() const { return nodes_.size(); }

    // Reverse replay. Populates grad on every requires_grad leaf reachable
    // from `loss`; gradient fan-in is additive.
    void backward(const Tensor& loss) {
        if (loss.size() != 1)
            throw shape_error("backward: loss must be scalar, got " +
                              shape_str(loss.shape()));
        if (consumed_) throw error("backward: tape already consumed");
        if (!loss.requires_grad())
            throw error("backward: loss does not require grad");
        consumed_ = true;
        loss.node()->ensure_grad();
        loss.grad()[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            NodeT<T>& n = **it;
            if (n.backward_fn && n.requires_grad && !n.grad.empty())
                n.backward_fn(n);
        }
    }

private:
    std::vector<std::shared_ptr<NodeT<T>>> nodes_;
    bool consumed_ = false;
};

namespace detail {

template <class T>
std::shared_ptr<NodeT<T>> make_node(Shape shape, std::vector<T> data, const char* op,
                                    std::vector<std::shared_ptr<NodeT<T>>> parents) {
    check_finite(data, op);
    auto n = std::make_shared<NodeT<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = op;
    for (auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    return n;
}

}  // namespace detail

// ---- primitive ops ----

template <class T>
TensorT<T> matmul(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 ||
        a.shape()[1] != b.shape()[0])
        throw shape_error("matmul: incompatible shapes " + shape_str(a.shape()) +
                          " and " + shape_str(b.shape()));
    const int m = static_cast<int>(a.shape()[0]);
    const int k = static_cast<int>(a.shape()[1]);
    const int n = static_cast<int>(b.shape()[1]);
    std::vector<T> out(static_cast<std::size_t>(m) * n, T(0));
    detail::gemm(false, false, m, n, k, T(1), a.data().data(), k,
                 b.data().data(), n, T(0), out.data(), n);
    auto node = detail::make_node<T>({static_cast<std::size_t>(m), static_cast<std::size_t>(n)},
                                     std::move(out), "matmul", {a.ptr(), b.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [m, n, k](NodeT<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                detail::gemm(false, true, m, k, n, T(1), self.grad.data(), n,
                             pb.data.data(), n, T(1), pa.grad.data(), k);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                detail::gemm(true, false, k, n, m, T(1), pa.data.data(), k,
                             self.grad.data(), n, T(1), pb.grad.data(), n);
            }
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> add(TapeT<T>& tape, const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw shape_error("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto node = detail::make_node<T>(a.shape(), std::move(out), "add", {a.ptr(), b.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](NodeT<T>& self) {
            for (auto& p : self.parents) {
                if (!p->requires_grad) continue;
                p->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    p->grad[i] += self.grad[i];
            }
        };
    }
    return tape.record(std::move(node));
}

// x: rows x cols, bias: cols. Broadcast add over rows.
template <class T>
TensorT<T> add_bias(TapeT<T>& tape, const TensorT<T>& x, const TensorT<T>& bias) {
    if (x.shape().empty() || bias.shape().size() != 1 ||
        x.shape().back() != bias.shape()[0])
        throw shape_error("add_bias: " + shape_str(x.shape()) + " vs " +
                          shape_str(bias.shape()));
    const std::size_t cols = bias.shape()[0];
    const std::size_t rows = x.size() / cols;
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            out[r * cols + c] = x.data()[r * cols + c] + bias.data()[c];
    auto node = detail::make_node<T>(x.shape(), std::move(out), "add_bias",
                                     {x.ptr(), bias.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [rows, cols](NodeT<T>& self) {
            auto& px = *self.parents[0];
            auto& pb = *self.parents[1];
            if (px.requires_grad) {
                px.ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    px.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        pb.grad[c] += self.grad[r * cols + c];
            }
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> relu(TapeT<T>& tape, const TensorT<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    auto node = detail::make_node<T>(x.shape(), std::move(out), "relu", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (p.data[i] > T(0)) p.grad[i] += self.grad[i];
        };
    }
    return tape.record(std::move(node));
}

// Last-axis softmax with max subtraction.
template <class T>
TensorT<T> softmax(TapeT<T>& tape, const TensorT<T>& x) {
    if (x.shape().empty() || x.shape().back() < 2)
        throw shape_error("softmax: last axis must have >= 2 entries, got " +
                          shape_str(x.shape()));
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.size() / c;
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x.data().data() + r * c;
        T* yi = out.data() + r * c;
        T mx = xi[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
        T s = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            s += yi[j];
        }
        for (std::size_t j = 0; j < c; ++j) yi[j] /= s;
    }
    auto node = detail::make_node<T>(x.shape(), std::move(out), "softmax", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [rows, c](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.data.data() + r * c;
                const T* g = self.grad.data() + r * c;
                T dot = T(0);
                for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
                for (std::size_t j = 0; j < c; ++j)
                    p.grad[r * c + j] += y[j] * (g[j] - dot);
            }
        };
    }
    return tape.record(std::move(node));
}

inline constexpr double kCrossEntropyFloor = 1e-9;

// Mean over the batch of -log(probs[i, labels[i]]), probabilities floored at
// 1e-9 inside the log.
template <class T>
TensorT<T> cross_entropy(TapeT<T>& tape, const TensorT<T>& probs,
                         const std::vector<std::size_t>& labels) {
    if (probs.shape().size() != 2)
        throw shape_error("cross_entropy: probs must be 2-D, got " +
                          shape_str(probs.shape()));
    const std::size_t b = probs.shape()[0];
    const std::size_t c = probs.shape()[1];
    if (labels.size() != b)
        throw shape_error("cross_entropy: " + std::to_string(labels.size()) +
                          " labels for batch of " + std::to_string(b));
    for (std::size_t i = 0; i < b; ++i)
        if (labels[i] >= c)
            throw shape_error("cross_entropy: label " + std::to_string(labels[i]) +
                              " out of range [0," + std::to_string(c) + ") at row " +
                              std::to_string(i));
    const T floor = static_cast<T>(kCrossEntropyFloor);
    T loss = T(0);
    for (std::size_t i = 0; i < b; ++i) {
        const T p = std::max(probs.data()[i * c + labels[i]], floor);
        loss -= std::log(p);
    }
    loss /= static_cast<T>(b);
    auto node = detail::make_node<T>({1}, {loss}, "cross_entropy", {probs.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [b, c, labels, floor](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            const T g = self.grad[0] / static_cast<T>(b);
            for (std::size_t i = 0; i < b; ++i) {
                const T pi = p.data[i * c + labels[i]];
                if (pi > floor) p.grad[i * c + labels[i]] -= g / pi;
            }
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> scale(TapeT<T>& tape, const TensorT<T>& x, T factor) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
    auto node = detail::make_node<T>(x.shape(), std::move(out), "scale", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [factor](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                p.grad[i] += factor * self.grad[i];
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> tanh_op(TapeT<T>& tape, const TensorT<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
    auto node = detail::make_node<T>(x.shape(), std::move(out), "tanh", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                p.grad[i] += (T(1) - self.data[i] * self.data[i]) * self.grad[i];
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> square(TapeT<T>& tape, const TensorT<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * x.data()[i];
    auto node = detail::make_node<T>(x.shape(), std::move(out), "square", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                p.grad[i] += T(2) * p.data[i] * self.grad[i];
        };
    }
    return tape.record(std::move(node));
}

template <class T>
TensorT<T> sum(TapeT<T>& tape, const TensorT<T>& x) {
    T s = T(0);
    for (const T v : x.data()) s += v;
    auto node = detail::make_node<T>({1}, {s}, "sum", {x.ptr()});
    if (node->requires_grad) {
        node->backward_fn = [](NodeT<T>& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (auto& g : p.grad) g += self.grad[0];
        };
    }
    return tape.record(std::move(node));
}

// Column-wise concat of 2-D tensors sharing the leading (batch) extent.
template <class T>
TensorT<T> concat_cols(TapeT<T>& tape, const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: no inputs");
    const std::size_t rows = parts[0].shape()[0];
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        if (p.shape().size() != 2 || p.shape()[0] != rows)
            throw shape_error("concat_cols: batch-size mismatch, " +
                              shape_str(p.shape()) + " vs leading " +
                              std::to_string(rows));
        widths.push_back(p.shape()[1]);
        total += p.shape()[1];
    }
    std::vector<T> out(rows * total);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& d = parts[k].data();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(d.begin() + r * widths[k], d.begin() + (r + 1) * widths[k],
                      out.begin() + r * total + off);
        off += widths[k];
    }
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    for (const auto& p : parts) parents.push_back(p.ptr());
    auto node = detail::make_node<T>({rows, total}, std::move(out), "concat",
                                     std::move(parents));
    if (node->requires_grad) {
        node->backward_fn = [rows, total, widths](NodeT<T>& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < self.parents.size(); ++k) {
                auto& p = *self.parents[k];
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < widths[k]; ++c)
                            p.grad[r * widths[k] + c] += self.grad[r * total + off + c];
                }
                off += widths[k];
            }
        };
    }
    return tape.record(std::move(node));
}

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

}  // namespace mcm
