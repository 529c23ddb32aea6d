#pragma once
/// Dense double-precision tensors with define-by-run reverse-mode autodiff.
///
/// Every operation validates shapes, checks its result for non-finite values,
/// and records a tape node when gradients are enabled and any input requires
/// them. backward() walks the tape in reverse topological order and
/// ACCUMULATES into each reachable tensor's grad buffer; grads persist until
/// zeroed explicitly. The tape is rebuilt on every forward pass and freed when
/// the last handle to the loss goes out of scope.
///
/// Subgradient convention: relu and leaky_relu have derivative 0 at exactly 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tgphy/common.hpp"

namespace tgphy {

namespace detail {

inline thread_local bool g_grad_enabled = true;

struct TapeNode {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    bool requires_grad = false;
    std::vector<double> grad;     // persistent accumulator, allocated lazily
    std::vector<double> adjoint;  // scratch, live only inside backward()
    std::vector<std::shared_ptr<TapeNode>> parents;
    std::function<void(TapeNode&)> backprop;  // pushes adjoint into parents
    const char* op = "leaf";

    std::size_t numel() const { return value.size(); }
};

inline void check_finite(const char* op, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw std::runtime_error(std::string(op) + ": non-finite value at index " +
                                     std::to_string(i));
        }
    }
}

}  // namespace detail

inline bool grad_enabled() { return detail::g_grad_enabled; }

/// Scoped switch that stops new operations from recording tape nodes.
struct NoGradGuard {
    bool saved;
    NoGradGuard() : saved(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
    ~NoGradGuard() { detail::g_grad_enabled = saved; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor constant(std::vector<std::size_t> shape, std::vector<double> values) {
        return make(std::move(shape), std::move(values), false);
    }
    static Tensor parameter(std::vector<std::size_t> shape, std::vector<double> values) {
        return make(std::move(shape), std::move(values), true);
    }
    static Tensor scalar(double v) { return constant({1}, {v}); }
    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        std::size_t n = count(shape);
        return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }
    static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false) {
        std::size_t n = count(shape);
        return make(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node().shape; }
    std::size_t numel() const { return node().value.size(); }
    std::size_t dim(std::size_t i) const { return node().shape.at(i); }
    const std::vector<double>& values() const { return node().value; }
    double value_at(std::size_t i) const { return node().value.at(i); }

    double scalar_value() const {
        if (numel() != 1)
            throw std::runtime_error("scalar_value: tensor has shape " + shape_str(shape()));
        return node().value[0];
    }

    bool requires_grad() const { return node().requires_grad; }
    bool has_grad() const { return !node().grad.empty(); }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw std::runtime_error("grad: no gradient recorded");
        return node().grad;
    }

    /// Allocates the grad buffer if needed and fills it with zeros.
    void zero_grad() {
        auto& g = node().grad;
        g.assign(node().value.size(), 0.0);
    }

    /// Raw in-place access to the stored values. Bypasses the tape; meant for
    /// optimizer updates and finite-difference perturbation.
    std::vector<double>& mutable_values() { return node().value; }

    detail::TapeNode& node() const {
        if (!node_) throw std::runtime_error("use of undefined tensor");
        return *node_;
    }
    const std::shared_ptr<detail::TapeNode>& handle() const { return node_; }

    friend Tensor make_op(const char* op, std::vector<std::size_t> shape,
                          std::vector<double> value,
                          std::vector<std::shared_ptr<detail::TapeNode>> parents,
                          std::function<void(detail::TapeNode&)> backprop);

  private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
    static Tensor make(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad) {
        if (count(shape) != values.size())
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " +
                                        std::to_string(count(shape)) + " values, got " +
                                        std::to_string(values.size()));
        detail::check_finite("tensor", values);
        Tensor t;
        t.node_ = std::make_shared<detail::TapeNode>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    std::shared_ptr<detail::TapeNode> node_;
};

/// Builds an op result node. Parents and the backward rule are dropped when
/// gradients are disabled or no input needs them.
inline Tensor make_op(const char* op, std::vector<std::size_t> shape, std::vector<double> value,
                      std::vector<std::shared_ptr<detail::TapeNode>> parents,
                      std::function<void(detail::TapeNode&)> backprop) {
    detail::check_finite(op, value);
    bool rg = false;
    if (detail::g_grad_enabled) {
        for (const auto& p : parents) rg = rg || p->requires_grad;
    }
    Tensor t;
    auto n = std::make_shared<detail::TapeNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = rg;
    n->op = op;
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    t.node_ = std::move(n);
    return t;
}

namespace detail {

inline void accum(TapeNode* p, std::size_t i, double v) {
    if (p->requires_grad) p->adjoint[i] += v;
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto* pa = a.handle().get();
    auto* pb = b.handle().get();
    return make_op("add", a.shape(), std::move(out), {a.handle(), b.handle()},
                   [pa, pb](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i) {
                           detail::accum(pa, i, n.adjoint[i]);
                           detail::accum(pb, i, n.adjoint[i]);
                       }
                   });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto* pa = a.handle().get();
    auto* pb = b.handle().get();
    return make_op("sub", a.shape(), std::move(out), {a.handle(), b.handle()},
                   [pa, pb](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i) {
                           detail::accum(pa, i, n.adjoint[i]);
                           detail::accum(pb, i, -n.adjoint[i]);
                       }
                   });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto* pa = a.handle().get();
    auto* pb = b.handle().get();
    return make_op("mul", a.shape(), std::move(out), {a.handle(), b.handle()},
                   [pa, pb](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i) {
                           detail::accum(pa, i, n.adjoint[i] * pb->value[i]);
                           detail::accum(pb, i, n.adjoint[i] * pa->value[i]);
                       }
                   });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::require_same_shape("div", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
    auto* pa = a.handle().get();
    auto* pb = b.handle().get();
    return make_op("div", a.shape(), std::move(out), {a.handle(), b.handle()},
                   [pa, pb](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i) {
                           double bi = pb->value[i];
                           detail::accum(pa, i, n.adjoint[i] / bi);
                           detail::accum(pb, i, -n.adjoint[i] * pa->value[i] / (bi * bi));
                       }
                   });
}

// ---------------------------------------------------------------------------
// Matrix multiply: {m,k}x{k,n} -> {m,n} and {m,k}x{k} -> {m}
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2)
        throw std::invalid_argument("matmul: left operand must be 2-D, got " +
                                    shape_str(a.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1);
    const bool vec = b.shape().size() == 1;
    if (!vec && b.shape().size() != 2)
        throw std::invalid_argument("matmul: right operand must be 1-D or 2-D, got " +
                                    shape_str(b.shape()));
    const std::size_t bk = vec ? b.dim(0) : b.dim(0);
    const std::size_t n = vec ? 1 : b.dim(1);
    if (k != bk)
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) s += av[i * k + t] * bv[t * n + j];
            out[i * n + j] = s;
        }
    std::vector<std::size_t> shape = vec ? std::vector<std::size_t>{m}
                                         : std::vector<std::size_t>{m, n};
    auto* pa = a.handle().get();
    auto* pb = b.handle().get();
    return make_op("matmul", std::move(shape), std::move(out), {a.handle(), b.handle()},
                   [pa, pb, m, k, n](detail::TapeNode& node) {
                       // dA = G B^T, dB = A^T G
                       for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t t = 0; t < k; ++t) {
                               double s = 0.0;
                               for (std::size_t j = 0; j < n; ++j)
                                   s += node.adjoint[i * n + j] * pb->value[t * n + j];
                               detail::accum(pa, i * k + t, s);
                           }
                       for (std::size_t t = 0; t < k; ++t)
                           for (std::size_t j = 0; j < n; ++j) {
                               double s = 0.0;
                               for (std::size_t i = 0; i < m; ++i)
                                   s += pa->value[i * k + t] * node.adjoint[i * n + j];
                               detail::accum(pb, t * n + j, s);
                           }
                   });
}

// ---------------------------------------------------------------------------
// Scalar-constant ops
// ---------------------------------------------------------------------------

inline Tensor scalar_mul(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    auto* pa = a.handle().get();
    return make_op("scalar_mul", a.shape(), std::move(out), {a.handle()},
                   [pa, c](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i)
                           detail::accum(pa, i, n.adjoint[i] * c);
                   });
}

inline Tensor scalar_add(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
    auto* pa = a.handle().get();
    return make_op("scalar_add", a.shape(), std::move(out), {a.handle()},
                   [pa](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i)
                           detail::accum(pa, i, n.adjoint[i]);
                   });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto* pa = a.handle().get();
    return make_op("sum", {1}, {s}, {a.handle()}, [pa](detail::TapeNode& n) {
        for (std::size_t i = 0; i < pa->value.size(); ++i) detail::accum(pa, i, n.adjoint[0]);
    });
}

inline Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto* pa = a.handle().get();
    return make_op("mean", {1}, {s * inv}, {a.handle()}, [pa, inv](detail::TapeNode& n) {
        for (std::size_t i = 0; i < pa->value.size(); ++i)
            detail::accum(pa, i, n.adjoint[0] * inv);
    });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    auto* pa = a.handle().get();
    return make_op("relu", a.shape(), std::move(out), {a.handle()}, [pa](detail::TapeNode& n) {
        for (std::size_t i = 0; i < n.numel(); ++i)
            detail::accum(pa, i, pa->value[i] > 0.0 ? n.adjoint[i] : 0.0);
    });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.2) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = a.values()[i];
        out[i] = v > 0.0 ? v : slope * v;
    }
    auto* pa = a.handle().get();
    return make_op("leaky_relu", a.shape(), std::move(out), {a.handle()},
                   [pa, slope](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i) {
                           double v = pa->value[i];
                           // derivative pinned to 0 at v == 0
                           double d = v > 0.0 ? 1.0 : (v < 0.0 ? slope : 0.0);
                           detail::accum(pa, i, n.adjoint[i] * d);
                       }
                   });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
    auto* pa = a.handle().get();
    return make_op("tanh", a.shape(), std::move(out), {a.handle()}, [pa](detail::TapeNode& n) {
        for (std::size_t i = 0; i < n.numel(); ++i) {
            double t = n.value[i];
            detail::accum(pa, i, n.adjoint[i] * (1.0 - t * t));
        }
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
    auto* pa = a.handle().get();
    return make_op("sigmoid", a.shape(), std::move(out), {a.handle()}, [pa](detail::TapeNode& n) {
        for (std::size_t i = 0; i < n.numel(); ++i) {
            double s = n.value[i];
            detail::accum(pa, i, n.adjoint[i] * s * (1.0 - s));
        }
    });
}

inline Tensor exp(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
    auto* pa = a.handle().get();
    return make_op("exp", a.shape(), std::move(out), {a.handle()}, [pa](detail::TapeNode& n) {
        for (std::size_t i = 0; i < n.numel(); ++i)
            detail::accum(pa, i, n.adjoint[i] * n.value[i]);
    });
}

inline Tensor square(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * a.values()[i];
    auto* pa = a.handle().get();
    return make_op("square", a.shape(), std::move(out), {a.handle()}, [pa](detail::TapeNode& n) {
        for (std::size_t i = 0; i < n.numel(); ++i)
            detail::accum(pa, i, n.adjoint[i] * 2.0 * pa->value[i]);
    });
}

inline Tensor pow(const Tensor& a, double k) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(a.values()[i], k);
    auto* pa = a.handle().get();
    return make_op("pow", a.shape(), std::move(out), {a.handle()},
                   [pa, k](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i)
                           detail::accum(pa, i,
                                         n.adjoint[i] * k * std::pow(pa->value[i], k - 1.0));
                   });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    if (n != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    auto* pa = a.handle().get();
    std::vector<double> out = a.values();
    return make_op("reshape", std::move(shape), std::move(out), {a.handle()},
                   [pa](detail::TapeNode& node) {
                       for (std::size_t i = 0; i < node.numel(); ++i)
                           detail::accum(pa, i, node.adjoint[i]);
                   });
}

/// Concatenates two tensors along `axis` (1-D: axis 0; 2-D: axis 0 or 1).
inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != sb.size() || axis >= sa.size())
        throw std::invalid_argument("concat: incompatible shapes " + shape_str(sa) + " vs " +
                                    shape_str(sb) + " on axis " + std::to_string(axis));
    for (std::size_t d = 0; d < sa.size(); ++d)
        if (d != axis && sa[d] != sb[d])
            throw std::invalid_argument("concat: shapes " + shape_str(sa) + " and " +
                                        shape_str(sb) + " differ off axis " +
                                        std::to_string(axis));
    auto* pa = a.handle().get();
    auto* pb = b.handle().get();
    if (sa.size() == 1) {
        std::vector<double> out = a.values();
        out.insert(out.end(), b.values().begin(), b.values().end());
        std::size_t na = sa[0];
        return make_op("concat", {sa[0] + sb[0]}, std::move(out), {a.handle(), b.handle()},
                       [pa, pb, na](detail::TapeNode& n) {
                           for (std::size_t i = 0; i < na; ++i) detail::accum(pa, i, n.adjoint[i]);
                           for (std::size_t i = na; i < n.numel(); ++i)
                               detail::accum(pb, i - na, n.adjoint[i]);
                       });
    }
    const std::size_t r = sa[0], c = sa[1], rb = sb[0], cb = sb[1];
    if (axis == 0) {
        std::vector<double> out = a.values();
        out.insert(out.end(), b.values().begin(), b.values().end());
        std::size_t na = a.numel();
        return make_op("concat", {r + rb, c}, std::move(out), {a.handle(), b.handle()},
                       [pa, pb, na](detail::TapeNode& n) {
                           for (std::size_t i = 0; i < na; ++i) detail::accum(pa, i, n.adjoint[i]);
                           for (std::size_t i = na; i < n.numel(); ++i)
                               detail::accum(pb, i - na, n.adjoint[i]);
                       });
    }
    std::vector<double> out(r * (c + cb));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * (c + cb) + j] = a.values()[i * c + j];
        for (std::size_t j = 0; j < cb; ++j) out[i * (c + cb) + c + j] = b.values()[i * cb + j];
    }
    return make_op("concat", {r, c + cb}, std::move(out), {a.handle(), b.handle()},
                   [pa, pb, r, c, cb](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < c; ++j)
                               detail::accum(pa, i * c + j, n.adjoint[i * (c + cb) + j]);
                           for (std::size_t j = 0; j < cb; ++j)
                               detail::accum(pb, i * cb + j, n.adjoint[i * (c + cb) + c + j]);
                       }
                   });
}

/// Slice of a 1-D tensor, half-open range [i0, i1).
inline Tensor slice(const Tensor& a, std::size_t i0, std::size_t i1) {
    if (a.shape().size() != 1 || i0 >= i1 || i1 > a.dim(0))
        throw std::invalid_argument("slice: bad range [" + std::to_string(i0) + "," +
                                    std::to_string(i1) + ") for " + shape_str(a.shape()));
    std::vector<double> out(a.values().begin() + i0, a.values().begin() + i1);
    auto* pa = a.handle().get();
    return make_op("slice", {i1 - i0}, std::move(out), {a.handle()},
                   [pa, i0](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i)
                           detail::accum(pa, i0 + i, n.adjoint[i]);
                   });
}

/// Column slice of a 2-D tensor, half-open range [c0, c1).
inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (a.shape().size() != 2 || c0 >= c1 || c1 > a.dim(1))
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") for " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1), w = c1 - c0;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.values()[i * c + c0 + j];
    auto* pa = a.handle().get();
    return make_op("slice_cols", {r, w}, std::move(out), {a.handle()},
                   [pa, r, c, c0, w](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                               detail::accum(pa, i * c + c0 + j, n.adjoint[i * w + j]);
                   });
}

/// Row slice of a 2-D tensor, half-open range [r0, r1).
inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    if (a.shape().size() != 2 || r0 >= r1 || r1 > a.dim(0))
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") for " + shape_str(a.shape()));
    const std::size_t c = a.dim(1);
    std::vector<double> out(a.values().begin() + r0 * c, a.values().begin() + r1 * c);
    auto* pa = a.handle().get();
    return make_op("slice_rows", {r1 - r0, c}, std::move(out), {a.handle()},
                   [pa, r0, c](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < n.numel(); ++i)
                           detail::accum(pa, r0 * c + i, n.adjoint[i]);
                   });
}

/// Adds a length-c bias vector to every row of an {r,c} matrix.
inline Tensor bias_add(const Tensor& m, const Tensor& b) {
    if (m.shape().size() != 2 || b.shape().size() != 1 || b.dim(0) != m.dim(1))
        throw std::invalid_argument("bias_add: shapes " + shape_str(m.shape()) + " and " +
                                    shape_str(b.shape()) + " do not broadcast");
    const std::size_t r = m.dim(0), c = m.dim(1);
    std::vector<double> out(m.values());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += b.values()[j];
    auto* pm = m.handle().get();
    auto* pb = b.handle().get();
    return make_op("bias_add", m.shape(), std::move(out), {m.handle(), b.handle()},
                   [pm, pb, r, c](detail::TapeNode& n) {
                       for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) {
                               detail::accum(pm, i * c + j, n.adjoint[i * c + j]);
                               detail::accum(pb, j, n.adjoint[i * c + j]);
                           }
                   });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

/// Backpropagates d(loss)/d(tensor) into the grad buffer of every
/// requires-grad tensor reachable from `loss`. Gradients accumulate across
/// calls until zeroed.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw std::runtime_error("backward: loss must be scalar, got shape " +
                                 shape_str(loss.shape()));
    detail::TapeNode* root = loss.handle().get();
    if (!root->requires_grad)
        throw std::runtime_error("backward: loss does not depend on any differentiable tensor");

    // Post-order DFS over requires-grad parents; `order` lists producers first.
    std::vector<detail::TapeNode*> order;
    std::unordered_set<detail::TapeNode*> seen;
    struct Frame {
        detail::TapeNode* n;
        std::size_t next;
    };
    std::vector<Frame> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            detail::TapeNode* p = f.n->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    for (auto* n : order) n->adjoint.assign(n->value.size(), 0.0);
    root->adjoint[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
    for (auto* n : order) {
        if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
        for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->adjoint[i];
        n->adjoint = {};
    }
}

}  // namespace tgphy
