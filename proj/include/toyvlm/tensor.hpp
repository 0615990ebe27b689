#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "toyvlm/errors.hpp"
#include "toyvlm/rng.hpp"

namespace toyvlm {

// Dense row-major tensor with tape-based reverse-mode autodiff.
// Templated on the scalar type: float for training, double for
// finite-difference gradient checks.
//
// A TensorT is a cheap handle onto a shared node. Nodes record their
// parents and a backward closure; backward(loss) runs the tape in
// reverse topological order and accumulates into .grad.

template <class T>
struct NodeT {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated on demand, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::function<void(NodeT<T>&)> backward_fn;

    std::size_t numel() const { return data.size(); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

template <class T>
struct TensorT {
    std::shared_ptr<NodeT<T>> node;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<NodeT<T>> n) : node(std::move(n)) {}

    static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = std::make_shared<NodeT<T>>();
        n->shape = std::move(shape);
        n->data.assign(shape_numel(n->shape), T(0));
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT from_data(std::vector<int> shape, std::vector<T> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw DimensionError("from_data: shape " + shape_str(shape) + " does not match data length " +
                                 std::to_string(data.size()));
        auto n = std::make_shared<NodeT<T>>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT randn(std::vector<int> shape, Rng& rng, double stddev, bool requires_grad = true) {
        auto t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.node->data) v = static_cast<T>(rng.gaussian() * stddev);
        return t;
    }

    const std::vector<int>& shape() const { return node->shape; }
    std::size_t numel() const { return node->numel(); }
    std::vector<T>& data() { return node->data; }
    const std::vector<T>& data() const { return node->data; }
    std::vector<T>& grad() { return node->grad; }
    const std::vector<T>& grad() const { return node->grad; }
    bool requires_grad() const { return node->requires_grad; }

    T item() const {
        if (numel() != 1) throw DimensionError("item: tensor is not scalar, shape " + shape_str(shape()));
        return node->data[0];
    }

    void zero_grad() { node->grad.assign(node->data.size(), T(0)); }

    // Detached copy: same values, no history, fresh node.
    TensorT detach(bool requires_grad = false) const {
        auto n = std::make_shared<NodeT<T>>();
        n->shape = node->shape;
        n->data = node->data;
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }
};

namespace detail {

template <class T>
void check_finite(const std::vector<T>& v, const char* op) {
    for (const T& x : v) {
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError(std::string("non-finite value produced by ") + op);
    }
}

template <class T>
std::shared_ptr<NodeT<T>> make_node(std::vector<int> shape, std::vector<std::shared_ptr<NodeT<T>>> parents) {
    auto n = std::make_shared<NodeT<T>>();
    n->shape = std::move(shape);
    n->data.assign(shape_numel(n->shape), T(0));
    for (auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    return n;
}

// C[m,n] += A[m,k] * B[k,n]; row-major, k-inner accumulation order is fixed
// so results are bit-identical regardless of threading.
template <class T>
void matmul_acc(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 262144)
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B^T where B is [n,k].
template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 262144)
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[m,n] += A^T * B where A is [k,m], B is [k,n].
template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (static_cast<long long>(m) * k * n > 262144)
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = a[static_cast<std::size_t>(p) * m + i];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw DimensionError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    const int m = sa[0], k = sa[1], n = sb[1];
    auto out = detail::make_node<T>({m, n}, {a.node, b.node});
    detail::matmul_acc(a.data().data(), b.data().data(), out->data.data(), m, k, n);
    detail::check_finite(out->data, "matmul");
    if (out->requires_grad) {
        out->backward_fn = [m, k, n](NodeT<T>& o) {
            auto& pa = *o.parents[0];
            auto& pb = *o.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                // dA = dC * B^T
                detail::matmul_nt_acc(o.grad.data(), pb.data.data(), pa.grad.data(), m, n, k);
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                // dB = A^T * dC
                detail::matmul_tn_acc(pa.data.data(), o.grad.data(), pb.grad.data(), k, m, n);
            }
        };
    }
    return TensorT<T>(out);
}

// Elementwise add; also supports adding a 1-D bias whose length equals the
// last dimension of `a` (the only broadcast the engine allows).
template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    const bool same = sa == sb;
    const bool bias = sb.size() == 1 && !sa.empty() && sa.back() == sb[0];
    if (!same && !bias)
        throw DimensionError("add: incompatible shapes " + shape_str(sa) + " + " + shape_str(sb));
    auto out = detail::make_node<T>(sa, {a.node, b.node});
    const std::size_t n = a.numel();
    const std::size_t d = bias ? static_cast<std::size_t>(sb[0]) : n;
    for (std::size_t i = 0; i < n; ++i) out->data[i] = a.data()[i] + b.data()[same ? i : i % d];
    detail::check_finite(out->data, "add");
    if (out->requires_grad) {
        out->backward_fn = [same, d](NodeT<T>& o) {
            auto& pa = *o.parents[0];
            auto& pb = *o.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[same ? i : i % d] += o.grad[i];
            }
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: incompatible shapes " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    auto out = detail::make_node<T>(a.shape(), {a.node, b.node});
    for (std::size_t i = 0; i < a.numel(); ++i) out->data[i] = a.data()[i] * b.data()[i];
    detail::check_finite(out->data, "mul");
    if (out->requires_grad) {
        out->backward_fn = [](NodeT<T>& o) {
            auto& pa = *o.parents[0];
            auto& pb = *o.parents[1];
            if (pa.requires_grad) {
                pa.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pa.grad[i] += o.grad[i] * pb.data[i];
            }
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (std::size_t i = 0; i < o.grad.size(); ++i) pb.grad[i] += o.grad[i] * pa.data[i];
            }
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, double s) {
    auto out = detail::make_node<T>(a.shape(), {a.node});
    for (std::size_t i = 0; i < a.numel(); ++i) out->data[i] = a.data()[i] * static_cast<T>(s);
    detail::check_finite(out->data, "scale");
    if (out->requires_grad) {
        out->backward_fn = [s](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] * static_cast<T>(s);
        };
    }
    return TensorT<T>(out);
}

// Exact GELU: x * Phi(x) with Phi the standard normal CDF.
template <class T>
TensorT<T> gelu(const TensorT<T>& a) {
    auto out = detail::make_node<T>(a.shape(), {a.node});
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double x = static_cast<double>(a.data()[i]);
        out->data[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * inv_sqrt2)));
    }
    detail::check_finite(out->data, "gelu");
    if (out->requires_grad) {
        out->backward_fn = [](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            constexpr double inv_sqrt2 = 0.70710678118654752440;
            constexpr double inv_sqrt2pi = 0.39894228040143267794;
            for (std::size_t i = 0; i < o.grad.size(); ++i) {
                const double x = static_cast<double>(p.data[i]);
                const double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                p.grad[i] += o.grad[i] * static_cast<T>(phi + x * pdf);
            }
        };
    }
    return TensorT<T>(out);
}

// Per-vector normalization over the last dimension, then affine (gain, bias).
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gain, const TensorT<T>& bias) {
    const auto& sx = x.shape();
    if (sx.empty()) throw DimensionError("layer_norm: scalar input");
    const int d = sx.back();
    if (gain.shape() != std::vector<int>{d} || bias.shape() != std::vector<int>{d})
        throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                             shape_str(gain.shape()) + " / " + shape_str(bias.shape()));
    constexpr double eps = 1e-5;
    auto out = detail::make_node<T>(sx, {x.node, gain.node, bias.node});
    const std::size_t rows = x.numel() / static_cast<std::size_t>(d);
    // Cache per-row mean and inverse stddev for backward.
    auto stats = std::make_shared<std::vector<double>>(rows * 2);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xi = x.data().data() + r * d;
        double mean = 0;
        for (int i = 0; i < d; ++i) mean += xi[i];
        mean /= d;
        double var = 0;
        for (int i = 0; i < d; ++i) var += (xi[i] - mean) * (xi[i] - mean);
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * r] = mean;
        (*stats)[2 * r + 1] = rstd;
        T* oi = out->data.data() + r * d;
        for (int i = 0; i < d; ++i)
            oi[i] = static_cast<T>((xi[i] - mean) * rstd) * gain.data()[i] + bias.data()[i];
    }
    detail::check_finite(out->data, "layer_norm");
    if (out->requires_grad) {
        out->backward_fn = [d, rows, stats](NodeT<T>& o) {
            auto& px = *o.parents[0];
            auto& pg = *o.parents[1];
            auto& pb = *o.parents[2];
            if (px.requires_grad) px.ensure_grad();
            if (pg.requires_grad) pg.ensure_grad();
            if (pb.requires_grad) pb.ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double mean = (*stats)[2 * r];
                const double rstd = (*stats)[2 * r + 1];
                const T* xi = px.data.data() + r * d;
                const T* go = o.grad.data() + r * d;
                if (pg.requires_grad || pb.requires_grad) {
                    for (int i = 0; i < d; ++i) {
                        const double xhat = (xi[i] - mean) * rstd;
                        if (pg.requires_grad) pg.grad[i] += go[i] * static_cast<T>(xhat);
                        if (pb.requires_grad) pb.grad[i] += go[i];
                    }
                }
                if (px.requires_grad) {
                    double sum_g = 0, sum_gx = 0;
                    for (int i = 0; i < d; ++i) {
                        const double g = go[i] * pg.data[i];
                        const double xhat = (xi[i] - mean) * rstd;
                        sum_g += g;
                        sum_gx += g * xhat;
                    }
                    for (int i = 0; i < d; ++i) {
                        const double g = go[i] * pg.data[i];
                        const double xhat = (xi[i] - mean) * rstd;
                        px.grad[r * d + i] +=
                            static_cast<T>(rstd * (g - sum_g / d - xhat * sum_gx / d));
                    }
                }
            }
        };
    }
    return TensorT<T>(out);
}

// Mean negative log-likelihood over masked positions, max-subtracted
// log-sum-exp. logits is [n, v].
template <class T>
TensorT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets,
                                 const std::vector<bool>& mask) {
    const auto& s = logits.shape();
    if (s.size() != 2) throw DimensionError("softmax_cross_entropy: logits must be 2-D, got " + shape_str(s));
    const int n = s[0], v = s[1];
    if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n)
        throw DimensionError("softmax_cross_entropy: targets/mask length must equal " + std::to_string(n));
    int active = 0;
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        ++active;
        if (targets[i] < 0 || targets[i] >= v)
            throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                             " out of range for vocab " + std::to_string(v));
    }
    if (active == 0) throw InputError("softmax_cross_entropy: mask selects no positions");

    auto out = detail::make_node<T>({1}, {logits.node});
    // Probabilities are cached for backward.
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * v);
    double total = 0;
    for (int i = 0; i < n; ++i) {
        const T* row = logits.data().data() + static_cast<std::size_t>(i) * v;
        double mx = row[0];
        for (int j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0;
        for (int j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        const double logz = std::log(z) + mx;
        for (int j = 0; j < v; ++j) (*probs)[static_cast<std::size_t>(i) * v + j] = std::exp(row[j] - logz);
        if (mask[i]) total += logz - row[targets[i]];
    }
    out->data[0] = static_cast<T>(total / active);
    detail::check_finite(out->data, "softmax_cross_entropy");
    if (out->requires_grad) {
        auto tg = targets;
        auto mk = mask;
        out->backward_fn = [n, v, active, probs, tg, mk](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            const T g = o.grad[0] / static_cast<T>(active);
            for (int i = 0; i < n; ++i) {
                if (!mk[i]) continue;
                T* grow = p.grad.data() + static_cast<std::size_t>(i) * v;
                const double* prow = probs->data() + static_cast<std::size_t>(i) * v;
                for (int j = 0; j < v; ++j) grow[j] += g * static_cast<T>(prow[j]);
                grow[tg[i]] -= g;
            }
        };
    }
    return TensorT<T>(out);
}

// Cross-correlation, no padding, square stride. x is [c_in,h,w],
// kernel [c_out,c_in,kh,kw], optional bias [c_out].
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernel, int stride,
                  const TensorT<T>* bias = nullptr) {
    const auto& sx = x.shape();
    const auto& sk = kernel.shape();
    if (sx.size() != 3 || sk.size() != 4 || sx[0] != sk[1])
        throw DimensionError("conv2d: expected x[c_in,h,w], kernel[c_out,c_in,kh,kw], got " + shape_str(sx) +
                             " / " + shape_str(sk));
    const int cin = sx[0], h = sx[1], w = sx[2];
    const int cout = sk[0], kh = sk[2], kw = sk[3];
    if (stride <= 0 || (h - kh) % stride != 0 || (w - kw) % stride != 0 || h < kh || w < kw)
        throw ConfigError("conv2d: geometry h=" + std::to_string(h) + " w=" + std::to_string(w) +
                          " kh=" + std::to_string(kh) + " kw=" + std::to_string(kw) +
                          " stride=" + std::to_string(stride) + " gives non-integral output");
    const int oh = (h - kh) / stride + 1;
    const int ow = (w - kw) / stride + 1;
    if (bias && bias->shape() != std::vector<int>{cout})
        throw DimensionError("conv2d: bias must be [" + std::to_string(cout) + "]");

    std::vector<std::shared_ptr<NodeT<T>>> parents{x.node, kernel.node};
    if (bias) parents.push_back(bias->node);
    auto out = detail::make_node<T>({cout, oh, ow}, std::move(parents));
    const auto xat = [&](int c, int i, int j) {
        return x.data()[(static_cast<std::size_t>(c) * h + i) * w + j];
    };
#pragma omp parallel for schedule(static) if (static_cast<long long>(cout) * oh * ow * cin * kh * kw > 262144)
    for (int co = 0; co < cout; ++co) {
        for (int oi = 0; oi < oh; ++oi)
            for (int oj = 0; oj < ow; ++oj) {
                double acc = bias ? static_cast<double>(bias->data()[co]) : 0.0;
                for (int ci = 0; ci < cin; ++ci)
                    for (int ki = 0; ki < kh; ++ki)
                        for (int kj = 0; kj < kw; ++kj)
                            acc += xat(ci, oi * stride + ki, oj * stride + kj) *
                                   kernel.data()[((static_cast<std::size_t>(co) * cin + ci) * kh + ki) * kw + kj];
                out->data[(static_cast<std::size_t>(co) * oh + oi) * ow + oj] = static_cast<T>(acc);
            }
    }
    detail::check_finite(out->data, "conv2d");
    if (out->requires_grad) {
        const bool has_bias = bias != nullptr;
        out->backward_fn = [cin, h, w, cout, kh, kw, oh, ow, stride, has_bias](NodeT<T>& o) {
            auto& px = *o.parents[0];
            auto& pk = *o.parents[1];
            if (px.requires_grad) px.ensure_grad();
            if (pk.requires_grad) pk.ensure_grad();
            NodeT<T>* pb = has_bias ? o.parents[2].get() : nullptr;
            if (pb && pb->requires_grad) pb->ensure_grad();
            for (int co = 0; co < cout; ++co)
                for (int oi = 0; oi < oh; ++oi)
                    for (int oj = 0; oj < ow; ++oj) {
                        const T g = o.grad[(static_cast<std::size_t>(co) * oh + oi) * ow + oj];
                        if (g == T(0)) continue;
                        if (pb && pb->requires_grad) pb->grad[co] += g;
                        for (int ci = 0; ci < cin; ++ci)
                            for (int ki = 0; ki < kh; ++ki)
                                for (int kj = 0; kj < kw; ++kj) {
                                    const std::size_t xi =
                                        (static_cast<std::size_t>(ci) * h + oi * stride + ki) * w + oj * stride + kj;
                                    const std::size_t kidx =
                                        ((static_cast<std::size_t>(co) * cin + ci) * kh + ki) * kw + kj;
                                    if (pk.requires_grad) pk.grad[kidx] += g * px.data[xi];
                                    if (px.requires_grad) px.grad[xi] += g * pk.data[kidx];
                                }
                    }
        };
    }
    return TensorT<T>(out);
}

// Row softmax over a [n,m] matrix. When causal, row i is normalized over
// columns <= i and later columns are exactly zero (requires n == m).
template <class T>
TensorT<T> softmax_rows(const TensorT<T>& a, bool causal = false) {
    const auto& s = a.shape();
    if (s.size() != 2) throw DimensionError("softmax_rows: expected 2-D, got " + shape_str(s));
    const int n = s[0], m = s[1];
    if (causal && n != m) throw DimensionError("softmax_rows: causal requires square input, got " + shape_str(s));
    auto out = detail::make_node<T>(s, {a.node});
    for (int i = 0; i < n; ++i) {
        const int lim = causal ? i + 1 : m;
        const T* row = a.data().data() + static_cast<std::size_t>(i) * m;
        T* orow = out->data.data() + static_cast<std::size_t>(i) * m;
        double mx = row[0];
        for (int j = 1; j < lim; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double z = 0;
        for (int j = 0; j < lim; ++j) z += std::exp(row[j] - mx);
        for (int j = 0; j < lim; ++j) orow[j] = static_cast<T>(std::exp(row[j] - mx) / z);
        for (int j = lim; j < m; ++j) orow[j] = T(0);
    }
    detail::check_finite(out->data, "softmax_rows");
    if (out->requires_grad) {
        out->backward_fn = [n, m, causal](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (int i = 0; i < n; ++i) {
                const int lim = causal ? i + 1 : m;
                const T* y = o.data.data() + static_cast<std::size_t>(i) * m;
                const T* go = o.grad.data() + static_cast<std::size_t>(i) * m;
                double dot = 0;
                for (int j = 0; j < lim; ++j) dot += static_cast<double>(go[j]) * y[j];
                T* gp = p.grad.data() + static_cast<std::size_t>(i) * m;
                for (int j = 0; j < lim; ++j) gp[j] += static_cast<T>(y[j] * (go[j] - dot));
            }
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> transpose(const TensorT<T>& a) {
    const auto& s = a.shape();
    if (s.size() != 2) throw DimensionError("transpose: expected 2-D, got " + shape_str(s));
    const int n = s[0], m = s[1];
    auto out = detail::make_node<T>({m, n}, {a.node});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out->data[static_cast<std::size_t>(j) * n + i] = a.data()[static_cast<std::size_t>(i) * m + j];
    if (out->requires_grad) {
        out->backward_fn = [n, m](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    p.grad[static_cast<std::size_t>(i) * m + j] += o.grad[static_cast<std::size_t>(j) * n + i];
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> slice_cols(const TensorT<T>& a, int offset, int len) {
    const auto& s = a.shape();
    if (s.size() != 2) throw DimensionError("slice_cols: expected 2-D, got " + shape_str(s));
    const int n = s[0], m = s[1];
    if (offset < 0 || len <= 0 || offset + len > m)
        throw DimensionError("slice_cols: range [" + std::to_string(offset) + "," +
                             std::to_string(offset + len) + ") out of " + std::to_string(m));
    auto out = detail::make_node<T>({n, len}, {a.node});
    for (int i = 0; i < n; ++i)
        std::copy_n(a.data().data() + static_cast<std::size_t>(i) * m + offset, len,
                    out->data.data() + static_cast<std::size_t>(i) * len);
    if (out->requires_grad) {
        out->backward_fn = [n, m, offset, len](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < len; ++j)
                    p.grad[static_cast<std::size_t>(i) * m + offset + j] +=
                        o.grad[static_cast<std::size_t>(i) * len + j];
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> concat_cols(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: empty input");
    const int n = parts[0].shape()[0];
    int total = 0;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::vector<int> widths;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != 2 || s[0] != n)
            throw DimensionError("concat_cols: row mismatch, expected " + std::to_string(n) + " got " + shape_str(s));
        total += s[1];
        widths.push_back(s[1]);
        parents.push_back(p.node);
    }
    auto out = detail::make_node<T>({n, total}, std::move(parents));
    for (int i = 0; i < n; ++i) {
        int off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            std::copy_n(parts[k].data().data() + static_cast<std::size_t>(i) * widths[k], widths[k],
                        out->data.data() + static_cast<std::size_t>(i) * total + off);
            off += widths[k];
        }
    }
    if (out->requires_grad) {
        out->backward_fn = [n, total, widths](NodeT<T>& o) {
            for (int i = 0; i < n; ++i) {
                int off = 0;
                for (std::size_t k = 0; k < widths.size(); ++k) {
                    auto& p = *o.parents[k];
                    if (p.requires_grad) {
                        p.ensure_grad();
                        for (int j = 0; j < widths[k]; ++j)
                            p.grad[static_cast<std::size_t>(i) * widths[k] + j] +=
                                o.grad[static_cast<std::size_t>(i) * total + off + j];
                    }
                    off += widths[k];
                }
            }
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> concat_rows(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: empty input");
    const int m = parts[0].shape()[1];
    int total = 0;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::vector<int> heights;
    for (const auto& p : parts) {
        const auto& s = p.shape();
        if (s.size() != 2 || s[1] != m)
            throw DimensionError("concat_rows: col mismatch, expected " + std::to_string(m) + " got " + shape_str(s));
        total += s[0];
        heights.push_back(s[0]);
        parents.push_back(p.node);
    }
    auto out = detail::make_node<T>({total, m}, std::move(parents));
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy_n(p.data().data(), p.numel(), out->data.data() + off);
        off += p.numel();
    }
    if (out->requires_grad) {
        out->backward_fn = [heights, m](NodeT<T>& o) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < heights.size(); ++k) {
                auto& p = *o.parents[k];
                const std::size_t cnt = static_cast<std::size_t>(heights[k]) * m;
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (std::size_t i = 0; i < cnt; ++i) p.grad[i] += o.grad[off + i];
                }
                off += cnt;
            }
        };
    }
    return TensorT<T>(out);
}

// Gather rows from an embedding table; backward scatter-adds.
template <class T>
TensorT<T> embedding_rows(const TensorT<T>& table, const std::vector<int>& ids) {
    const auto& s = table.shape();
    if (s.size() != 2) throw DimensionError("embedding_rows: table must be 2-D, got " + shape_str(s));
    const int v = s[0], d = s[1];
    for (int id : ids)
        if (id < 0 || id >= v)
            throw IndexError("embedding_rows: id " + std::to_string(id) + " out of range " + std::to_string(v));
    auto out = detail::make_node<T>({static_cast<int>(ids.size()), d}, {table.node});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * d, d, out->data.data() + i * d);
    if (out->requires_grad) {
        auto idv = ids;
        out->backward_fn = [idv, d](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < idv.size(); ++i)
                for (int j = 0; j < d; ++j)
                    p.grad[static_cast<std::size_t>(idv[i]) * d + j] += o.grad[i * d + j];
        };
    }
    return TensorT<T>(out);
}

// Reinterpret shape, same element order.
template <class T>
TensorT<T> reshape(const TensorT<T>& a, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
    auto out = detail::make_node<T>(std::move(new_shape), {a.node});
    out->data = a.data();
    if (out->requires_grad) {
        out->backward_fn = [](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
        };
    }
    return TensorT<T>(out);
}

// [c,h,w] feature map to [h*w, c] token matrix, row-major over the grid.
template <class T>
TensorT<T> chw_to_tokens(const TensorT<T>& x) {
    const auto& s = x.shape();
    if (s.size() != 3) throw DimensionError("chw_to_tokens: expected 3-D, got " + shape_str(s));
    const int c = s[0], h = s[1], w = s[2];
    auto out = detail::make_node<T>({h * w, c}, {x.node});
    for (int ci = 0; ci < c; ++ci)
        for (int p = 0; p < h * w; ++p)
            out->data[static_cast<std::size_t>(p) * c + ci] = x.data()[static_cast<std::size_t>(ci) * h * w + p];
    if (out->requires_grad) {
        out->backward_fn = [c, h, w](NodeT<T>& o) {
            auto& px = *o.parents[0];
            if (!px.requires_grad) return;
            px.ensure_grad();
            for (int ci = 0; ci < c; ++ci)
                for (int p = 0; p < h * w; ++p)
                    px.grad[static_cast<std::size_t>(ci) * h * w + p] += o.grad[static_cast<std::size_t>(p) * c + ci];
        };
    }
    return TensorT<T>(out);
}

template <class T>
TensorT<T> sum(const TensorT<T>& a) {
    auto out = detail::make_node<T>({1}, {a.node});
    double acc = 0;
    for (const T& v : a.data()) acc += v;
    out->data[0] = static_cast<T>(acc);
    detail::check_finite(out->data, "sum");
    if (out->requires_grad) {
        out->backward_fn = [](NodeT<T>& o) {
            auto& p = *o.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += o.grad[0];
        };
    }
    return TensorT<T>(out);
}

// Reverse-mode sweep from a scalar loss. Grads accumulate across calls
// until zeroed.
template <class T>
void backward(const TensorT<T>& loss) {
    if (loss.numel() != 1)
        throw DimensionError("backward: loss must be scalar, shape " + shape_str(loss.shape()));
    // Iterative post-order topological sort (graphs can be deep).
    std::vector<NodeT<T>*> order;
    std::unordered_set<NodeT<T>*> seen;
    std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node.get(), 0);
    seen.insert(loss.node.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            NodeT<T>* p = node->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node->ensure_grad();
    loss.node->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT<T>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // grads of leaves must be finite too
    for (NodeT<T>* n : order)
        if (!n->grad.empty()) detail::check_finite(n->grad, "backward");
}

using Tensor = TensorT<float>;

}  // namespace toyvlm
