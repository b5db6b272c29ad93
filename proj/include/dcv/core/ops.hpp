#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <type_traits>
#include <vector>

#include "dcv/core/graph.hpp"
#include "dcv/core/parallel.hpp"
#include "dcv/core/tensor.hpp"

namespace dcv {

namespace detail {

// ---------------------------------------------------------------------------
// Broadcasting (trailing-axis rules: ranks align right, extent-1 stretches)
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t d = 0; d < r; ++d) {
        const std::int64_t ea = d < r - a.size() ? 1 : a[d - (r - a.size())];
        const std::int64_t eb = d < r - b.size() ? 1 : b[d - (r - b.size())];
        if (ea == eb || eb == 1) {
            out[d] = ea;
        } else if (ea == 1) {
            out[d] = eb;
        } else {
            fail("shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
        }
    }
    return out;
}

// Strides of `in` aligned to the rank of `out`, 0 on stretched axes.
inline std::vector<std::int64_t> aligned_strides(const Shape& in, const Shape& out) {
    const std::int64_t r = static_cast<std::int64_t>(out.size());
    const std::int64_t ri = static_cast<std::int64_t>(in.size());
    if (ri > r) fail("cannot align " + shape_str(in) + " to lower-rank " + shape_str(out));
    const auto own = strides_of(in);
    std::vector<std::int64_t> s(static_cast<std::size_t>(r), 0);
    for (std::int64_t d = 0; d < ri; ++d) {
        const std::int64_t od = r - ri + d;
        if (in[static_cast<std::size_t>(d)] == out[static_cast<std::size_t>(od)]) {
            s[static_cast<std::size_t>(od)] = own[static_cast<std::size_t>(d)];
        } else if (in[static_cast<std::size_t>(d)] == 1) {
            s[static_cast<std::size_t>(od)] = 0;
        } else {
            fail("shapes not broadcastable: " + shape_str(in) + " vs " + shape_str(out));
        }
    }
    return s;
}

// Row-major odometer walk over `shape`, tracking offsets for each stride set.
// body(lin, offs[0..K)) is called once per element.
template <std::size_t K, typename Body>
void odometer_walk(const Shape& shape, const std::array<const std::vector<std::int64_t>*, K>& strides,
                   Body&& body) {
    const std::int64_t n = numel_of(shape);
    const std::int64_t rank = static_cast<std::int64_t>(shape.size());
    std::array<std::int64_t, K> off{};
    off.fill(0);
    if (rank == 0) {
        if (n > 0) body(std::int64_t(0), off);
        return;
    }
    std::vector<std::int64_t> idx(static_cast<std::size_t>(rank), 0);
    for (std::int64_t lin = 0; lin < n; ++lin) {
        body(lin, off);
        for (std::int64_t d = rank - 1; d >= 0; --d) {
            ++idx[static_cast<std::size_t>(d)];
            for (std::size_t j = 0; j < K; ++j) off[j] += (*strides[j])[static_cast<std::size_t>(d)];
            if (idx[static_cast<std::size_t>(d)] < shape[static_cast<std::size_t>(d)]) break;
            for (std::size_t j = 0; j < K; ++j)
                off[j] -= (*strides[j])[static_cast<std::size_t>(d)] * shape[static_cast<std::size_t>(d)];
            idx[static_cast<std::size_t>(d)] = 0;
        }
    }
}

// Elementwise map over the broadcast of two tensors.
template <typename T, typename F>
Tensor<T> bcast_map2(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
    if (a.shape() == b.shape()) {
        Tensor<T> out = Tensor<T>::zeros(a.shape());
        const T* pa = a.data();
        const T* pb = b.data();
        T* po = out.data();
        parallel_for(a.numel(), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) po[i] = f(pa[i], pb[i]);
        });
        return out;
    }
    if (b.numel() == 1) {
        Tensor<T> out = Tensor<T>::zeros(broadcast_shape(a.shape(), b.shape()));
        const T* pa = a.data();
        const T bv = b.data()[0];
        T* po = out.data();
        parallel_for(a.numel(), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) po[i] = f(pa[i], bv);
        });
        return out;
    }
    if (a.numel() == 1) {
        Tensor<T> out = Tensor<T>::zeros(broadcast_shape(a.shape(), b.shape()));
        const T av = a.data()[0];
        const T* pb = b.data();
        T* po = out.data();
        parallel_for(b.numel(), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) po[i] = f(av, pb[i]);
        });
        return out;
    }
    const Shape os = broadcast_shape(a.shape(), b.shape());
    const auto sa = aligned_strides(a.shape(), os);
    const auto sb = aligned_strides(b.shape(), os);
    Tensor<T> out = Tensor<T>::zeros(os);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    odometer_walk<2>(os, {&sa, &sb}, [&](std::int64_t lin, const std::array<std::int64_t, 2>& off) {
        po[lin] = f(pa[off[0]], pb[off[1]]);
    });
    return out;
}

// Backward of a broadcast binary: accumulates contrib(gout, a, b) into a fresh
// tensor of shape `to` (the operand's original shape).
template <typename T, typename F>
Tensor<T> bcast_grad(const Tensor<T>& gout, const Tensor<T>& a, const Tensor<T>& b, const Shape& to,
                     F&& contrib) {
    Tensor<T> gin = Tensor<T>::zeros(to);
    const Shape& os = gout.shape();
    const T* pg = gout.data();
    const T* pa = a.data();
    const T* pb = b.data();
    T* pi = gin.data();
    if (a.shape() == os && b.shape() == os && to == os) {
        parallel_for(gout.numel(), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) pi[i] = contrib(pg[i], pa[i], pb[i]);
        });
        return gin;
    }
    const auto si = aligned_strides(to, os);
    const auto sa = aligned_strides(a.shape(), os);
    const auto sb = aligned_strides(b.shape(), os);
    odometer_walk<3>(os, {&si, &sa, &sb}, [&](std::int64_t lin, const std::array<std::int64_t, 3>& off) {
        pi[off[0]] += contrib(pg[lin], pa[off[1]], pb[off[2]]);
    });
    return gin;
}

// Sums `g` down to shape `to` (inverse of broadcast stretching).
template <typename T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Shape& to) {
    if (g.shape() == to) return g;
    Tensor<T> out = Tensor<T>::zeros(to);
    const auto si = aligned_strides(to, g.shape());
    const T* src = g.data();
    T* dst = out.data();
    odometer_walk<1>(g.shape(), {&si}, [&](std::int64_t lin, const std::array<std::int64_t, 1>& off) {
        dst[off[0]] += src[lin];
    });
    return out;
}

// Detached elementwise map, used to build selection masks and sector indices.
template <typename T, typename F>
Tensor<T> vmap(const Tensor<T>& a, F f) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i]);
    return out;
}

template <typename T>
Tensor<T> ge_mask(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) fail("ge_mask wants equal shapes");
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] >= pb[i] ? T(1) : T(0);
    return out;
}

// Records a node if any input is on a graph; returns the (possibly attached) value.
template <typename T>
Tensor<T> record_op(Tensor<T> value, std::initializer_list<const Tensor<T>*> ins,
                    typename Graph<T>::BackwardFn fn) {
    Graph<T>* g = graph_of<T>(ins);
    if (!g) return value;
    std::vector<int> parents;
    parents.reserve(ins.size());
    for (const Tensor<T>* t : ins) parents.push_back(node_or_negative(*t));
    const int node = g->record(value.shape(), std::move(parents), std::move(fn));
    value.attach(g, node, g->epoch());
    return value;
}

inline std::vector<std::int64_t> normalize_axes(std::vector<std::int64_t> axes, std::int64_t rank) {
    for (auto& ax : axes) {
        if (ax < 0) ax += rank;
        if (ax < 0 || ax >= rank) fail("axis out of range for rank " + std::to_string(rank));
    }
    std::sort(axes.begin(), axes.end());
    if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) fail("duplicate reduction axis");
    return axes;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binaries
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename Fwd, typename GradA, typename GradB>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, GradA da, GradB db) {
    Tensor<T> out = bcast_map2(a, b, fwd);
    const int na = node_or_negative(a);
    const int nb = node_or_negative(b);
    return record_op<T>(std::move(out), {&a, &b}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        if (na >= 0) sink.add(na, bcast_grad(g, a, b, a.shape(), da));
        if (nb >= 0) sink.add(nb, bcast_grad(g, a, b, b.shape(), db));
    });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x + y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return g; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x - y; }, [](T g, T, T) { return g; }, [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x * y; }, [](T g, T, T y) { return g * y; },
        [](T g, T x, T) { return g * x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x / y; }, [](T g, T, T y) { return g / y; },
        [](T g, T x, T y) { return -g * x / (y * y); });
}

// Elementwise power. d/dx uses x^(y-1); d/dy is x^y log x, taken as 0 when x <= 0.
template <typename T>
Tensor<T> pow(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return std::pow(x, y); },
        [](T g, T x, T y) { return g * y * std::pow(x, y - T(1)); },
        [](T g, T x, T y) { return x > T(0) ? g * std::pow(x, y) * std::log(x) : T(0); });
}

template <typename T>
Tensor<T> atan2(const Tensor<T>& y, const Tensor<T>& x) {
    return detail::binary_op(
        y, x, [](T yy, T xx) { return std::atan2(yy, xx); },
        [](T g, T yy, T xx) {
            const T d = xx * xx + yy * yy;
            return d > T(0) ? g * xx / d : T(0);
        },
        [](T g, T yy, T xx) {
            const T d = xx * xx + yy * yy;
            return d > T(0) ? -g * yy / d : T(0);
        });
}

// Ties route the gradient to the first argument.
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x >= y ? x : y; },
        [](T g, T x, T y) { return x >= y ? g : T(0); }, [](T g, T x, T y) { return x >= y ? T(0) : g; });
}

template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x <= y ? x : y; },
        [](T g, T x, T y) { return x <= y ? g : T(0); }, [](T g, T x, T y) { return x <= y ? T(0) : g; });
}

// Scalar conveniences. The scalar slot is non-deduced so integer and double
// literals convert to T.
template <typename T> using ScalarOf = std::type_identity_t<T>;

template <typename T> Tensor<T> add(const Tensor<T>& a, ScalarOf<T> s) { return add(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> add(ScalarOf<T> s, const Tensor<T>& a) { return add(Tensor<T>::scalar(s), a); }
template <typename T> Tensor<T> sub(const Tensor<T>& a, ScalarOf<T> s) { return sub(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> sub(ScalarOf<T> s, const Tensor<T>& a) { return sub(Tensor<T>::scalar(s), a); }
template <typename T> Tensor<T> mul(const Tensor<T>& a, ScalarOf<T> s) { return mul(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> mul(ScalarOf<T> s, const Tensor<T>& a) { return mul(Tensor<T>::scalar(s), a); }
template <typename T> Tensor<T> div(const Tensor<T>& a, ScalarOf<T> s) { return div(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> div(ScalarOf<T> s, const Tensor<T>& a) { return div(Tensor<T>::scalar(s), a); }
template <typename T> Tensor<T> pow(const Tensor<T>& a, ScalarOf<T> s) { return pow(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> maximum(const Tensor<T>& a, ScalarOf<T> s) { return maximum(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> minimum(const Tensor<T>& a, ScalarOf<T> s) { return minimum(a, Tensor<T>::scalar(s)); }

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, ScalarOf<T> s) { return add(a, s); }
template <typename T> Tensor<T> operator+(ScalarOf<T> s, const Tensor<T>& a) { return add(s, a); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, ScalarOf<T> s) { return sub(a, s); }
template <typename T> Tensor<T> operator-(ScalarOf<T> s, const Tensor<T>& a) { return sub(s, a); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, ScalarOf<T> s) { return mul(a, s); }
template <typename T> Tensor<T> operator*(ScalarOf<T> s, const Tensor<T>& a) { return mul(s, a); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, ScalarOf<T> s) { return div(a, s); }
template <typename T> Tensor<T> operator/(ScalarOf<T> s, const Tensor<T>& a) { return div(s, a); }

// ---------------------------------------------------------------------------
// Elementwise unaries
// ---------------------------------------------------------------------------

namespace detail {

// df(g, x, y) where y is the forward output.
template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& a, Fwd fwd, Bwd df) {
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    parallel_for(a.numel(), [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t i = i0; i < i1; ++i) po[i] = fwd(pa[i]);
    });
    const int na = node_or_negative(a);
    if (na < 0) return out;
    Tensor<T> saved_out = out;
    return record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(a.shape());
        const T* pg = g.data();
        const T* px = a.data();
        const T* py = saved_out.data();
        T* pi = gin.data();
        parallel_for(a.numel(), [&](std::int64_t i0, std::int64_t i1) {
            for (std::int64_t i = i0; i < i1; ++i) pi[i] = df(pg[i], px[i], py[i]);
        });
        sink.add(na, std::move(gin));
    });
}

}  // namespace detail

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return -x; }, [](T g, T, T) { return -g; });
}

template <typename T>
Tensor<T> operator-(const Tensor<T>& a) {
    return neg(a);
}

// Subgradient at 0 is 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return std::abs(x); },
        [](T g, T x, T) { return x > T(0) ? g : (x < T(0) ? -g : T(0)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return std::exp(x); }, [](T g, T, T y) { return g * y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return std::log(x); }, [](T g, T x, T) { return g / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return std::sqrt(x); }, [](T g, T, T y) { return g / (T(2) * y); });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return std::sin(x); }, [](T g, T x, T) { return g * std::cos(x); });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return std::cos(x); }, [](T g, T x, T) { return -g * std::sin(x); });
}

// log(1 + e^x), computed to avoid overflow for large |x|.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](T g, T x, T) { return g / (T(1) + std::exp(-x)); });
}

// Gradient passes wherever lo <= x <= hi, including the boundary values.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, ScalarOf<T> lo, ScalarOf<T> hi = std::numeric_limits<T>::infinity()) {
    return detail::unary_op(
        a, [=](T x) { return std::min(std::max(x, lo), hi); },
        [=](T g, T x, T) { return (x >= lo && x <= hi) ? g : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return detail::unary_op(
        a, [](T x) { return x * x; }, [](T g, T x, T) { return T(2) * g * x; });
}

// Same values, no tape attachment.
template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    return a.detached();
}

// cond, a, b broadcast together; nonzero cond selects a. No gradient to cond.
template <typename T>
Tensor<T> where(const Tensor<T>& cond, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape os = detail::broadcast_shape(detail::broadcast_shape(cond.shape(), a.shape()), b.shape());
    const auto sc = detail::aligned_strides(cond.shape(), os);
    const auto sa = detail::aligned_strides(a.shape(), os);
    const auto sb = detail::aligned_strides(b.shape(), os);
    Tensor<T> out = Tensor<T>::zeros(os);
    const T* pc = cond.data();
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    detail::odometer_walk<3>(os, {&sc, &sa, &sb}, [&](std::int64_t lin, const std::array<std::int64_t, 3>& off) {
        po[lin] = pc[off[0]] != T(0) ? pa[off[1]] : pb[off[2]];
    });
    const int na = detail::node_or_negative(a);
    const int nb = detail::node_or_negative(b);
    return detail::record_op<T>(std::move(out), {&a, &b}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        if (na >= 0) {
            Tensor<T> ga = Tensor<T>::zeros(a.shape());
            T* pi = ga.data();
            const T* pg = g.data();
            const T* pcv = cond.data();
            detail::odometer_walk<2>(os, {&sc, &sa},
                                     [&](std::int64_t lin, const std::array<std::int64_t, 2>& off) {
                                         if (pcv[off[0]] != T(0)) pi[off[1]] += pg[lin];
                                     });
            sink.add(na, std::move(ga));
        }
        if (nb >= 0) {
            Tensor<T> gb = Tensor<T>::zeros(b.shape());
            T* pi = gb.data();
            const T* pg = g.data();
            const T* pcv = cond.data();
            detail::odometer_walk<2>(os, {&sc, &sb},
                                     [&](std::int64_t lin, const std::array<std::int64_t, 2>& off) {
                                         if (pcv[off[0]] == T(0)) pi[off[1]] += pg[lin];
                                     });
            sink.add(nb, std::move(gb));
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& in, const std::vector<std::int64_t>& axes, bool keepdim) {
    Shape out;
    std::size_t j = 0;
    for (std::int64_t d = 0; d < static_cast<std::int64_t>(in.size()); ++d) {
        const bool red = j < axes.size() && axes[j] == d;
        if (red) {
            ++j;
            if (keepdim) out.push_back(1);
        } else {
            out.push_back(in[static_cast<std::size_t>(d)]);
        }
    }
    return out;
}

// Per-input-axis stride into the reduced output (0 on reduced axes).
inline std::vector<std::int64_t> reduce_out_strides(const Shape& in, const std::vector<std::int64_t>& axes,
                                                    const Shape& out_keep) {
    // out_keep is the keepdim variant of the output shape.
    std::vector<std::int64_t> s = strides_of(out_keep);
    std::size_t j = 0;
    for (std::int64_t d = 0; d < static_cast<std::int64_t>(in.size()); ++d) {
        if (j < axes.size() && axes[j] == d) {
            s[static_cast<std::size_t>(d)] = 0;
            ++j;
        }
    }
    return s;
}

// Deterministic full sum: fixed 4096-element chunks, partials combined in order,
// so the result is independent of the thread count.
template <typename T>
T sum_all_value(const T* p, std::int64_t n) {
    constexpr std::int64_t kChunk = 4096;
    const std::int64_t nchunks = (n + kChunk - 1) / kChunk;
    if (nchunks <= 1) {
        T acc = T(0);
        for (std::int64_t i = 0; i < n; ++i) acc += p[i];
        return acc;
    }
    std::vector<T> partial(static_cast<std::size_t>(nchunks), T(0));
    parallel_for(nchunks, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const std::int64_t i0 = c * kChunk;
            const std::int64_t i1 = std::min(n, i0 + kChunk);
            T acc = T(0);
            for (std::int64_t i = i0; i < i1; ++i) acc += p[i];
            partial[static_cast<std::size_t>(c)] = acc;
        }
    }, 1);
    T acc = T(0);
    for (std::int64_t c = 0; c < nchunks; ++c) acc += partial[static_cast<std::size_t>(c)];
    return acc;
}

}  // namespace detail

template <typename T>
Tensor<T> sum(const Tensor<T>& a, std::vector<std::int64_t> axes, bool keepdim = false) {
    const std::int64_t rank = a.rank();
    if (axes.empty()) for (std::int64_t d = 0; d < rank; ++d) axes.push_back(d);
    axes = detail::normalize_axes(std::move(axes), rank);
    const Shape out_shape = detail::reduced_shape(a.shape(), axes, keepdim);
    const Shape out_keep = detail::reduced_shape(a.shape(), axes, true);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* pa = a.data();
    T* po = out.data();
    if (axes.size() == static_cast<std::size_t>(rank)) {
        po[0] = detail::sum_all_value(pa, a.numel());
    } else {
        const auto so = detail::reduce_out_strides(a.shape(), axes, out_keep);
        detail::odometer_walk<1>(a.shape(), {&so}, [&](std::int64_t lin, const std::array<std::int64_t, 1>& off) {
            po[off[0]] += pa[lin];
        });
    }
    const int na = detail::node_or_negative(a);
    if (na < 0) return out;
    const Shape in_shape = a.shape();
    return detail::record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(in_shape);
        const auto so = detail::reduce_out_strides(in_shape, axes, out_keep);
        const T* pg = g.data();
        T* pi = gin.data();
        detail::odometer_walk<1>(in_shape, {&so}, [&](std::int64_t lin, const std::array<std::int64_t, 1>& off) {
            pi[lin] = pg[off[0]];
        });
        sink.add(na, std::move(gin));
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a, std::vector<std::int64_t> axes, bool keepdim = false) {
    const std::int64_t rank = a.rank();
    std::vector<std::int64_t> ax = axes;
    if (ax.empty()) for (std::int64_t d = 0; d < rank; ++d) ax.push_back(d);
    ax = detail::normalize_axes(std::move(ax), rank);
    std::int64_t cnt = 1;
    for (auto d : ax) cnt *= a.dim(d);
    return mul(sum(a, std::move(ax), keepdim), T(1) / static_cast<T>(cnt));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    return sum(a, std::vector<std::int64_t>{});
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return mean(a, std::vector<std::int64_t>{});
}

namespace detail {

// Shared implementation for max/min reductions; ties keep the first element in
// row-major scan order.
template <typename T, bool kMax>
Tensor<T> extremum_reduce(const Tensor<T>& a, std::vector<std::int64_t> axes, bool keepdim) {
    const std::int64_t rank = a.rank();
    if (axes.empty()) for (std::int64_t d = 0; d < rank; ++d) axes.push_back(d);
    axes = normalize_axes(std::move(axes), rank);
    const Shape out_shape = reduced_shape(a.shape(), axes, keepdim);
    const Shape out_keep = reduced_shape(a.shape(), axes, true);
    Tensor<T> out = Tensor<T>::full(out_shape, kMax ? -std::numeric_limits<T>::infinity()
                                                    : std::numeric_limits<T>::infinity());
    auto arg = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()),
                                                           std::int64_t(-1));
    const auto so = reduce_out_strides(a.shape(), axes, out_keep);
    const T* pa = a.data();
    T* po = out.data();
    odometer_walk<1>(a.shape(), {&so}, [&](std::int64_t lin, const std::array<std::int64_t, 1>& off) {
        const bool better = kMax ? (pa[lin] > po[off[0]]) : (pa[lin] < po[off[0]]);
        if (better || (*arg)[static_cast<std::size_t>(off[0])] < 0) {
            po[off[0]] = pa[lin];
            (*arg)[static_cast<std::size_t>(off[0])] = lin;
        }
    });
    const int na = node_or_negative(a);
    if (na < 0) return out;
    const Shape in_shape = a.shape();
    return record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(in_shape);
        const T* pg = g.data();
        T* pi = gin.data();
        for (std::int64_t o = 0; o < g.numel(); ++o) {
            const std::int64_t src = (*arg)[static_cast<std::size_t>(o)];
            if (src >= 0) pi[src] += pg[o];
        }
        sink.add(na, std::move(gin));
    });
}

}  // namespace detail

template <typename T>
Tensor<T> reduce_max(const Tensor<T>& a, std::vector<std::int64_t> axes = {}, bool keepdim = false) {
    return detail::extremum_reduce<T, true>(a, std::move(axes), keepdim);
}

template <typename T>
Tensor<T> reduce_min(const Tensor<T>& a, std::vector<std::int64_t> axes = {}, bool keepdim = false) {
    return detail::extremum_reduce<T, false>(a, std::move(axes), keepdim);
}

// ---------------------------------------------------------------------------
// Movement
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    std::int64_t known = 1;
    std::int64_t infer = -1;
    for (std::int64_t d = 0; d < static_cast<std::int64_t>(shape.size()); ++d) {
        if (shape[static_cast<std::size_t>(d)] == -1) {
            if (infer >= 0) detail::fail("reshape allows at most one -1 extent");
            infer = d;
        } else {
            known *= shape[static_cast<std::size_t>(d)];
        }
    }
    if (infer >= 0) {
        if (known == 0 || a.numel() % known != 0) detail::fail("reshape cannot infer extent");
        shape[static_cast<std::size_t>(infer)] = a.numel() / known;
    }
    if (detail::numel_of(shape) != a.numel())
        detail::fail("reshape " + detail::shape_str(a.shape()) + " -> " + detail::shape_str(shape) +
                     " changes element count");
    Tensor<T> out = a.detached().with_shape(shape);
    const int na = detail::node_or_negative(a);
    if (na < 0) return out;
    const Shape in_shape = a.shape();
    return detail::record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        sink.add(na, g.detached().with_shape(in_shape));
    });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, std::vector<std::int64_t> perm) {
    const std::int64_t rank = a.rank();
    if (static_cast<std::int64_t>(perm.size()) != rank) detail::fail("permute needs one index per axis");
    std::vector<bool> seen(static_cast<std::size_t>(rank), false);
    Shape out_shape(static_cast<std::size_t>(rank));
    for (std::int64_t d = 0; d < rank; ++d) {
        std::int64_t p = perm[static_cast<std::size_t>(d)];
        if (p < 0) p += rank;
        if (p < 0 || p >= rank || seen[static_cast<std::size_t>(p)]) detail::fail("bad permutation");
        seen[static_cast<std::size_t>(p)] = true;
        perm[static_cast<std::size_t>(d)] = p;
        out_shape[static_cast<std::size_t>(d)] = a.dim(p);
    }
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const auto in_strides = detail::strides_of(a.shape());
    std::vector<std::int64_t> src_strides(static_cast<std::size_t>(rank));
    for (std::int64_t d = 0; d < rank; ++d)
        src_strides[static_cast<std::size_t>(d)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
    const T* pa = a.data();
    T* po = out.data();
    detail::odometer_walk<1>(out_shape, {&src_strides}, [&](std::int64_t lin, const std::array<std::int64_t, 1>& off) {
        po[lin] = pa[off[0]];
    });
    const int na = detail::node_or_negative(a);
    if (na < 0) return out;
    std::vector<std::int64_t> inv(static_cast<std::size_t>(rank));
    for (std::int64_t d = 0; d < rank; ++d) inv[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])] = d;
    return detail::record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        sink.add(na, permute(g.detached(), inv));
    });
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
    std::vector<std::int64_t> perm(static_cast<std::size_t>(a.rank()));
    for (std::int64_t d = 0; d < a.rank(); ++d) perm[static_cast<std::size_t>(d)] = d;
    std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
    return permute(a, perm);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::int64_t axis, std::int64_t start, std::int64_t stop) {
    const std::int64_t rank = a.rank();
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) detail::fail("slice axis out of range");
    const std::int64_t ext = a.dim(axis);
    if (start < 0) start += ext;
    if (stop < 0) stop += ext;
    if (start < 0 || stop > ext || start >= stop) detail::fail("bad slice range");
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = stop - start;
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= a.dim(d);
    for (std::int64_t d = axis + 1; d < rank; ++d) inner *= a.dim(d);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* pa = a.data();
    T* po = out.data();
    const std::int64_t len = stop - start;
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(pa + (o * ext + start) * inner, len * inner, po + o * len * inner);
    const int na = detail::node_or_negative(a);
    if (na < 0) return out;
    const Shape in_shape = a.shape();
    return detail::record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(in_shape);
        const T* pg = g.data();
        T* pi = gin.data();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(pg + o * len * inner, len * inner, pi + (o * ext + start) * inner);
        sink.add(na, std::move(gin));
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& ts, std::int64_t axis) {
    if (ts.empty()) detail::fail("concat of nothing");
    const std::int64_t rank = ts[0].rank();
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) detail::fail("concat axis out of range");
    Shape out_shape = ts[0].shape();
    std::int64_t total = 0;
    for (const auto& t : ts) {
        if (t.rank() != rank) detail::fail("concat rank mismatch");
        for (std::int64_t d = 0; d < rank; ++d)
            if (d != axis && t.dim(d) != out_shape[static_cast<std::size_t>(d)])
                detail::fail("concat shape mismatch off-axis");
        total += t.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
    for (std::int64_t d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<std::size_t>(d)];
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    T* po = out.data();
    std::int64_t at = 0;
    for (const auto& t : ts) {
        const std::int64_t ext = t.dim(axis);
        const T* pt = t.data();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(pt + o * ext * inner, ext * inner, po + (o * total + at) * inner);
        at += ext;
    }
    Graph<T>* g = nullptr;
    for (const auto& t : ts) {
        if (t.on_graph()) {
            if (g && g != t.graph()) detail::fail("concat inputs on different graphs");
            g = t.graph();
        }
    }
    if (!g) return out;
    std::vector<int> parents;
    std::vector<std::int64_t> offsets;
    std::vector<std::int64_t> exts;
    std::int64_t off = 0;
    for (const auto& t : ts) {
        parents.push_back(detail::node_or_negative(t));
        offsets.push_back(off);
        exts.push_back(t.dim(axis));
        off += t.dim(axis);
    }
    const int node = g->record(out_shape, parents,
                               [=](const Tensor<T>& gout, GradSink<T>& sink) {
                                   const T* pg = gout.data();
                                   for (std::size_t i = 0; i < parents.size(); ++i) {
                                       if (parents[i] < 0) continue;
                                       Shape s = out_shape;
                                       s[static_cast<std::size_t>(axis)] = exts[i];
                                       Tensor<T> gi = Tensor<T>::zeros(s);
                                       T* pi = gi.data();
                                       for (std::int64_t o = 0; o < outer; ++o)
                                           std::copy_n(pg + (o * total + offsets[i]) * inner, exts[i] * inner,
                                                       pi + o * exts[i] * inner);
                                       sink.add(parents[i], std::move(gi));
                                   }
                               });
    out.attach(g, node, g->epoch());
    return out;
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> ts, std::int64_t axis) {
    return concat(std::vector<Tensor<T>>(ts), axis);
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& ts, std::int64_t axis = 0) {
    if (ts.empty()) detail::fail("stack of nothing");
    const std::int64_t rank = ts[0].rank();
    if (axis < 0) axis += rank + 1;
    if (axis < 0 || axis > rank) detail::fail("stack axis out of range");
    std::vector<Tensor<T>> expanded;
    expanded.reserve(ts.size());
    for (const auto& t : ts) {
        Shape s = t.shape();
        s.insert(s.begin() + axis, 1);
        expanded.push_back(reshape(t, s));
    }
    return concat(expanded, axis);
}

template <typename T>
Tensor<T> stack(std::initializer_list<Tensor<T>> ts, std::int64_t axis = 0) {
    return stack(std::vector<Tensor<T>>(ts), axis);
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape) {
    if (a.shape() == shape) return a;
    const auto sa = detail::aligned_strides(a.shape(), shape);
    Tensor<T> out = Tensor<T>::zeros(shape);
    const T* pa = a.data();
    T* po = out.data();
    detail::odometer_walk<1>(shape, {&sa}, [&](std::int64_t lin, const std::array<std::int64_t, 1>& off) {
        po[lin] = pa[off[0]];
    });
    const int na = detail::node_or_negative(a);
    if (na < 0) return out;
    const Shape in_shape = a.shape();
    return detail::record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        sink.add(na, detail::reduce_to_shape(g, in_shape));
    });
}

// Gathers rows along axis 0; duplicate indices accumulate in the backward pass.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& a, const std::vector<std::int64_t>& idx) {
    if (a.rank() < 1) detail::fail("take_rows needs rank >= 1");
    const std::int64_t rows = a.dim(0);
    const std::int64_t inner = a.numel() / std::max<std::int64_t>(rows, 1);
    Shape out_shape = a.shape();
    out_shape[0] = static_cast<std::int64_t>(idx.size());
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* pa = a.data();
    T* po = out.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const std::int64_t r = idx[i];
        if (r < 0 || r >= rows) detail::fail("take_rows index out of range");
        std::copy_n(pa + r * inner, inner, po + static_cast<std::int64_t>(i) * inner);
    }
    const int na = detail::node_or_negative(a);
    if (na < 0) return out;
    const Shape in_shape = a.shape();
    return detail::record_op<T>(std::move(out), {&a}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(in_shape);
        const T* pg = g.data();
        T* pi = gin.data();
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const T* src = pg + static_cast<std::int64_t>(i) * inner;
            T* dst = pi + idx[i] * inner;
            for (std::int64_t k = 0; k < inner; ++k) dst[k] += src[k];
        }
        sink.add(na, std::move(gin));
    });
}

// ---------------------------------------------------------------------------
// Matrix multiply (batched, leading axes broadcast)
// ---------------------------------------------------------------------------

namespace detail {

struct MatmulDims {
    Shape batch;          // broadcast leading shape
    std::int64_t m, k, n;
    std::vector<std::int64_t> ba, bb;  // per-batch-axis strides, in whole matrices

    std::int64_t batch_off(std::int64_t bi, const std::vector<std::int64_t>& strides) const {
        std::int64_t rem = bi, off = 0;
        for (std::int64_t ax = static_cast<std::int64_t>(batch.size()) - 1; ax >= 0; --ax) {
            const std::int64_t i = rem % batch[static_cast<std::size_t>(ax)];
            rem /= batch[static_cast<std::size_t>(ax)];
            off += i * strides[static_cast<std::size_t>(ax)];
        }
        return off;
    }
};

inline MatmulDims matmul_dims(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) fail("matmul needs rank >= 2 operands");
    MatmulDims d;
    d.m = a[a.size() - 2];
    d.k = a[a.size() - 1];
    const std::int64_t kb = b[b.size() - 2];
    d.n = b[b.size() - 1];
    if (d.k != kb) fail("matmul inner extents differ: " + shape_str(a) + " vs " + shape_str(b));
    const Shape la(a.begin(), a.end() - 2), lb(b.begin(), b.end() - 2);
    d.batch = broadcast_shape(la, lb);
    d.ba = aligned_strides(la, d.batch);
    d.bb = aligned_strides(lb, d.batch);
    return d;
}

inline std::int64_t matmul_grain(std::int64_t row_cost) {
    return std::max<std::int64_t>(1, 65536 / std::max<std::int64_t>(1, row_cost));
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    const auto d = detail::matmul_dims(a.shape(), b.shape());
    Shape out_shape = d.batch;
    out_shape.push_back(d.m);
    out_shape.push_back(d.n);
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const std::int64_t nbatch = detail::numel_of(d.batch);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    const std::int64_t sa_mat = d.m * d.k, sb_mat = d.k * d.n, so_mat = d.m * d.n;
    parallel_for(nbatch * d.m, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t bi = r / d.m, i = r % d.m;
            const T* arow = pa + d.batch_off(bi, d.ba) * sa_mat + i * d.k;
            const T* bmat = pb + d.batch_off(bi, d.bb) * sb_mat;
            T* c = po + bi * so_mat + i * d.n;
            for (std::int64_t p = 0; p < d.k; ++p) {
                const T av = arow[p];
                const T* brow = bmat + p * d.n;
                for (std::int64_t j = 0; j < d.n; ++j) c[j] += av * brow[j];
            }
        }
    }, detail::matmul_grain(d.k * d.n));
    const int na = detail::node_or_negative(a);
    const int nb = detail::node_or_negative(b);
    return detail::record_op<T>(std::move(out), {&a, &b}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        const T* pg = g.data();
        if (na >= 0) {
            Shape full = d.batch;
            full.push_back(d.m);
            full.push_back(d.k);
            Tensor<T> ga = Tensor<T>::zeros(full);
            T* pga = ga.data();
            const T* pbv = b.data();
            // gA[i,p] = sum_j g[i,j] * B[p,j]
            parallel_for(nbatch * d.m, [&](std::int64_t r0, std::int64_t r1) {
                for (std::int64_t r = r0; r < r1; ++r) {
                    const std::int64_t bi = r / d.m, i = r % d.m;
                    const T* grow = pg + bi * so_mat + i * d.n;
                    const T* bmat = pbv + d.batch_off(bi, d.bb) * sb_mat;
                    T* c = pga + bi * sa_mat + i * d.k;
                    for (std::int64_t p = 0; p < d.k; ++p) {
                        const T* brow = bmat + p * d.n;
                        T acc = T(0);
                        for (std::int64_t j = 0; j < d.n; ++j) acc += grow[j] * brow[j];
                        c[p] = acc;
                    }
                }
            }, detail::matmul_grain(d.k * d.n));
            sink.add(na, detail::reduce_to_shape(ga, a.shape()));
        }
        if (nb >= 0) {
            Shape full = d.batch;
            full.push_back(d.k);
            full.push_back(d.n);
            Tensor<T> gb = Tensor<T>::zeros(full);
            T* pgb = gb.data();
            const T* pav = a.data();
            // gB[p,j] = sum_i A[i,p] * g[i,j]
            parallel_for(nbatch * d.k, [&](std::int64_t r0, std::int64_t r1) {
                for (std::int64_t r = r0; r < r1; ++r) {
                    const std::int64_t bi = r / d.k, p = r % d.k;
                    const T* amat = pav + d.batch_off(bi, d.ba) * sa_mat;
                    T* c = pgb + bi * sb_mat + p * d.n;
                    for (std::int64_t i = 0; i < d.m; ++i) {
                        const T av = amat[i * d.k + p];
                        const T* grow = pg + bi * so_mat + i * d.n;
                        for (std::int64_t j = 0; j < d.n; ++j) c[j] += av * grow[j];
                    }
                }
            }, detail::matmul_grain(d.m * d.n));
            sink.add(nb, detail::reduce_to_shape(gb, b.shape()));
        }
    });
}

}  // namespace dcv
