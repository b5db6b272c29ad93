#pragma once

#include <algorithm>
#include <cmath>

#include "dcv/core/ops.hpp"

namespace dcv {

enum class Pad { kZeros, kReplicate, kReflect };

namespace detail {

inline std::int64_t map_border(std::int64_t i, std::int64_t n, Pad pad) {
    if (pad == Pad::kReplicate) return std::clamp<std::int64_t>(i, 0, n - 1);
    // reflect without repeating the edge sample
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

// Accumulates one kernel's taps over one input plane row-neighborhood into an
// output row. Taps run in (i,j) order over column spans, so accumulation order
// is fixed regardless of threading.
template <typename T>
void conv_row_accum(const T* plane, const T* k, T* orow, std::int64_t y, std::int64_t h, std::int64_t w,
                    std::int64_t kh, std::int64_t kw, Pad pad) {
    const std::int64_t cy = kh / 2, cx = kw / 2;
    for (std::int64_t i = 0; i < kh; ++i) {
        std::int64_t sy = y + i - cy;
        if (sy < 0 || sy >= h) {
            if (pad == Pad::kZeros) continue;
            sy = map_border(sy, h, pad);
        }
        const T* srow = plane + sy * w;
        for (std::int64_t j = 0; j < kw; ++j) {
            const T kv = k[i * kw + j];
            const std::int64_t off = j - cx;
            const std::int64_t x_lo = std::max<std::int64_t>(0, -off);
            const std::int64_t x_hi = std::min<std::int64_t>(w, w - off);
            for (std::int64_t x = x_lo; x < x_hi; ++x) orow[x] += kv * srow[x + off];
            if (pad == Pad::kZeros) continue;
            for (std::int64_t x = 0; x < x_lo; ++x) orow[x] += kv * srow[map_border(x + off, w, pad)];
            for (std::int64_t x = x_hi; x < w; ++x) orow[x] += kv * srow[map_border(x + off, w, pad)];
        }
    }
}

inline std::int64_t conv_row_grain(std::int64_t w, std::int64_t taps) {
    return std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, w * taps));
}

}  // namespace detail

// Cross-channel 2D correlation: input {N,C,H,W} with kernel {F,C,kh,kw} gives
// {N,F,H,W}. Odd kernel extents, same-size output, border handled by `pad`.
// Differentiable in both operands.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& img, const Tensor<T>& kernel, Pad pad = Pad::kReplicate) {
    detail::check(img.rank() == 4, "conv2d wants {N,C,H,W}, got " + detail::shape_str(img.shape()));
    detail::check(kernel.rank() == 4,
                  "conv2d kernel wants {F,C,kh,kw}, got " + detail::shape_str(kernel.shape()));
    const std::int64_t n = img.dim(0), cin = img.dim(1), h = img.dim(2), w = img.dim(3);
    const std::int64_t cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    detail::check(kernel.dim(1) == cin, "conv2d kernel channel count " + std::to_string(kernel.dim(1)) +
                                            " does not match input channels " + std::to_string(cin));
    detail::check(kh % 2 == 1 && kw % 2 == 1, "conv2d kernel extents must be odd");
    if (pad == Pad::kReflect)
        detail::check(kh / 2 < h && kw / 2 < w, "reflect padding needs kernel radius smaller than the image");
    const std::int64_t cy = kh / 2, cx = kw / 2;

    Tensor<T> out = Tensor<T>::zeros({n, cout, h, w});
    {
        const T* pin = img.data();
        const T* pk = kernel.data();
        T* po = out.data();
        parallel_for(n * cout * h, [&](std::int64_t r0, std::int64_t r1) {
            for (std::int64_t r = r0; r < r1; ++r) {
                const std::int64_t y = r % h, f = (r / h) % cout, ni = r / (h * cout);
                T* orow = po + r * w;
                for (std::int64_t c = 0; c < cin; ++c)
                    detail::conv_row_accum(pin + (ni * cin + c) * h * w, pk + (f * cin + c) * kh * kw,
                                           orow, y, h, w, kh, kw, pad);
            }
        }, detail::conv_row_grain(w, cin * kh * kw));
    }

    const int nimg = detail::node_or_negative(img);
    const int nker = detail::node_or_negative(kernel);
    return detail::record_op<T>(std::move(out), {&img, &kernel}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        const T* pg = g.data();
        const T* pk = kernel.data();
        if (nimg >= 0) {
            Tensor<T> gin = Tensor<T>::zeros(img.shape());
            // In-range reads form the adjoint correlation with rotated kernels.
            Tensor<T> flipped = Tensor<T>::zeros(kernel.shape());
            T* pf = flipped.data();
            for (std::int64_t fc = 0; fc < cout * cin; ++fc)
                for (std::int64_t t = 0; t < kh * kw; ++t)
                    pf[fc * kh * kw + t] = pk[fc * kh * kw + (kh * kw - 1 - t)];
            T* pi = gin.data();
            parallel_for(n * cin * h, [&](std::int64_t r0, std::int64_t r1) {
                for (std::int64_t r = r0; r < r1; ++r) {
                    const std::int64_t y = r % h, c = (r / h) % cin, ni = r / (h * cin);
                    T* grow = pi + r * w;
                    for (std::int64_t f = 0; f < cout; ++f)
                        detail::conv_row_accum(pg + (ni * cout + f) * h * w,
                                               pf + (f * cin + c) * kh * kw, grow, y, h, w, kh, kw,
                                               Pad::kZeros);
                }
            }, detail::conv_row_grain(w, cout * kh * kw));
            // Border-mapped reads scatter into the edge cells they resolved to.
            if (pad != Pad::kZeros) {
                for (std::int64_t ni = 0; ni < n; ++ni)
                    for (std::int64_t f = 0; f < cout; ++f) {
                        const T* gplane = pg + (ni * cout + f) * h * w;
                        auto scatter_cell = [&](std::int64_t y, std::int64_t x) {
                            const T gv = gplane[y * w + x];
                            for (std::int64_t i = 0; i < kh; ++i) {
                                const std::int64_t sy = y + i - cy;
                                for (std::int64_t j = 0; j < kw; ++j) {
                                    const std::int64_t sx = x + j - cx;
                                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) continue;
                                    const std::int64_t dst =
                                        detail::map_border(sy, h, pad) * w + detail::map_border(sx, w, pad);
                                    for (std::int64_t c = 0; c < cin; ++c)
                                        pi[(ni * cin + c) * h * w + dst] +=
                                            pk[(f * cin + c) * kh * kw + i * kw + j] * gv;
                                }
                            }
                        };
                        for (std::int64_t y = 0; y < h; ++y) {
                            if (y < cy || y >= h - cy) {
                                for (std::int64_t x = 0; x < w; ++x) scatter_cell(y, x);
                            } else {
                                for (std::int64_t x = 0; x < std::min(cx, w); ++x) scatter_cell(y, x);
                                for (std::int64_t x = std::max<std::int64_t>(0, w - cx); x < w; ++x)
                                    scatter_cell(y, x);
                            }
                        }
                    }
            }
            sink.add(nimg, std::move(gin));
        }
        if (nker >= 0) {
            // gk[f,c,i,j] = sum over images and pixels of gout(f) * in(c, mapped tap)
            Tensor<T> gk = Tensor<T>::zeros(kernel.shape());
            T* pgk = gk.data();
            const T* pin = img.data();
            parallel_for(cout * cin, [&](std::int64_t fc0, std::int64_t fc1) {
                for (std::int64_t fc = fc0; fc < fc1; ++fc) {
                    const std::int64_t f = fc / cin, c = fc % cin;
                    T* ktap = pgk + fc * kh * kw;
                    for (std::int64_t ni = 0; ni < n; ++ni) {
                        const T* gplane = pg + (ni * cout + f) * h * w;
                        const T* iplane = pin + (ni * cin + c) * h * w;
                        for (std::int64_t y = 0; y < h; ++y) {
                            const T* grow = gplane + y * w;
                            for (std::int64_t i = 0; i < kh; ++i) {
                                std::int64_t sy = y + i - cy;
                                if (sy < 0 || sy >= h) {
                                    if (pad == Pad::kZeros) continue;
                                    sy = detail::map_border(sy, h, pad);
                                }
                                const T* srow = iplane + sy * w;
                                for (std::int64_t j = 0; j < kw; ++j) {
                                    const std::int64_t off = j - cx;
                                    const std::int64_t x_lo = std::max<std::int64_t>(0, -off);
                                    const std::int64_t x_hi = std::min<std::int64_t>(w, w - off);
                                    T acc = T(0);
                                    for (std::int64_t x = x_lo; x < x_hi; ++x) acc += grow[x] * srow[x + off];
                                    if (pad != Pad::kZeros) {
                                        for (std::int64_t x = 0; x < x_lo; ++x)
                                            acc += grow[x] * srow[detail::map_border(x + off, w, pad)];
                                        for (std::int64_t x = x_hi; x < w; ++x)
                                            acc += grow[x] * srow[detail::map_border(x + off, w, pad)];
                                    }
                                    ktap[i * kw + j] += acc;
                                }
                            }
                        }
                    }
                }
            }, 1);
            sink.add(nker, std::move(gk));
        }
    });
}

// Applies one shared {kh,kw} kernel to every channel independently.
template <typename T>
Tensor<T> conv2d_depthwise(const Tensor<T>& img, const Tensor<T>& kernel2d, Pad pad = Pad::kReplicate) {
    detail::check(img.rank() == 4, "conv2d_depthwise wants {N,C,H,W}");
    detail::check(kernel2d.rank() == 2, "conv2d_depthwise kernel wants {kh,kw}");
    const std::int64_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
    Tensor<T> flat = reshape(img, {n * c, 1, h, w});
    Tensor<T> k4 = reshape(kernel2d, {1, 1, kernel2d.dim(0), kernel2d.dim(1)});
    return reshape(conv2d(flat, k4, pad), {n, c, h, w});
}

// Picks every other sample on the last two axes (indices 0, 2, 4, ...).
template <typename T>
Tensor<T> subsample2(const Tensor<T>& img) {
    detail::check(img.rank() >= 2, "subsample2 wants at least 2 axes");
    const std::int64_t h = img.dim(-2), w = img.dim(-1);
    const std::int64_t h2 = (h + 1) / 2, w2 = (w + 1) / 2;
    const std::int64_t planes = img.numel() / (h * w);
    Shape out_shape = img.shape();
    out_shape[out_shape.size() - 2] = h2;
    out_shape[out_shape.size() - 1] = w2;
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* pi = img.data();
    T* po = out.data();
    for (std::int64_t p = 0; p < planes; ++p)
        for (std::int64_t y = 0; y < h2; ++y)
            for (std::int64_t x = 0; x < w2; ++x)
                po[(p * h2 + y) * w2 + x] = pi[(p * h + 2 * y) * w + 2 * x];
    const int ni = detail::node_or_negative(img);
    if (ni < 0) return out;
    const Shape in_shape = img.shape();
    return detail::record_op<T>(std::move(out), {&img}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(in_shape);
        const T* pg = g.data();
        T* pgi = gin.data();
        for (std::int64_t p = 0; p < planes; ++p)
            for (std::int64_t y = 0; y < h2; ++y)
                for (std::int64_t x = 0; x < w2; ++x)
                    pgi[(p * h + 2 * y) * w + 2 * x] = pg[(p * h2 + y) * w2 + x];
        sink.add(ni, std::move(gin));
    });
}

}  // namespace dcv
