#pragma once

#include <algorithm>
#include <cmath>

#include "dcv/core/ops.hpp"

namespace dcv {

namespace detail {

// Normalized [-1,1] to pixel coordinates, half-pixel-center convention:
// -1 + 1/W maps to pixel center 0, 1 - 1/W to center W-1.
template <typename T>
T norm_to_pix(T v, std::int64_t n) {
    return (static_cast<T>((v + T(1)) * static_cast<T>(n)) - T(1)) / T(2);
}

struct SampleDims {
    std::int64_t n_in, c, h, w;     // input
    std::int64_t n_grid, oh, ow;    // grid
    std::int64_t n_out;
};

template <typename T>
SampleDims sample_dims(const Tensor<T>& input, const Tensor<T>& grid) {
    check(input.rank() == 4, "grid_sample wants input {N,C,H,W}, got " + shape_str(input.shape()));
    check(grid.rank() == 4 && grid.dim(3) == 2,
          "grid_sample wants grid {N,H',W',2}, got " + shape_str(grid.shape()));
    SampleDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                 grid.dim(0),  grid.dim(1),  grid.dim(2),  0};
    check(d.n_in == d.n_grid || d.n_in == 1 || d.n_grid == 1,
          "grid_sample batch extents must match or be 1");
    d.n_out = std::max(d.n_in, d.n_grid);
    return d;
}

}  // namespace detail

// Samples `input` at normalized grid coordinates (x toward width, y toward
// height) with bilinear weights; reads outside the image clamp to the border.
// Batch extents of input and grid must match, or either may be 1 and is shared.
// Differentiable w.r.t. input values and grid coordinates.
template <typename T>
Tensor<T> grid_sample_bilinear(const Tensor<T>& input, const Tensor<T>& grid) {
    const auto d = detail::sample_dims(input, grid);
    Tensor<T> out = Tensor<T>::zeros({d.n_out, d.c, d.oh, d.ow});
    const T* pin = input.data();
    const T* pgr = grid.data();
    T* po = out.data();

    auto corners = [d](T gx, T gy, std::int64_t& x0, std::int64_t& y0, T& wx, T& wy) {
        const T xp = detail::norm_to_pix(gx, d.w);
        const T yp = detail::norm_to_pix(gy, d.h);
        const T xf = std::floor(xp), yf = std::floor(yp);
        x0 = static_cast<std::int64_t>(xf);
        y0 = static_cast<std::int64_t>(yf);
        wx = xp - xf;
        wy = yp - yf;
    };
    auto cl = [](std::int64_t v, std::int64_t n) { return std::clamp<std::int64_t>(v, 0, n - 1); };

    parallel_for(d.n_out * d.oh, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t no = r / d.oh, oy = r % d.oh;
            const std::int64_t ngr = d.n_grid == 1 ? 0 : no;
            const std::int64_t nin = d.n_in == 1 ? 0 : no;
            const T* grow = pgr + ((ngr * d.oh + oy) * d.ow) * 2;
            for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                std::int64_t x0, y0;
                T wx, wy;
                corners(grow[ox * 2], grow[ox * 2 + 1], x0, y0, wx, wy);
                const std::int64_t xa = cl(x0, d.w), xb = cl(x0 + 1, d.w);
                const std::int64_t ya = cl(y0, d.h), yb = cl(y0 + 1, d.h);
                const T w00 = (T(1) - wx) * (T(1) - wy), w10 = wx * (T(1) - wy);
                const T w01 = (T(1) - wx) * wy, w11 = wx * wy;
                for (std::int64_t c = 0; c < d.c; ++c) {
                    const T* plane = pin + (nin * d.c + c) * d.h * d.w;
                    po[((no * d.c + c) * d.oh + oy) * d.ow + ox] =
                        w00 * plane[ya * d.w + xa] + w10 * plane[ya * d.w + xb] +
                        w01 * plane[yb * d.w + xa] + w11 * plane[yb * d.w + xb];
                }
            }
        }
    }, std::max<std::int64_t>(1, 2048 / std::max<std::int64_t>(1, d.ow * d.c)));

    const int nin_node = detail::node_or_negative(input);
    const int ngr_node = detail::node_or_negative(grid);
    return detail::record_op<T>(std::move(out), {&input, &grid}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        const T* pg = g.data();
        const T* pgr2 = grid.data();
        const T* pin2 = input.data();
        if (nin_node >= 0) {
            Tensor<T> gin = Tensor<T>::zeros(input.shape());
            T* pi = gin.data();
            // Threads own disjoint input-row ranges and each scans the whole
            // grid, so every cell accumulates in grid order for any thread count.
            const std::int64_t nt = std::max(1, num_threads());
            parallel_for(nt, [&](std::int64_t t0, std::int64_t t1) {
                for (std::int64_t t = t0; t < t1; ++t) {
                    const std::int64_t row_lo = d.h * t / nt, row_hi = d.h * (t + 1) / nt;
                    if (row_lo == row_hi) continue;
                    for (std::int64_t no = 0; no < d.n_out; ++no) {
                        const std::int64_t ngr = d.n_grid == 1 ? 0 : no;
                        const std::int64_t nin = d.n_in == 1 ? 0 : no;
                        for (std::int64_t oy = 0; oy < d.oh; ++oy) {
                            const T* grow = pgr2 + ((ngr * d.oh + oy) * d.ow) * 2;
                            for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                                std::int64_t x0, y0;
                                T wx, wy;
                                {
                                    const T xp = detail::norm_to_pix(grow[ox * 2], d.w);
                                    const T yp = detail::norm_to_pix(grow[ox * 2 + 1], d.h);
                                    const T xf = std::floor(xp), yf = std::floor(yp);
                                    x0 = static_cast<std::int64_t>(xf);
                                    y0 = static_cast<std::int64_t>(yf);
                                    wx = xp - xf;
                                    wy = yp - yf;
                                }
                                const std::int64_t xa = std::clamp<std::int64_t>(x0, 0, d.w - 1);
                                const std::int64_t xb = std::clamp<std::int64_t>(x0 + 1, 0, d.w - 1);
                                const std::int64_t ya = std::clamp<std::int64_t>(y0, 0, d.h - 1);
                                const std::int64_t yb = std::clamp<std::int64_t>(y0 + 1, 0, d.h - 1);
                                const bool own_a = ya >= row_lo && ya < row_hi;
                                const bool own_b = yb >= row_lo && yb < row_hi;
                                if (!own_a && !own_b) continue;
                                const T w00 = (T(1) - wx) * (T(1) - wy), w10 = wx * (T(1) - wy);
                                const T w01 = (T(1) - wx) * wy, w11 = wx * wy;
                                for (std::int64_t c = 0; c < d.c; ++c) {
                                    const T gv = pg[((no * d.c + c) * d.oh + oy) * d.ow + ox];
                                    T* plane = pi + (nin * d.c + c) * d.h * d.w;
                                    if (own_a) {
                                        plane[ya * d.w + xa] += w00 * gv;
                                        plane[ya * d.w + xb] += w10 * gv;
                                    }
                                    if (own_b) {
                                        plane[yb * d.w + xa] += w01 * gv;
                                        plane[yb * d.w + xb] += w11 * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }, 1);
            sink.add(nin_node, std::move(gin));
        }
        if (ngr_node >= 0) {
            Tensor<T> ggr = Tensor<T>::zeros(grid.shape());
            T* pgo = ggr.data();
            parallel_for(d.n_out * d.oh, [&](std::int64_t r0, std::int64_t r1) {
                for (std::int64_t r = r0; r < r1; ++r) {
                    const std::int64_t no = r / d.oh, oy = r % d.oh;
                    const std::int64_t ngr = d.n_grid == 1 ? 0 : no;
                    const std::int64_t nin = d.n_in == 1 ? 0 : no;
                    const T* grow = pgr2 + ((ngr * d.oh + oy) * d.ow) * 2;
                    for (std::int64_t ox = 0; ox < d.ow; ++ox) {
                        std::int64_t x0, y0;
                        T wx, wy;
                        {
                            const T xp = detail::norm_to_pix(grow[ox * 2], d.w);
                            const T yp = detail::norm_to_pix(grow[ox * 2 + 1], d.h);
                            const T xf = std::floor(xp), yf = std::floor(yp);
                            x0 = static_cast<std::int64_t>(xf);
                            y0 = static_cast<std::int64_t>(yf);
                            wx = xp - xf;
                            wy = yp - yf;
                        }
                        const std::int64_t xa = std::clamp<std::int64_t>(x0, 0, d.w - 1);
                        const std::int64_t xb = std::clamp<std::int64_t>(x0 + 1, 0, d.w - 1);
                        const std::int64_t ya = std::clamp<std::int64_t>(y0, 0, d.h - 1);
                        const std::int64_t yb = std::clamp<std::int64_t>(y0 + 1, 0, d.h - 1);
                        T dx = T(0), dy = T(0);
                        for (std::int64_t c = 0; c < d.c; ++c) {
                            const T gv = pg[((no * d.c + c) * d.oh + oy) * d.ow + ox];
                            const T* plane = pin2 + (nin * d.c + c) * d.h * d.w;
                            const T v00 = plane[ya * d.w + xa], v10 = plane[ya * d.w + xb];
                            const T v01 = plane[yb * d.w + xa], v11 = plane[yb * d.w + xb];
                            dx += gv * ((v10 - v00) * (T(1) - wy) + (v11 - v01) * wy);
                            dy += gv * ((v01 - v00) * (T(1) - wx) + (v11 - v10) * wx);
                        }
                        // pixel-space derivatives back to normalized coordinates
                        pgo[((ngr * d.oh + oy) * d.ow + ox) * 2 + 0] += dx * static_cast<T>(d.w) / T(2);
                        pgo[((ngr * d.oh + oy) * d.ow + ox) * 2 + 1] += dy * static_cast<T>(d.h) / T(2);
                    }
                }
            }, d.n_grid == 1 && d.n_out > 1 ? d.n_out * d.oh : 1);
            sink.add(ngr_node, std::move(ggr));
        }
    });
}

// 1 where the grid coordinate lies inside [-1,1] on both axes, else 0.
// Plain values, no gradient path.
template <typename T>
Tensor<T> grid_valid_mask(const Tensor<T>& grid) {
    detail::check(grid.rank() == 4 && grid.dim(3) == 2, "grid_valid_mask wants {N,H',W',2}");
    const std::int64_t n = grid.dim(0), oh = grid.dim(1), ow = grid.dim(2);
    Tensor<T> mask = Tensor<T>::zeros({n, 1, oh, ow});
    const T* pg = grid.data();
    T* pm = mask.data();
    for (std::int64_t i = 0; i < n * oh * ow; ++i) {
        const T x = pg[i * 2], y = pg[i * 2 + 1];
        pm[i] = (x >= T(-1) && x <= T(1) && y >= T(-1) && y <= T(1)) ? T(1) : T(0);
    }
    return mask;
}

// Identity sampling grid {1,H,W,2} in normalized coordinates (pixel centers).
template <typename T>
Tensor<T> identity_grid(std::int64_t h, std::int64_t w) {
    Tensor<T> grid = Tensor<T>::zeros({1, h, w, 2});
    T* p = grid.data();
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            p[(y * w + x) * 2 + 0] = (T(2) * static_cast<T>(x) + T(1)) / static_cast<T>(w) - T(1);
            p[(y * w + x) * 2 + 1] = (T(2) * static_cast<T>(y) + T(1)) / static_cast<T>(h) - T(1);
        }
    return grid;
}

// Bilinear resize to {oh,ow} through grid sampling (edge samples clamp).
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& img, std::int64_t oh, std::int64_t ow) {
    detail::check(img.rank() == 4, "upsample_bilinear wants {N,C,H,W}");
    detail::check(oh >= 1 && ow >= 1, "upsample_bilinear wants positive output extents");
    return grid_sample_bilinear(img, identity_grid<T>(oh, ow));
}

}  // namespace dcv
