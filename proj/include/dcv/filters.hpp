#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "dcv/core/conv.hpp"
#include "dcv/core/ops.hpp"
#include "dcv/core/tensor.hpp"

namespace dcv {

enum class KernelKind { kGaussian, kBox, kLaplace, kSobelX, kSobelY, kCustom };

template <typename T>
struct Kernel2d {
    Tensor<T> weights;
    KernelKind kind = KernelKind::kCustom;
};

namespace detail {

template <typename T>
void validate_kernel(const Kernel2d<T>& k) {
    if (k.weights.rank() != 2) fail("kernel weights must be rank 2");
    if (k.weights.dim(0) % 2 == 0 || k.weights.dim(1) % 2 == 0)
        fail("kernel extents must be odd");
    if (k.kind == KernelKind::kCustom) return;
    T s = 0;
    for (std::int64_t i = 0; i < k.weights.numel(); ++i) s += k.weights.data()[i];
    const T want = (k.kind == KernelKind::kGaussian || k.kind == KernelKind::kBox) ? T(1) : T(0);
    if (std::abs(double(s - want)) > 1e-4)
        fail("kernel weights sum to " + std::to_string(double(s)) + ", expected " +
             std::to_string(double(want)));
}

template <typename T>
Tensor<T> sobel_taps_x() {
    return Tensor<T>::from_list({3, 3}, {T(-1), T(0), T(1), T(-2), T(0), T(2), T(-1), T(0), T(1)});
}

template <typename T>
Tensor<T> sobel_taps_y() {
    return Tensor<T>::from_list({3, 3}, {T(-1), T(-2), T(-1), T(0), T(0), T(0), T(1), T(2), T(1)});
}

}  // namespace detail

template <typename T>
Kernel2d<T> make_gaussian_kernel(std::int64_t ksize, const Tensor<T>& sigma) {
    if (ksize < 1 || ksize % 2 == 0) detail::fail("gaussian ksize must be a positive odd number");
    if (sigma.numel() != 1) detail::fail("sigma must be a scalar");
    if (!(sigma.data()[0] > T(0))) detail::fail("sigma must be positive");
    Tensor<T> d2 = Tensor<T>::zeros({ksize});
    for (std::int64_t i = 0; i < ksize; ++i) {
        const T d = T(i) - T(ksize - 1) / T(2);
        d2.data()[i] = d * d;
    }
    auto s = reshape(sigma, {});
    auto w = exp(neg(d2 / (square(s) * T(2))));
    auto wn = w / sum(w);
    auto weights = matmul(reshape(wn, {ksize, 1}), reshape(wn, {1, ksize}));
    return {std::move(weights), KernelKind::kGaussian};
}

template <typename T>
Kernel2d<T> make_gaussian_kernel(std::int64_t ksize, ScalarOf<T> sigma) {
    return make_gaussian_kernel(ksize, Tensor<T>::scalar(sigma));
}

template <typename T = double>
Kernel2d<T> box_kernel(std::int64_t ksize) {
    if (ksize < 1 || ksize % 2 == 0) detail::fail("box ksize must be a positive odd number");
    return {Tensor<T>::full({ksize, ksize}, T(1) / T(ksize * ksize)), KernelKind::kBox};
}

template <typename T = double>
Kernel2d<T> laplace_kernel() {
    return {Tensor<T>::from_list({3, 3}, {T(0), T(1), T(0), T(1), T(-4), T(1), T(0), T(1), T(0)}),
            KernelKind::kLaplace};
}

template <typename T = double>
Kernel2d<T> sobel_kernel_x() {
    return {detail::sobel_taps_x<T>(), KernelKind::kSobelX};
}

template <typename T = double>
Kernel2d<T> sobel_kernel_y() {
    return {detail::sobel_taps_y<T>(), KernelKind::kSobelY};
}

template <typename T>
Tensor<T> blur(const Tensor<T>& img, const Kernel2d<T>& kernel) {
    detail::validate_kernel(kernel);
    return conv2d_depthwise(img, kernel.weights, Pad::kReplicate);
}

// Sobel derivatives, stacked on a new axis after the channel axis.
// order 1 -> {N,C,2,H,W} holding (dx, dy); order 2 -> {N,C,3,H,W} holding (dxx, dxy, dyy).
template <typename T>
Tensor<T> spatial_gradient(const Tensor<T>& img, int order = 1) {
    if (img.rank() != 4) detail::fail("spatial_gradient expects {N,C,H,W}");
    const auto sx = detail::sobel_taps_x<T>();
    const auto sy = detail::sobel_taps_y<T>();
    if (order == 1) {
        auto dx = conv2d_depthwise(img, sx);
        auto dy = conv2d_depthwise(img, sy);
        return stack({dx, dy}, 2);
    }
    if (order == 2) {
        auto gx = conv2d_depthwise(img, sx);
        auto gy = conv2d_depthwise(img, sy);
        auto dxx = conv2d_depthwise(gx, sx);
        auto dxy = conv2d_depthwise(gx, sy);
        auto dyy = conv2d_depthwise(gy, sy);
        return stack({dxx, dxy, dyy}, 2);
    }
    detail::fail("spatial_gradient order must be 1 or 2");
    return img;
}

template <typename T>
constexpr T kEdgeEps = std::is_same_v<T, float> ? T(1e-6) : T(1e-12);

// Gradient magnitude sqrt(dx^2 + dy^2 + eps); eps keeps the sqrt differentiable
// at flat pixels.
template <typename T>
Tensor<T> sobel_edges(const Tensor<T>& img) {
    auto sg = spatial_gradient(img, 1);
    auto gx = slice(sg, 2, 0, 1);
    auto gy = slice(sg, 2, 1, 2);
    auto mag = sqrt(square(gx) + square(gy) + kEdgeEps<T>);
    return reshape(mag, img.shape());
}

// Every valid (unpadded) window of size {bh,bw} at stride {sh,sw}, row-major,
// as {N, L, C, bh, bw}.
template <typename T>
Tensor<T> extract_blocks(const Tensor<T>& img, std::int64_t bh, std::int64_t bw, std::int64_t sh,
                         std::int64_t sw) {
    if (img.rank() != 4) detail::fail("extract_blocks expects {N,C,H,W}");
    const std::int64_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
    if (bh < 1 || bw < 1 || bh > h || bw > w) detail::fail("block does not fit in the image");
    if (sh < 1 || sw < 1) detail::fail("stride must be positive");
    const std::int64_t nby = (h - bh) / sh + 1;
    const std::int64_t nbx = (w - bw) / sw + 1;
    const std::int64_t L = nby * nbx;
    Tensor<T> out = Tensor<T>::zeros({n, L, c, bh, bw});
    const T* pi = img.data();
    T* po = out.data();
    parallel_for(n * L, [&](std::int64_t r0, std::int64_t r1) {
        for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t l = r % L, ni = r / L;
            const std::int64_t y0 = (l / nbx) * sh, x0 = (l % nbx) * sw;
            T* dst = po + r * c * bh * bw;
            for (std::int64_t ci = 0; ci < c; ++ci)
                for (std::int64_t by = 0; by < bh; ++by) {
                    const T* src = pi + ((ni * c + ci) * h + y0 + by) * w + x0;
                    std::copy_n(src, bw, dst);
                    dst += bw;
                }
        }
    }, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, c * bh * bw)));

    const int nimg = detail::node_or_negative(img);
    if (nimg < 0) return out;
    const Shape in_shape = img.shape();
    return detail::record_op<T>(std::move(out), {&img}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        Tensor<T> gin = Tensor<T>::zeros(in_shape);
        const T* pg = g.data();
        T* pgi = gin.data();
        // Overlapping windows accumulate; per-image scatter keeps a fixed order.
        parallel_for(n, [&](std::int64_t n0, std::int64_t n1) {
            for (std::int64_t ni = n0; ni < n1; ++ni)
                for (std::int64_t l = 0; l < L; ++l) {
                    const std::int64_t y0 = (l / nbx) * sh, x0 = (l % nbx) * sw;
                    const T* src = pg + (ni * L + l) * c * bh * bw;
                    for (std::int64_t ci = 0; ci < c; ++ci)
                        for (std::int64_t by = 0; by < bh; ++by) {
                            T* dst = pgi + ((ni * c + ci) * h + y0 + by) * w + x0;
                            for (std::int64_t bx = 0; bx < bw; ++bx) dst[bx] += *src++;
                        }
                }
        }, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, L * c * bh * bw)));
        sink.add(nimg, std::move(gin));
    });
}

}  // namespace dcv
