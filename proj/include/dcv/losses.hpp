#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcv/core/ops.hpp"
#include "dcv/core/parallel.hpp"
#include "dcv/core/tensor.hpp"
#include "dcv/filters.hpp"
#include "dcv/geometry.hpp"

namespace dcv {

// Keeps descriptor-distance gradients finite when two descriptors coincide.
template <typename T>
constexpr T kDistEps = T(1e-12);

template <typename T>
struct DepthLossWeights {
    ScalarOf<T> alpha = ScalarOf<T>(0.85);          // ssim share of the photometric mix
    ScalarOf<T> smooth_weight = ScalarOf<T>(0.1);
};

// One source view resampled into the reference frame, with its validity mask.
template <typename T>
struct WarpedView {
    Tensor<T> image;  // {N,C,H,W}
    Tensor<T> mask;   // {N,1,H,W} of 0/1
};

template <typename T>
struct AttackLossWeights {
    ScalarOf<T> desc_weight = ScalarOf<T>(1);
    ScalarOf<T> reg_weight = ScalarOf<T>(10);
    ScalarOf<T> pair_radius = ScalarOf<T>(0.05);  // normalized units, pairing cutoff
    bool hinge = true;                            // clamp the descriptor margin at zero
};

template <typename T>
struct AttackLossTerms {
    Tensor<T> total;
    Tensor<T> location;
    Tensor<T> descriptor;
    Tensor<T> regularizer;
};

// Mean absolute difference over mask-valid pixels. The mask is {N,1,H,W} and
// counts once per channel; it is treated as data, so no gradient flows into
// the pixel count.
template <typename T>
Tensor<T> l1_photometric(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& mask) {
    detail::check(a.shape() == b.shape(), "l1_photometric shape mismatch " +
                                              detail::shape_str(a.shape()) + " vs " +
                                              detail::shape_str(b.shape()));
    detail::check(a.rank() == 4, "l1_photometric wants {N,C,H,W} images");
    detail::check(mask.rank() == 4 && mask.dim(1) == 1 && mask.dim(0) == a.dim(0) &&
                      mask.dim(2) == a.dim(2) && mask.dim(3) == a.dim(3),
                  "l1_photometric wants a {N,1,H,W} mask matching the images");
    const T valid = sum(mask).item() * static_cast<T>(a.dim(1));
    if (valid == T(0))
        throw std::runtime_error("l1_photometric: validity mask is empty, the views do not overlap");
    return sum(abs(a - b) * mask) / valid;
}

// Gaussian-windowed structural similarity, returned as the mean of
// (1 - SSIM)/2 so that identical images score 0 and the range is [0, 1].
// Windows use replicate padding at the borders.
template <typename T>
Tensor<T> ssim_loss(const Tensor<T>& a, const Tensor<T>& b, std::int64_t window = 5) {
    detail::check(a.shape() == b.shape(), "ssim_loss shape mismatch " +
                                              detail::shape_str(a.shape()) + " vs " +
                                              detail::shape_str(b.shape()));
    detail::check(a.rank() == 4, "ssim_loss wants {N,C,H,W} images");
    detail::check(window >= 1 && window % 2 == 1, "ssim_loss window must be odd and positive");
    detail::check(window <= a.dim(2) && window <= a.dim(3),
                  "ssim_loss window " + std::to_string(window) + " exceeds image " +
                      detail::shape_str(a.shape()));
    const T c1 = T(0.01) * T(0.01);
    const T c2 = T(0.03) * T(0.03);
    auto k = make_gaussian_kernel<T>(window, ScalarOf<T>(1.5));
    auto mu_a = blur(a, k);
    auto mu_b = blur(b, k);
    auto var_a = blur(a * a, k) - square(mu_a);
    auto var_b = blur(b * b, k) - square(mu_b);
    auto cov = blur(a * b, k) - mu_a * mu_b;
    auto num = (mu_a * mu_b * T(2) + c1) * (cov * T(2) + c2);
    auto den = (square(mu_a) + square(mu_b) + c1) * (var_a + var_b + c2);
    auto half_dissim = (T(1) - num / den) * T(0.5);
    return sum(half_dissim) / static_cast<T>(half_dissim.numel());
}

// Edge-aware first-order smoothness: forward-difference depth gradients are
// damped where the guide image has strong gradients (mean absolute over
// channels). Each direction is averaged over its own difference count.
template <typename T>
Tensor<T> smoothness_loss(const Tensor<T>& depth, const Tensor<T>& guide) {
    detail::check(depth.rank() == 4 && depth.dim(1) == 1,
                  "smoothness_loss wants depth {N,1,H,W}, got " + detail::shape_str(depth.shape()));
    detail::check(guide.rank() == 4 && guide.dim(0) == depth.dim(0) &&
                      guide.dim(2) == depth.dim(2) && guide.dim(3) == depth.dim(3),
                  "smoothness_loss guide shape " + detail::shape_str(guide.shape()) +
                      " does not match depth " + detail::shape_str(depth.shape()));
    const T inv_c = T(1) / static_cast<T>(guide.dim(1));
    auto term = [&](std::int64_t axis) {
        const std::int64_t n = depth.dim(axis);
        auto dd = slice(depth, axis, 1, n) - slice(depth, axis, 0, n - 1);
        auto dg = slice(guide, axis, 1, n) - slice(guide, axis, 0, n - 1);
        auto weight = exp(neg(sum(abs(dg), {1}, true) * inv_c));
        auto damped = abs(dd) * weight;
        return sum(damped) / static_cast<T>(damped.numel());
    };
    Tensor<T> loss = Tensor<T>::scalar(T(0));
    if (depth.dim(3) >= 2) loss = loss + term(3);
    if (depth.dim(2) >= 2) loss = loss + term(2);
    return loss;
}

// alpha mixes the ssim and l1 photometric terms (both averaged over views),
// smooth_weight scales the depth smoothness prior guided by the reference.
template <typename T>
Tensor<T> depth_total_loss(const Tensor<T>& ref, const std::vector<WarpedView<T>>& views,
                           const Tensor<T>& depth, const DepthLossWeights<T>& w = {},
                           std::int64_t window = 5) {
    detail::check(!views.empty(), "depth_total_loss needs at least one warped view");
    detail::check(w.alpha >= ScalarOf<T>(0) && w.alpha <= ScalarOf<T>(1),
                  "depth_total_loss alpha must lie in [0,1]");
    detail::check(w.smooth_weight >= ScalarOf<T>(0),
                  "depth_total_loss smooth_weight must be non-negative");
    Tensor<T> ssim_acc = Tensor<T>::scalar(T(0));
    Tensor<T> l1_acc = Tensor<T>::scalar(T(0));
    for (const auto& v : views) {
        ssim_acc = ssim_acc + ssim_loss(ref, v.image, window);
        l1_acc = l1_acc + l1_photometric(ref, v.image, v.mask);
    }
    const T n = static_cast<T>(views.size());
    return w.alpha * (ssim_acc / n) + (ScalarOf<T>(1) - w.alpha) * (l1_acc / n) +
           w.smooth_weight * smoothness_loss(depth, ref);
}

namespace detail {

// One-hot row selector so that gathers stay on the tape as a matmul.
template <typename T>
Tensor<T> row_picker(const std::vector<std::int64_t>& rows, std::int64_t cols) {
    Tensor<T> s = Tensor<T>::zeros({static_cast<std::int64_t>(rows.size()), cols});
    for (std::size_t m = 0; m < rows.size(); ++m)
        s.data()[static_cast<std::int64_t>(m) * cols + rows[m]] = T(1);
    return s;
}

template <typename T>
Tensor<T> row_l2(const Tensor<T>& a, const Tensor<T>& b) {
    return sqrt(sum(square(a - b), {1}) + kDistEps<T>);
}

}  // namespace detail

// Keypoints are {K,2} in normalized coordinates, descriptors {K,D}. Each
// keypoint of the first image pairs with the nearest target-reprojected
// keypoint of the second; pairs beyond pair_radius are dropped. The pairing
// and the hard-negative choice are made on values and held fixed, while the
// residuals themselves stay differentiable, including through h_target.
template <typename T>
AttackLossTerms<T> attack_losses(const Tensor<T>& kp_a, const Tensor<T>& desc_a,
                                 const Tensor<T>& kp_b, const Tensor<T>& desc_b,
                                 const Tensor<T>& h_target, const std::vector<Tensor<T>>& imgs,
                                 const std::vector<Tensor<T>>& imgs_init,
                                 const AttackLossWeights<T>& w = {}) {
    detail::check(kp_a.rank() == 2 && kp_a.dim(1) == 2 && kp_b.rank() == 2 && kp_b.dim(1) == 2,
                  "attack_losses wants {K,2} keypoint tensors");
    detail::check(desc_a.rank() == 2 && desc_a.dim(0) == kp_a.dim(0) && desc_b.rank() == 2 &&
                      desc_b.dim(0) == kp_b.dim(0) && desc_a.dim(1) == desc_b.dim(1),
                  "attack_losses descriptor shapes do not match their keypoints");
    detail::check(h_target.rank() == 2 && h_target.dim(0) == 3 && h_target.dim(1) == 3,
                  "attack_losses wants a {3,3} homography");
    detail::check(imgs.size() == imgs_init.size() && !imgs.empty(),
                  "attack_losses wants matching current and initial image lists");
    for (std::size_t i = 0; i < imgs.size(); ++i)
        detail::check(imgs[i].shape() == imgs_init[i].shape(),
                      "attack_losses image/initial shape mismatch");
    detail::check(w.desc_weight >= ScalarOf<T>(0) && w.reg_weight >= ScalarOf<T>(0) &&
                      w.pair_radius > ScalarOf<T>(0),
                  "attack_losses weights must be non-negative and pair_radius positive");

    const std::int64_t ka = kp_a.dim(0), kb = kp_b.dim(0);
    if (ka == 0 || kb == 0) throw std::runtime_error("attack_losses: empty feature set");

    auto proj = from_homogeneous(matmul(to_homogeneous(kp_b), transpose_last2(h_target)));

    // nearest reprojected keypoint per anchor, chosen on values
    const T* pa = kp_a.data();
    const T* pq = proj.data();
    std::vector<std::int64_t> match(static_cast<std::size_t>(ka));
    std::vector<T> pair_dist(static_cast<std::size_t>(ka));
    parallel_for(ka, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            T best = std::numeric_limits<T>::infinity();
            std::int64_t bj = 0;
            for (std::int64_t j = 0; j < kb; ++j) {
                const T dx = pa[2 * i] - pq[2 * j];
                const T dy = pa[2 * i + 1] - pq[2 * j + 1];
                const T d2 = dx * dx + dy * dy;
                if (d2 < best) {
                    best = d2;
                    bj = j;
                }
            }
            match[static_cast<std::size_t>(i)] = bj;
            pair_dist[static_cast<std::size_t>(i)] = std::sqrt(best);
        }
    }, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, kb)));

    const T radius = w.pair_radius;
    std::vector<std::int64_t> anchors, positives;
    T closest = std::numeric_limits<T>::infinity();
    for (std::int64_t i = 0; i < ka; ++i) {
        closest = std::min(closest, pair_dist[static_cast<std::size_t>(i)]);
        if (pair_dist[static_cast<std::size_t>(i)] <= radius) {
            anchors.push_back(i);
            positives.push_back(match[static_cast<std::size_t>(i)]);
        }
    }
    if (anchors.empty())
        throw std::runtime_error("attack_losses: no keypoint pairs within radius " +
                                 std::to_string(static_cast<double>(radius)) + " (closest " +
                                 std::to_string(static_cast<double>(closest)) + ")");

    const std::int64_t m = static_cast<std::int64_t>(anchors.size());
    auto p1 = matmul(detail::row_picker<T>(anchors, ka), kp_a);
    auto p2 = matmul(detail::row_picker<T>(positives, kb), proj);
    auto location = sum(square(p1 - p2)) / static_cast<T>(m);

    // hard negatives: per anchor, the descriptor-nearest keypoint whose
    // reprojection lands well outside the pairing radius
    auto da = matmul(detail::row_picker<T>(anchors, ka), desc_a);
    auto dots = matmul(detach(da), transpose_last2(detach(desc_b)));
    auto na = sum(square(detach(da)), {1});
    auto nb = sum(square(detach(desc_b)), {1});
    const T far2 = T(9) * radius * radius;
    std::vector<std::int64_t> neg(static_cast<std::size_t>(m), -1);
    parallel_for(m, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            const std::int64_t ai = anchors[static_cast<std::size_t>(i)];
            T best = std::numeric_limits<T>::infinity();
            for (std::int64_t j = 0; j < kb; ++j) {
                const T dx = pa[2 * ai] - pq[2 * j];
                const T dy = pa[2 * ai + 1] - pq[2 * j + 1];
                if (dx * dx + dy * dy <= far2) continue;
                const T d2 = na.data()[i] + nb.data()[j] - T(2) * dots.data()[i * kb + j];
                if (d2 < best) {
                    best = d2;
                    neg[static_cast<std::size_t>(i)] = j;
                }
            }
        }
    }, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, kb)));

    std::vector<std::int64_t> tri_anchor, tri_pos, tri_neg;
    for (std::int64_t i = 0; i < m; ++i) {
        if (neg[static_cast<std::size_t>(i)] < 0) continue;
        tri_anchor.push_back(anchors[static_cast<std::size_t>(i)]);
        tri_pos.push_back(positives[static_cast<std::size_t>(i)]);
        tri_neg.push_back(neg[static_cast<std::size_t>(i)]);
    }
    Tensor<T> descriptor = Tensor<T>::scalar(T(0));
    if (!tri_anchor.empty()) {
        auto d1 = matmul(detail::row_picker<T>(tri_anchor, ka), desc_a);
        auto d2p = matmul(detail::row_picker<T>(tri_pos, kb), desc_b);
        auto d2n = matmul(detail::row_picker<T>(tri_neg, kb), desc_b);
        auto margin = detail::row_l2(d1, d2p) - detail::row_l2(d1, d2n) + ScalarOf<T>(1);
        if (w.hinge) margin = clamp(margin, ScalarOf<T>(0));
        descriptor = sum(margin) / static_cast<T>(tri_anchor.size());
    }

    Tensor<T> reg_sum = Tensor<T>::scalar(T(0));
    std::int64_t reg_count = 0;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        reg_sum = reg_sum + sum(square(imgs[i] - imgs_init[i]));
        reg_count += imgs[i].numel();
    }
    auto regularizer = reg_sum / static_cast<T>(reg_count);

    auto total = location + w.desc_weight * descriptor + w.reg_weight * regularizer;
    return {total, location, descriptor, regularizer};
}

}  // namespace dcv
