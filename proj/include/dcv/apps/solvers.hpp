#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcv/core/conv.hpp"
#include "dcv/core/graph.hpp"
#include "dcv/core/ops.hpp"
#include "dcv/core/optim.hpp"
#include "dcv/core/parallel.hpp"
#include "dcv/core/rng.hpp"
#include "dcv/core/sample.hpp"
#include "dcv/core/tensor.hpp"
#include "dcv/features.hpp"
#include "dcv/filters.hpp"
#include "dcv/geometry.hpp"
#include "dcv/losses.hpp"

namespace dcv::apps {

// An objective stopped being finite; the CLI maps this to its own exit code
// after still writing the run manifest.
class NumericFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
void check_finite(T v, const std::string& what) {
    if (!std::isfinite(static_cast<double>(v)))
        throw NumericFailure(what + " became non-finite");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Image registration: photometric alignment over an 8-DoF homography
// ---------------------------------------------------------------------------

// Gaussian blur (sigma 1) then 2x subsample, repeated; result is finest first.
template <typename T>
std::vector<Tensor<T>> image_pyramid(const Tensor<T>& img, std::int64_t levels) {
    dcv::detail::check(img.rank() == 4, "image_pyramid wants {N,C,H,W}");
    dcv::detail::check(levels >= 1, "image_pyramid wants at least one level");
    dcv::detail::check(std::min(img.dim(2), img.dim(3)) >> (levels - 1) >= 4,
                       "image_pyramid: too many levels for this image size");
    std::vector<Tensor<T>> pyr{img};
    for (std::int64_t l = 1; l < levels; ++l) {
        const auto& prev = pyr.back();
        const std::int64_t k = gaussian_ksize(1.0, prev.dim(2), prev.dim(3));
        pyr.push_back(subsample2(blur(prev, make_gaussian_kernel<T>(k, ScalarOf<T>(1)))));
    }
    return pyr;
}

template <typename T>
struct RegisterOptions {
    std::int64_t levels = 6;
    std::int64_t iters_per_level = 200;
    ScalarOf<T> lr = ScalarOf<T>(1e-3);
};

template <typename T>
struct RegisterResult {
    Tensor<T> h;                             // {3,3}, normalized dst -> src
    std::vector<std::vector<T>> loss_trace;  // per level, coarse first
    std::vector<Tensor<T>> warped;           // src warped by the final h, coarse first
};

// Minimizes the masked mean absolute difference between dst and src warped by
// a shared normalized homography, coarse to fine with a fresh Adam per level.
// dst_mask marks which dst pixels are trusted (all of them by default).
template <typename T>
RegisterResult<T> register_images(const Tensor<T>& src, const Tensor<T>& dst,
                                  const RegisterOptions<T>& opts = {},
                                  Tensor<T> dst_mask = {}) {
    dcv::detail::check(src.rank() == 4 && src.shape() == dst.shape(),
                       "register_images wants matching {N,C,H,W} images");
    dcv::detail::check(opts.iters_per_level >= 1 && opts.lr > ScalarOf<T>(0),
                       "register_images wants positive iterations and learning rate");
    if (!dst_mask.defined()) dst_mask = Tensor<T>::ones({dst.dim(0), 1, dst.dim(2), dst.dim(3)});
    dcv::detail::check(dst_mask.rank() == 4 && dst_mask.dim(1) == 1 &&
                           dst_mask.dim(2) == dst.dim(2) && dst_mask.dim(3) == dst.dim(3),
                       "register_images wants a {N,1,H,W} mask matching the images");

    auto pyr_src = image_pyramid(src, opts.levels);
    auto pyr_dst = image_pyramid(dst, opts.levels);
    auto pyr_mask = image_pyramid(dst_mask, opts.levels);
    for (auto& m : pyr_mask)
        m = dcv::detail::vmap(m, [](T v) { return v > T(0.5) ? T(1) : T(0); });

    Tensor<T> h8 = Tensor<T>::from_list({8}, {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0)});
    RegisterResult<T> out;
    for (std::int64_t lvl = opts.levels - 1; lvl >= 0; --lvl) {
        const auto& s = pyr_src[static_cast<std::size_t>(lvl)];
        const auto& d = pyr_dst[static_cast<std::size_t>(lvl)];
        const auto& dm = pyr_mask[static_cast<std::size_t>(lvl)];
        std::vector<T> trace;
        Adam<T> opt({h8}, {opts.lr});
        for (std::int64_t it = 0; it < opts.iters_per_level; ++it) {
            Graph<T> g;
            auto p = g.leaf(h8);
            auto hm = reshape(concat({p, Tensor<T>::ones({1})}, 0), {3, 3});
            auto warped = homography_warp(s, hm, d.dim(2), d.dim(3));
            auto loss = l1_photometric(warped.first, d, warped.second * dm);
            const T lv = loss.data()[0];
            detail::check_finite(lv, "registration loss");
            trace.push_back(lv);
            auto grads = dcv::backward(loss);
            opt.step({grads.at(p)});
        }
        out.loss_trace.push_back(std::move(trace));
        auto hm = reshape(concat({h8, Tensor<T>::ones({1})}, 0), {3, 3});
        out.warped.push_back(homography_warp(s, hm, d.dim(2), d.dim(3)).first);
    }
    out.h = reshape(concat({h8, Tensor<T>::ones({1})}, 0), {3, 3});
    return out;
}

// Mean pixel distance between the images of the four frame corners under two
// normalized dst->src homographies.
template <typename T>
T corner_reproj_error_px(const Tensor<T>& h_est, const Tensor<T>& h_gt, std::int64_t h,
                         std::int64_t w) {
    dcv::detail::check(h_est.shape() == Shape{3, 3} && h_gt.shape() == Shape{3, 3},
                       "corner_reproj_error_px wants {3,3} homographies");
    auto map = [&](const T* m, T x, T y, T& u, T& v) {
        const T z = m[6] * x + m[7] * y + m[8];
        u = (m[0] * x + m[1] * y + m[2]) / z;
        v = (m[3] * x + m[4] * y + m[5]) / z;
    };
    const T corners[8] = {T(-1), T(-1), T(1), T(-1), T(1), T(1), T(-1), T(1)};
    T acc = 0;
    for (int i = 0; i < 4; ++i) {
        T ue, ve, ug, vg;
        map(h_est.data(), corners[2 * i], corners[2 * i + 1], ue, ve);
        map(h_gt.data(), corners[2 * i], corners[2 * i + 1], ug, vg);
        const T dx = (ue - ug) * static_cast<T>(w) / T(2);
        const T dy = (ve - vg) * static_cast<T>(h) / T(2);
        acc += std::sqrt(dx * dx + dy * dy);
    }
    return acc / T(4);
}

// ---------------------------------------------------------------------------
// Multi-view depth: per-pixel depth from photometric consistency
// ---------------------------------------------------------------------------

template <typename T>
struct DepthOptions {
    std::int64_t scales = 7;
    std::int64_t iters_per_scale = 500;
    ScalarOf<T> lr = ScalarOf<T>(10);
    ScalarOf<T> momentum = ScalarOf<T>(0.9);
    DepthLossWeights<T> weights = {};
    std::int64_t window = 5;
    ScalarOf<T> depth_min = ScalarOf<T>(1e-3);
};

template <typename T>
struct DepthResult {
    Tensor<T> depth;                         // {1,1,H,W}
    std::vector<std::vector<T>> loss_trace;  // per scale, coarse first
    std::vector<Tensor<T>> residuals;        // photometric error maps, coarse first
};

// Depth is parametrized as softplus(z) + depth_min so it stays positive; z
// lives on a coarse grid that doubles in resolution per scale and is always
// upsampled to full resolution before warping, so every scale sees the full
// photometric objective. SGD with momentum restarts at each scale.
template <typename T>
DepthResult<T> solve_depth(const std::vector<Tensor<T>>& views,
                           const std::vector<PinholeCamera<T>>& cameras, std::int64_t ref,
                           Rng& rng, const DepthOptions<T>& opts = {},
                           const std::function<void(std::int64_t, std::int64_t, T)>& on_iter = {}) {
    dcv::detail::check(views.size() >= 2, "solve_depth wants at least two views");
    dcv::detail::check(views.size() == cameras.size(), "solve_depth wants one camera per view");
    dcv::detail::check(ref >= 0 && ref < static_cast<std::int64_t>(views.size()),
                       "solve_depth reference index out of range");
    for (const auto& v : views)
        dcv::detail::check(v.rank() == 4 && v.shape() == views[0].shape(),
                           "solve_depth wants equal-shaped {1,C,H,W} views");
    dcv::detail::check(opts.scales >= 1 && opts.iters_per_scale >= 1,
                       "solve_depth wants positive scales and iterations");
    const std::int64_t h = views[0].dim(2), w = views[0].dim(3);
    dcv::detail::check(std::min(h, w) >> (opts.scales - 1) >= 2,
                       "solve_depth: too many scales for this image size");

    auto grid_size = [&](std::int64_t lvl) {
        return std::pair{(h + (std::int64_t(1) << lvl) - 1) >> lvl,
                         (w + (std::int64_t(1) << lvl) - 1) >> lvl};
    };

    // uniform [0,1] depth draws at the coarsest grid, mapped through the
    // inverse parametrization
    auto [h0, w0] = grid_size(opts.scales - 1);
    Tensor<T> z = Tensor<T>::zeros({1, 1, h0, w0});
    for (std::int64_t i = 0; i < z.numel(); ++i) {
        const double d = std::max(rng.uniform() - static_cast<double>(opts.depth_min), 1e-6);
        z.data()[i] = static_cast<T>(std::log(std::expm1(d)));
    }

    DepthResult<T> out;
    for (std::int64_t lvl = opts.scales - 1; lvl >= 0; --lvl) {
        std::vector<T> trace;
        SgdMomentum<T> opt({z}, {opts.lr, opts.momentum});
        for (std::int64_t it = 0; it < opts.iters_per_scale; ++it) {
            Graph<T> g;
            auto zl = g.leaf(z);
            auto depth = softplus(zl) + opts.depth_min;
            if (z.dim(2) != h || z.dim(3) != w) depth = upsample_bilinear(depth, h, w);
            std::vector<WarpedView<T>> warped;
            for (std::size_t v = 0; v < views.size(); ++v) {
                if (static_cast<std::int64_t>(v) == ref) continue;
                auto wv = depth_warp(views[v], cameras[v], cameras[static_cast<std::size_t>(ref)],
                                     depth);
                warped.push_back({wv.first, wv.second});
            }
            auto loss = depth_total_loss(views[static_cast<std::size_t>(ref)], warped, depth,
                                         opts.weights, opts.window);
            const T lv = loss.data()[0];
            detail::check_finite(lv, "depth loss");
            trace.push_back(lv);
            if (on_iter) on_iter(lvl, it, lv);
            auto grads = dcv::backward(loss);
            opt.step({grads.at(zl)});
        }
        out.loss_trace.push_back(std::move(trace));

        // photometric error map at this scale, and the next scale's z grid
        {
            auto depth = softplus(z) + opts.depth_min;
            if (z.dim(2) != h || z.dim(3) != w) depth = upsample_bilinear(depth, h, w);
            Tensor<T> acc = Tensor<T>::zeros({1, 1, h, w});
            std::int64_t n = 0;
            for (std::size_t v = 0; v < views.size(); ++v) {
                if (static_cast<std::int64_t>(v) == ref) continue;
                auto wv = depth_warp(views[v], cameras[v], cameras[static_cast<std::size_t>(ref)],
                                     depth);
                auto diff = mean(abs(wv.first - views[static_cast<std::size_t>(ref)]), {1}, true);
                acc = acc + diff * wv.second;
                ++n;
            }
            out.residuals.push_back(acc / static_cast<T>(n));
            if (lvl > 0) {
                auto [hn, wn] = grid_size(lvl - 1);
                z = upsample_bilinear(z, hn, wn);
            }
        }
    }
    Tensor<T> depth = softplus(z) + opts.depth_min;
    if (z.dim(2) != h || z.dim(3) != w) depth = upsample_bilinear(depth, h, w);
    out.depth = depth;
    return out;
}

// ---------------------------------------------------------------------------
// Feature-matching attack: optimize two images so their features match a
// target homography
// ---------------------------------------------------------------------------

template <typename T>
struct AttackOptions {
    std::int64_t steps = 1000;
    ScalarOf<T> lr = ScalarOf<T>(0.003);
    std::int64_t k = 2500;
    AttackLossWeights<T> weights = {};
    DetectorKind detector = DetectorKind::kHessian;
    std::int64_t nms_window = 5;
    ScalarOf<T> nms_temperature = ScalarOf<T>(0.05);
    std::int64_t orientation_patch = 16;
    std::int64_t descriptor_patch = kSiftPatch;
    ScalarOf<T> match_threshold_px = ScalarOf<T>(3);
    std::int64_t ransac_iters = 2000;
    std::uint64_t ransac_seed = 0;
};

template <typename T>
struct FeatureSet {
    FeatureTensors<T> features;
    Tensor<T> keypoints;    // {K,2}, normalized coordinates
    Tensor<T> descriptors;  // {K,128}
    bool complete = true;
};

// Scale-space detection, soft-NMS selection, orientation, and description in
// one pass; everything stays on img's tape when img is a graph leaf.
template <typename T>
FeatureSet<T> detect_describe(const Tensor<T>& img, const AttackOptions<T>& opts) {
    ScaleSpace<T> ss = make_scale_space(img);
    ScaleSpace<T> resp = ss;
    for (auto& lvl : resp.levels) lvl.image = detector_response(lvl.image, opts.detector);
    auto sel = soft_nms_select_batch(resp, opts.k, opts.nms_window, opts.nms_temperature);

    FeatureSet<T> out;
    out.complete = sel.complete;
    out.features = std::move(sel.features);
    auto opatch = extract_oriented_patches(img, out.features, opts.orientation_patch);
    out.features.orientation = dominant_orientation(opatch);
    auto dpatch = extract_oriented_patches(img, out.features, opts.descriptor_patch);
    out.descriptors = sift_describe(dpatch);

    const std::int64_t h = img.dim(2), w = img.dim(3), k = out.features.x.dim(0);
    auto xn = out.features.x * (T(2) / static_cast<T>(w)) + (T(1) / static_cast<T>(w) - T(1));
    auto yn = out.features.y * (T(2) / static_cast<T>(h)) + (T(1) / static_cast<T>(h) - T(1));
    out.keypoints = concat({reshape(xn, {k, 1}), reshape(yn, {k, 1})}, 1);
    return out;
}

struct MatchStats {
    std::int64_t mutual = 0;       // mutual nearest-neighbor matches
    std::int64_t consistent = 0;   // matches within the pixel threshold of h_target
    std::int64_t ransac_inliers = 0;
};

// Counts how many mutual matches agree with h_target (keypoints of b mapped
// into a) and how many survive a seeded RANSAC fit. Values only, no tape.
template <typename T>
MatchStats match_statistics(const FeatureSet<T>& fa, const FeatureSet<T>& fb,
                            const Tensor<T>& h_target, std::int64_t h, std::int64_t w,
                            const AttackOptions<T>& opts) {
    auto matches = match_descriptors(fa.descriptors.detached(), fb.descriptors.detached());
    MatchStats st;
    st.mutual = static_cast<std::int64_t>(matches.size());
    if (matches.empty()) return st;

    const T* ht = h_target.data();
    const T* pa = fa.keypoints.data();
    const T* pb = fb.keypoints.data();
    auto to_px_x = [&](T xn) { return (xn + T(1)) * static_cast<T>(w) / T(2) - T(0.5); };
    auto to_px_y = [&](T yn) { return (yn + T(1)) * static_cast<T>(h) / T(2) - T(0.5); };
    std::vector<T> pts_a, pts_b;
    for (const auto& m : matches) {
        const T xb = pb[2 * m.b], yb = pb[2 * m.b + 1];
        const T z = ht[6] * xb + ht[7] * yb + ht[8];
        const T xm = (ht[0] * xb + ht[1] * yb + ht[2]) / z;
        const T ym = (ht[3] * xb + ht[4] * yb + ht[5]) / z;
        const T dx = to_px_x(pa[2 * m.a]) - to_px_x(xm);
        const T dy = to_px_y(pa[2 * m.a + 1]) - to_px_y(ym);
        if (std::sqrt(dx * dx + dy * dy) < opts.match_threshold_px) ++st.consistent;
        pts_a.push_back(to_px_x(pa[2 * m.a]));
        pts_a.push_back(to_px_y(pa[2 * m.a + 1]));
        pts_b.push_back(to_px_x(xb));
        pts_b.push_back(to_px_y(yb));
    }
    if (st.mutual >= 4) {
        auto ra = ransac_homography(
            Tensor<T>::from_data(pts_a, {st.mutual, 2}), Tensor<T>::from_data(pts_b, {st.mutual, 2}),
            opts.ransac_iters, opts.match_threshold_px, opts.ransac_seed);
        st.ransac_inliers = ra.inlier_count;
    }
    return st;
}

template <typename T>
struct AttackResult {
    Tensor<T> img_a, img_b;  // perturbed copies of the inputs
    MatchStats before, after;
    std::vector<std::array<T, 4>> loss_trace;  // total, location, descriptor, regularizer
};

// Re-detects features on both images every step and follows the combined
// location/descriptor/regularizer objective with Adam on the raw pixels.
template <typename T>
AttackResult<T> attack(const Tensor<T>& img_a0, const Tensor<T>& img_b0, const Tensor<T>& h_target,
                       const AttackOptions<T>& opts = {},
                       const std::function<void(std::int64_t, const std::array<T, 4>&)>& on_step = {}) {
    dcv::detail::check(img_a0.rank() == 4 && img_b0.rank() == 4,
                       "attack wants {1,1,H,W} images");
    dcv::detail::check(h_target.shape() == Shape{3, 3}, "attack wants a {3,3} target homography");
    dcv::detail::check(opts.steps >= 0 && opts.lr > ScalarOf<T>(0) && opts.k >= 1,
                       "attack wants non-negative steps, positive lr and k");

    AttackResult<T> out;
    out.img_a = img_a0.clone();
    out.img_b = img_b0.clone();
    const std::int64_t h = img_a0.dim(2), w = img_a0.dim(3);
    {
        auto fa = detect_describe(out.img_a, opts);
        auto fb = detect_describe(out.img_b, opts);
        out.before = match_statistics(fa, fb, h_target, h, w, opts);
    }

    Adam<T> opt({out.img_a, out.img_b}, {opts.lr});
    for (std::int64_t step = 0; step < opts.steps; ++step) {
        Graph<T> g;
        auto la = g.leaf(out.img_a);
        auto lb = g.leaf(out.img_b);
        auto fa = detect_describe(la, opts);
        auto fb = detect_describe(lb, opts);
        auto terms = attack_losses(fa.keypoints, fa.descriptors, fb.keypoints, fb.descriptors,
                                   h_target, {la, lb}, {img_a0, img_b0}, opts.weights);
        const std::array<T, 4> vals = {terms.total.data()[0], terms.location.data()[0],
                                       terms.descriptor.data()[0], terms.regularizer.data()[0]};
        detail::check_finite(vals[0], "attack loss");
        out.loss_trace.push_back(vals);
        if (on_step) on_step(step, vals);
        auto grads = dcv::backward(terms.total);
        opt.step({grads.at(la), grads.at(lb)});
    }
    {
        auto fa = detect_describe(out.img_a, opts);
        auto fb = detect_describe(out.img_b, opts);
        out.after = match_statistics(fa, fb, h_target, h, w, opts);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sobel throughput benchmark
// ---------------------------------------------------------------------------

struct BenchRow {
    std::int64_t batch = 0;
    int threads = 0;
    double median_ms = 0, p10_ms = 0, p90_ms = 0;
};

inline double percentile(std::vector<double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * f;
}

// Times sobel_edges on random {B,3,H,W} batches, reps times per (threads,
// batch) pair after a short warmup; rows are ordered threads-major.
template <typename T>
std::vector<BenchRow> bench_sobel(const std::vector<std::int64_t>& batches,
                                  const std::vector<int>& thread_counts, std::int64_t reps,
                                  std::int64_t h, std::int64_t w, std::uint64_t seed,
                                  std::int64_t warmup = 3) {
    dcv::detail::check(!batches.empty() && !thread_counts.empty() && reps >= 1,
                       "bench_sobel wants batches, thread counts, and reps >= 1");
    using clk = std::chrono::steady_clock;
    std::vector<BenchRow> rows;
    for (int threads : thread_counts) {
        dcv::detail::check(threads >= 1, "bench_sobel wants positive thread counts");
        set_num_threads(threads);
        for (std::int64_t b : batches) {
            dcv::detail::check(b >= 1, "bench_sobel wants positive batch sizes");
            Rng rng(seed);
            Tensor<T> img = Tensor<T>::zeros({b, 3, h, w});
            for (std::int64_t i = 0; i < img.numel(); ++i)
                img.data()[i] = static_cast<T>(rng.uniform());
            volatile T sink = 0;
            for (std::int64_t r = 0; r < warmup; ++r) sink = sink + sobel_edges(img).data()[0];
            std::vector<double> ms;
            ms.reserve(static_cast<std::size_t>(reps));
            for (std::int64_t r = 0; r < reps; ++r) {
                const auto t0 = clk::now();
                auto e = sobel_edges(img);
                sink = sink + e.data()[0];
                const auto t1 = clk::now();
                ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            }
            std::sort(ms.begin(), ms.end());
            rows.push_back({b, threads, percentile(ms, 0.5), percentile(ms, 0.1),
                            percentile(ms, 0.9)});
        }
    }
    return rows;
}

// Bar chart of median times, one group per batch size, one bar per thread
// count; returns an RGB image for save_image.
inline Tensor<double> draw_bench_plot(const std::vector<BenchRow>& rows) {
    dcv::detail::check(!rows.empty(), "draw_bench_plot wants at least one row");
    const std::int64_t h = 360, w = 480, mx = 48, my = 32;
    Tensor<double> img = Tensor<double>::ones({1, 3, h, w});
    auto put = [&](std::int64_t y, std::int64_t x, double r, double g, double b) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        img.data()[(0 * h + y) * w + x] = r;
        img.data()[(1 * h + y) * w + x] = g;
        img.data()[(2 * h + y) * w + x] = b;
    };
    std::vector<std::int64_t> batches;
    std::vector<int> threads;
    double top = 0;
    for (const auto& r : rows) {
        if (std::find(batches.begin(), batches.end(), r.batch) == batches.end())
            batches.push_back(r.batch);
        if (std::find(threads.begin(), threads.end(), r.threads) == threads.end())
            threads.push_back(r.threads);
        top = std::max(top, r.p90_ms);
    }
    std::sort(batches.begin(), batches.end());
    std::sort(threads.begin(), threads.end());
    if (top <= 0) top = 1;

    for (std::int64_t x = mx; x < w - 8; ++x) put(h - my, x, 0, 0, 0);
    for (std::int64_t y = 8; y <= h - my; ++y) put(y, mx, 0, 0, 0);
    const double colors[6][3] = {{0.20, 0.35, 0.80}, {0.85, 0.45, 0.10}, {0.20, 0.60, 0.25},
                                 {0.70, 0.20, 0.55}, {0.55, 0.55, 0.10}, {0.10, 0.60, 0.60}};
    const std::int64_t group_w = (w - mx - 16) / static_cast<std::int64_t>(batches.size());
    const std::int64_t bar_w = std::max<std::int64_t>(2, group_w / (2 * static_cast<std::int64_t>(threads.size())));
    for (const auto& r : rows) {
        const auto bi = static_cast<std::int64_t>(
            std::find(batches.begin(), batches.end(), r.batch) - batches.begin());
        const auto ti = static_cast<std::int64_t>(
            std::find(threads.begin(), threads.end(), r.threads) - threads.begin());
        const double* c = colors[static_cast<std::size_t>(ti % 6)];
        const std::int64_t x0 = mx + 4 + bi * group_w + ti * (bar_w + 2);
        const std::int64_t bar_h =
            static_cast<std::int64_t>(r.median_ms / top * static_cast<double>(h - my - 16));
        for (std::int64_t x = x0; x < x0 + bar_w; ++x)
            for (std::int64_t y = h - my - bar_h; y < h - my; ++y) put(y, x, c[0], c[1], c[2]);
    }
    return reshape(img, {3, h, w});
}

}  // namespace dcv::apps
