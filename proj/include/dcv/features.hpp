#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dcv/core/conv.hpp"
#include "dcv/core/ops.hpp"
#include "dcv/core/parallel.hpp"
#include "dcv/core/rng.hpp"
#include "dcv/core/sample.hpp"
#include "dcv/core/tensor.hpp"
#include "dcv/filters.hpp"

namespace dcv {

inline constexpr std::int64_t kSiftPatch = 32;

// Keeps gradient magnitudes and circular means differentiable at zero.
template <typename T>
constexpr T kFeatEps = T(1e-12);

enum class DetectorKind { kHarris, kHessian, kDog };

// One keypoint; the coordinate, response, and orientation entries are scalar
// tensors so gradients can flow back into the image they came from. scale is
// a plain blur level, held fixed by selection.
template <typename T>
struct LocalFeature {
    Tensor<T> x;
    Tensor<T> y;
    Tensor<T> scale;
    Tensor<T> orientation;
    Tensor<T> response;
};

// Column-stacked feature fields, each {K}, for batched patch extraction.
template <typename T>
struct FeatureTensors {
    Tensor<T> x, y, scale, orientation, response;
};

template <typename T>
FeatureTensors<T> pack_features(const std::vector<LocalFeature<T>>& fs) {
    detail::check(!fs.empty(), "pack_features wants at least one feature");
    std::vector<Tensor<T>> xs, ys, sc, ori, re;
    for (const auto& f : fs) {
        xs.push_back(f.x);
        ys.push_back(f.y);
        sc.push_back(f.scale);
        ori.push_back(f.orientation);
        re.push_back(f.response);
    }
    return {stack(xs, 0), stack(ys, 0), stack(sc, 0), stack(ori, 0), stack(re, 0)};
}

template <typename T>
struct ScaleLevel {
    Tensor<T> image;         // {1,1,h,w}
    T sigma;                 // blur level in level-0 pixels
    std::int64_t downscale;  // resolution divisor relative to level 0
};

template <typename T>
struct ScaleSpace {
    std::vector<ScaleLevel<T>> levels;
    std::int64_t per_octave = 3;  // intervals per octave; each octave stores per_octave+1 images
};

namespace detail {

inline std::int64_t gaussian_ksize(double sigma, std::int64_t h, std::int64_t w) {
    std::int64_t k = 2 * static_cast<std::int64_t>(std::ceil(3.0 * sigma)) + 1;
    k = std::max<std::int64_t>(k, 3);
    const std::int64_t side = std::min(h, w);
    if (k > side) k = (side % 2 == 1) ? side : side - 1;
    return k;
}

template <typename T>
Tensor<T> pixel_value(const Tensor<T>& img, std::int64_t y, std::int64_t x) {
    return reshape(slice(slice(img, 2, y, y + 1), 3, x, x + 1), {});
}

}  // namespace detail

// Incremental Gaussian pyramid: per_octave+1 images per octave with sigmas
// spaced by 2^(1/per_octave), each next octave built by subsampling the
// doubled-sigma level. Stops before an octave whose smaller side would drop
// under min_side.
template <typename T>
ScaleSpace<T> make_scale_space(const Tensor<T>& img, std::int64_t per_octave = 3,
                               ScalarOf<T> init_sigma = ScalarOf<T>(1.6),
                               std::int64_t min_side = 32) {
    detail::check(img.rank() == 4 && img.dim(1) == 1, "make_scale_space wants a {N,1,H,W} image");
    detail::check(per_octave >= 1, "make_scale_space wants per_octave >= 1");
    detail::check(init_sigma > ScalarOf<T>(0), "make_scale_space wants a positive sigma");
    detail::check(std::min(img.dim(2), img.dim(3)) >= min_side,
                  "make_scale_space image smaller than min_side " + std::to_string(min_side));

    ScaleSpace<T> ss;
    ss.per_octave = per_octave;
    const T step = std::pow(T(2), T(1) / static_cast<T>(per_octave));
    Tensor<T> base = blur(img, make_gaussian_kernel<T>(
                                   detail::gaussian_ksize(static_cast<double>(init_sigma),
                                                          img.dim(2), img.dim(3)),
                                   init_sigma));
    std::int64_t down = 1;
    while (true) {
        Tensor<T> cur = base;
        T s = init_sigma;  // in this octave's pixels
        ss.levels.push_back({cur, s * static_cast<T>(down), down});
        for (std::int64_t i = 1; i <= per_octave; ++i) {
            const T target = init_sigma * std::pow(step, static_cast<T>(i));
            const T delta = std::sqrt(target * target - s * s);
            cur = blur(cur, make_gaussian_kernel<T>(
                                detail::gaussian_ksize(static_cast<double>(delta), cur.dim(2),
                                                       cur.dim(3)),
                                ScalarOf<T>(delta)));
            s = target;
            ss.levels.push_back({cur, s * static_cast<T>(down), down});
        }
        if (std::min((cur.dim(2) + 1) / 2, (cur.dim(3) + 1) / 2) < min_side) break;
        base = subsample2(cur);  // sigma 2*init in old pixels reads as init in new ones
        down *= 2;
    }
    return ss;
}

// harris: det - 0.04 trace^2 of the blurred structure tensor; hessian: det of
// the second-derivative matrix; dog: band-pass between two Gaussian blurs.
template <typename T>
Tensor<T> detector_response(const Tensor<T>& img, DetectorKind kind) {
    detail::check(img.rank() == 4, "detector_response wants {N,1,H,W}");
    detail::check(img.dim(1) == 1, "detector_response wants grayscale input, got " +
                                       std::to_string(img.dim(1)) + " channels");
    switch (kind) {
        case DetectorKind::kHarris: {
            auto g = spatial_gradient(img);
            auto ix = reshape(slice(g, 2, 0, 1), img.shape());
            auto iy = reshape(slice(g, 2, 1, 2), img.shape());
            auto k = make_gaussian_kernel<T>(5, ScalarOf<T>(1));
            auto sxx = blur(ix * ix, k);
            auto syy = blur(iy * iy, k);
            auto sxy = blur(ix * iy, k);
            return sxx * syy - square(sxy) - T(0.04) * square(sxx + syy);
        }
        case DetectorKind::kHessian: {
            auto g = spatial_gradient(img, 2);
            auto dxx = reshape(slice(g, 2, 0, 1), img.shape());
            auto dxy = reshape(slice(g, 2, 1, 2), img.shape());
            auto dyy = reshape(slice(g, 2, 2, 3), img.shape());
            return dxx * dyy - square(dxy);
        }
        case DetectorKind::kDog: {
            auto fine = blur(img, make_gaussian_kernel<T>(
                                      detail::gaussian_ksize(1.0, img.dim(2), img.dim(3)),
                                      ScalarOf<T>(1)));
            auto coarse = blur(img, make_gaussian_kernel<T>(
                                        detail::gaussian_ksize(1.6, img.dim(2), img.dim(3)),
                                        ScalarOf<T>(1.6)));
            return coarse - fine;
        }
    }
    detail::fail("detector_response: unknown kind");
}

// Softmax-weighted expected coordinates over the last two axes; returns
// (x, y) tensors shaped like the leading axes.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> softargmax2d(const Tensor<T>& patch, ScalarOf<T> temperature) {
    detail::check(patch.rank() >= 2, "softargmax2d wants at least 2 axes");
    detail::check(temperature > ScalarOf<T>(0), "softargmax2d temperature must be positive");
    const std::int64_t r = patch.rank(), h = patch.dim(r - 2), w = patch.dim(r - 1);
    Tensor<T> xs = Tensor<T>::zeros({h, w});
    Tensor<T> ys = Tensor<T>::zeros({h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            xs.data()[y * w + x] = static_cast<T>(x);
            ys.data()[y * w + x] = static_cast<T>(y);
        }
    auto q = exp((patch - detach(reduce_max(patch, {r - 2, r - 1}, true))) / temperature);
    auto s = sum(q, {r - 2, r - 1});
    return {sum(q * xs, {r - 2, r - 1}) / s, sum(q * ys, {r - 2, r - 1}) / s};
}

template <typename T>
struct FeatureSelection {
    std::vector<LocalFeature<T>> features;
    bool complete = true;  // false when fewer than k maxima exist
};

namespace detail {

template <typename T>
struct NmsCandidate {
    T value;
    std::int64_t level, y, x;
};

template <typename T>
void check_nms_args(const ScaleSpace<T>& resp, std::int64_t k, std::int64_t window,
                    ScalarOf<T> temperature) {
    check(k >= 1, "soft_nms_select wants k >= 1");
    check(window >= 3 && window % 2 == 1, "soft_nms_select window must be odd and >= 3");
    check(temperature > ScalarOf<T>(0), "soft_nms_select temperature must be positive");
    check(!resp.levels.empty(), "soft_nms_select wants a non-empty scale space");
    for (const auto& lvl : resp.levels)
        check(lvl.image.rank() == 4 && lvl.image.dim(0) == 1 && lvl.image.dim(1) == 1,
              "soft_nms_select wants {1,1,h,w} response levels");
}

// Strict local maxima over space and adjacent in-octave scales, best first;
// ties break toward the earlier level, then row-major position.
template <typename T>
std::vector<NmsCandidate<T>> nms_candidates(const ScaleSpace<T>& resp, std::int64_t window) {
    const std::int64_t r = window / 2;
    const std::int64_t nlev = static_cast<std::int64_t>(resp.levels.size());
    std::vector<NmsCandidate<T>> cands;
    for (std::int64_t l = 0; l < nlev; ++l) {
        const auto& lvl = resp.levels[static_cast<std::size_t>(l)];
        const std::int64_t h = lvl.image.dim(2), w = lvl.image.dim(3);
        if (h < window || w < window) continue;
        const T* p = lvl.image.data();
        auto same_octave = [&](std::int64_t o) {
            return o >= 0 && o < nlev &&
                   resp.levels[static_cast<std::size_t>(o)].downscale == lvl.downscale;
        };
        for (std::int64_t y = r; y < h - r; ++y)
            for (std::int64_t x = r; x < w - r; ++x) {
                const T c = p[y * w + x];
                bool is_max = true;
                for (std::int64_t dy = -1; dy <= 1 && is_max; ++dy)
                    for (std::int64_t dx = -1; dx <= 1 && is_max; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        if (!(c > p[(y + dy) * w + (x + dx)])) is_max = false;
                    }
                for (std::int64_t dl : {std::int64_t(-1), std::int64_t(1)}) {
                    if (!is_max) break;
                    if (!same_octave(l + dl)) continue;
                    if (!(c > resp.levels[static_cast<std::size_t>(l + dl)].image.data()[y * w + x]))
                        is_max = false;
                }
                if (is_max) cands.push_back({c, l, y, x});
            }
    }
    std::sort(cands.begin(), cands.end(), [](const NmsCandidate<T>& a, const NmsCandidate<T>& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.level != b.level) return a.level < b.level;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return cands;
}

}  // namespace detail

// Top-k strict local maxima over space and adjacent in-octave scales, each
// refined by softargmax2d on its window. The ranking is decided on values and
// held fixed; the refined coordinates and responses stay differentiable.
template <typename T>
FeatureSelection<T> soft_nms_select(const ScaleSpace<T>& resp, std::int64_t k,
                                    std::int64_t window = 5,
                                    ScalarOf<T> temperature = ScalarOf<T>(0.05)) {
    detail::check_nms_args(resp, k, window, temperature);
    const std::int64_t r = window / 2;
    auto cands = detail::nms_candidates(resp, window);

    FeatureSelection<T> out;
    out.complete = static_cast<std::int64_t>(cands.size()) >= k;
    const std::int64_t take = std::min<std::int64_t>(k, static_cast<std::int64_t>(cands.size()));
    for (std::int64_t i = 0; i < take; ++i) {
        const auto& c = cands[static_cast<std::size_t>(i)];
        const auto& lvl = resp.levels[static_cast<std::size_t>(c.level)];
        auto patch = reshape(slice(slice(lvl.image, 2, c.y - r, c.y + r + 1), 3, c.x - r, c.x + r + 1),
                             {window, window});
        auto [sx, sy] = softargmax2d(patch, temperature);
        const T d = static_cast<T>(lvl.downscale);
        LocalFeature<T> f;
        f.x = (sx + static_cast<T>(c.x - r)) * d;
        f.y = (sy + static_cast<T>(c.y - r)) * d;
        f.scale = Tensor<T>::scalar(lvl.sigma);
        f.orientation = Tensor<T>::scalar(T(0));
        f.response = detail::pixel_value(lvl.image, c.y, c.x);
        out.features.push_back(std::move(f));
    }
    return out;
}

namespace detail {

// Batched window refinement for selected maxima: one node over all response
// levels instead of per-feature softargmax graphs. Row i of the {K,3} output
// is (x, y, response) in the feature's own level pixels, with the softargmax
// math of softargmax2d applied to its window.
template <typename T>
Tensor<T> nms_refine(const ScaleSpace<T>& resp, const std::vector<NmsCandidate<T>>& picks,
                     std::int64_t window, ScalarOf<T> temperature) {
    const std::int64_t k = static_cast<std::int64_t>(picks.size());
    const std::int64_t r = window / 2;
    const T tau = temperature;

    Tensor<T> out = Tensor<T>::zeros({k, 3});
    for (std::int64_t i = 0; i < k; ++i) {
        const auto& c = picks[static_cast<std::size_t>(i)];
        const auto& img = resp.levels[static_cast<std::size_t>(c.level)].image;
        const std::int64_t w = img.dim(3);
        const T* p = img.data();
        T mx = -std::numeric_limits<T>::infinity();
        for (std::int64_t dy = -r; dy <= r; ++dy)
            for (std::int64_t dx = -r; dx <= r; ++dx)
                mx = std::max(mx, p[(c.y + dy) * w + (c.x + dx)]);
        T s = T(0), sx = T(0), sy = T(0);
        for (std::int64_t dy = -r; dy <= r; ++dy)
            for (std::int64_t dx = -r; dx <= r; ++dx) {
                const T q = std::exp((p[(c.y + dy) * w + (c.x + dx)] - mx) / tau);
                s += q;
                sx += q * static_cast<T>(dx + r);
                sy += q * static_cast<T>(dy + r);
            }
        out.data()[i * 3] = sx / s + static_cast<T>(c.x - r);
        out.data()[i * 3 + 1] = sy / s + static_cast<T>(c.y - r);
        out.data()[i * 3 + 2] = p[c.y * w + c.x];
    }

    Graph<T>* g = nullptr;
    for (const auto& lvl : resp.levels)
        if (lvl.image.on_graph()) {
            g = lvl.image.graph();
            break;
        }
    if (!g) return out;

    std::vector<int> parents;
    std::vector<Tensor<T>> imgs;
    parents.reserve(resp.levels.size());
    imgs.reserve(resp.levels.size());
    for (const auto& lvl : resp.levels) {
        parents.push_back(detail::node_or_negative(lvl.image));
        imgs.push_back(lvl.image);
    }
    auto picks_copy = picks;
    const int node = g->record(out.shape(), parents,
                               [=](const Tensor<T>& gout, GradSink<T>& sink) {
        std::vector<Tensor<T>> glev(imgs.size());
        for (std::size_t l = 0; l < imgs.size(); ++l)
            if (parents[l] >= 0) glev[l] = Tensor<T>::zeros(imgs[l].shape());
        const T* pg = gout.data();
        for (std::int64_t i = 0; i < k; ++i) {
            const auto& c = picks_copy[static_cast<std::size_t>(i)];
            const std::size_t li = static_cast<std::size_t>(c.level);
            if (parents[li] < 0) continue;
            const std::int64_t w = imgs[li].dim(3);
            const T* p = imgs[li].data();
            T* q = glev[li].data();
            const T gx = pg[i * 3], gy = pg[i * 3 + 1], gr = pg[i * 3 + 2];
            q[c.y * w + c.x] += gr;
            if (gx == T(0) && gy == T(0)) continue;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::int64_t dy = -r; dy <= r; ++dy)
                for (std::int64_t dx = -r; dx <= r; ++dx)
                    mx = std::max(mx, p[(c.y + dy) * w + (c.x + dx)]);
            T s = T(0), sx = T(0), sy = T(0);
            for (std::int64_t dy = -r; dy <= r; ++dy)
                for (std::int64_t dx = -r; dx <= r; ++dx) {
                    const T qv = std::exp((p[(c.y + dy) * w + (c.x + dx)] - mx) / tau);
                    s += qv;
                    sx += qv * static_cast<T>(dx + r);
                    sy += qv * static_cast<T>(dy + r);
                }
            const T ex = sx / s, ey = sy / s;
            for (std::int64_t dy = -r; dy <= r; ++dy)
                for (std::int64_t dx = -r; dx <= r; ++dx) {
                    const T qv = std::exp((p[(c.y + dy) * w + (c.x + dx)] - mx) / tau);
                    const T coef = qv / (tau * s);
                    q[(c.y + dy) * w + (c.x + dx)] +=
                        gx * coef * (static_cast<T>(dx + r) - ex) +
                        gy * coef * (static_cast<T>(dy + r) - ey);
                }
        }
        for (std::size_t l = 0; l < imgs.size(); ++l)
            if (parents[l] >= 0) sink.add(parents[l], std::move(glev[l]));
    });
    out.attach(g, node, g->epoch());
    return out;
}

}  // namespace detail

template <typename T>
struct BatchSelection {
    FeatureTensors<T> features;
    bool complete = true;
};

// soft_nms_select with the per-feature refinement fused into one node, for
// feature counts where scalar graphs per keypoint would dominate the tape.
// Agrees with soft_nms_select + pack_features bit for bit.
template <typename T>
BatchSelection<T> soft_nms_select_batch(const ScaleSpace<T>& resp, std::int64_t k,
                                        std::int64_t window = 5,
                                        ScalarOf<T> temperature = ScalarOf<T>(0.05)) {
    detail::check_nms_args(resp, k, window, temperature);
    auto cands = detail::nms_candidates(resp, window);
    const bool complete = static_cast<std::int64_t>(cands.size()) >= k;
    const std::int64_t take = std::min<std::int64_t>(k, static_cast<std::int64_t>(cands.size()));
    detail::check(take >= 1, "soft_nms_select_batch found no local maxima");
    cands.resize(static_cast<std::size_t>(take));

    auto refined = detail::nms_refine(resp, cands, window, temperature);  // {K,3}
    Tensor<T> dvec = Tensor<T>::zeros({take});
    Tensor<T> svec = Tensor<T>::zeros({take});
    for (std::int64_t i = 0; i < take; ++i) {
        const auto& lvl = resp.levels[static_cast<std::size_t>(cands[static_cast<std::size_t>(i)].level)];
        dvec.data()[i] = static_cast<T>(lvl.downscale);
        svec.data()[i] = lvl.sigma;
    }

    BatchSelection<T> out;
    out.complete = complete;
    out.features.x = reshape(slice(refined, 1, 0, 1), {take}) * dvec;
    out.features.y = reshape(slice(refined, 1, 1, 2), {take}) * dvec;
    out.features.scale = svec;
    out.features.orientation = Tensor<T>::zeros({take});
    out.features.response = reshape(slice(refined, 1, 2, 3), {take});
    return out;
}

namespace detail {

// Per-pixel circular triangular binning: the two bins adjacent to the angle
// split the weight linearly. Shared by the forward and backward passes.
template <typename T>
void bin_split(T a, std::int64_t bins, T delta, std::int64_t& b0, std::int64_t& b1, T& f) {
    constexpr T tau = T(2) * std::numbers::pi_v<T>;
    T t = (a < T(0) ? a + tau : a) / delta;
    if (t >= static_cast<T>(bins)) t -= static_cast<T>(bins);
    if (!(t >= T(0))) t = T(0);
    b0 = static_cast<std::int64_t>(t);
    if (b0 >= bins) b0 = bins - 1;
    f = t - static_cast<T>(b0);
    b1 = b0 + 1 == bins ? 0 : b0 + 1;
}

// Magnitude/angle pair of one gradient pixel. Vanishing gradients get a unit
// bump on the x component so the angle and its backward stay finite there;
// the bump is treated as data, never differentiated.
template <typename T>
struct PixGrad {
    T ix, iy, ixb, mag, ang;
};

template <typename T>
PixGrad<T> pix_grad(T ix, T iy) {
    const T g2 = ix * ix + iy * iy;
    const T ixb = g2 < T(1e-18) ? ix + T(1) : ix;
    return {ix, iy, ixb, std::sqrt(g2 + kFeatEps<T>), std::atan2(iy, ixb)};
}

// Triangular angular histogram moments of a gradient stack {K,1,2,S,S}
// (x plane then y plane, as spatial_gradient emits), against fixed spatial
// footprints {S*S,M}:
//   out[k, b*M + j] = sum_p |grad[k,p]| * weights[p,j] * tri_b(angle[k,p])
// with tri_b the circular hat of width 2pi/bins around center b*2pi/bins.
// Magnitude, angle, binning, and contraction happen in one pass, so nothing
// patch-sized beyond the input gradients ever hits the tape.
template <typename T>
Tensor<T> angular_moments(const Tensor<T>& grad, const Tensor<T>& weights, std::int64_t bins) {
    check(grad.rank() == 5 && grad.dim(1) == 1 && grad.dim(2) == 2,
          "angular_moments wants gradients {K,1,2,S,S}");
    const std::int64_t n = grad.dim(0), sp = grad.dim(3) * grad.dim(4);
    check(weights.rank() == 2 && weights.dim(0) == sp, "angular_moments weights must be {S*S,M}");
    check(bins >= 2, "angular_moments wants bins >= 2");
    const std::int64_t m = weights.dim(1);
    const T delta = T(2) * std::numbers::pi_v<T> / static_cast<T>(bins);
    const std::int64_t grain = std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, sp * m));

    Tensor<T> out = Tensor<T>::zeros({n, bins * m});
    Tensor<T> angles = Tensor<T>::zeros({n, sp});  // cached for the backward pass
    {
        const T* pg = grad.data();
        const T* pw = weights.data();
        T* po = out.data();
        T* pang = angles.data();
        parallel_for(n, [&](std::int64_t k0, std::int64_t k1) {
            for (std::int64_t k = k0; k < k1; ++k) {
                const T* gx = pg + k * 2 * sp;
                const T* gy = gx + sp;
                T* row = po + k * bins * m;
                for (std::int64_t p = 0; p < sp; ++p) {
                    const auto px = pix_grad(gx[p], gy[p]);
                    pang[k * sp + p] = px.ang;
                    std::int64_t b0, b1;
                    T f;
                    bin_split(px.ang, bins, delta, b0, b1, f);
                    const T v0 = px.mag * (T(1) - f), v1 = px.mag * f;
                    const T* wrow = pw + p * m;
                    T* r0 = row + b0 * m;
                    T* r1 = row + b1 * m;
                    for (std::int64_t j = 0; j < m; ++j) {
                        r0[j] += v0 * wrow[j];
                        r1[j] += v1 * wrow[j];
                    }
                }
            }
        }, grain);
    }

    const int ng = node_or_negative(grad);
    return record_op<T>(std::move(out), {&grad}, [=](const Tensor<T>& g, GradSink<T>& sink) {
        if (ng < 0) return;
        const T* pg = g.data();
        const T* pv = grad.data();
        const T* pw = weights.data();
        const T* pang = angles.data();
        Tensor<T> gout = Tensor<T>::zeros(grad.shape());
        T* q = gout.data();
        parallel_for(n, [&](std::int64_t k0, std::int64_t k1) {
            for (std::int64_t k = k0; k < k1; ++k) {
                const T* vx = pv + k * 2 * sp;
                const T* vy = vx + sp;
                T* qx = q + k * 2 * sp;
                T* qy = qx + sp;
                const T* grow = pg + k * bins * m;
                for (std::int64_t p = 0; p < sp; ++p) {
                    const T ix = vx[p], iy = vy[p];
                    const T g2 = ix * ix + iy * iy;
                    const T ixb = g2 < T(1e-18) ? ix + T(1) : ix;
                    const T mag = std::sqrt(g2 + kFeatEps<T>);
                    std::int64_t b0, b1;
                    T f;
                    bin_split(pang[k * sp + p], bins, delta, b0, b1, f);
                    const T* wrow = pw + p * m;
                    const T* g0 = grow + b0 * m;
                    const T* g1 = grow + b1 * m;
                    T acc0 = T(0), acc1 = T(0);
                    for (std::int64_t j = 0; j < m; ++j) {
                        acc0 += wrow[j] * g0[j];
                        acc1 += wrow[j] * g1[j];
                    }
                    const T dmag = acc0 * (T(1) - f) + acc1 * f;
                    const T dang = mag * (acc1 - acc0) / delta;
                    const T den = ixb * ixb + iy * iy;
                    qx[p] = dmag * (ix / mag) - dang * (iy / den);
                    qy[p] = dmag * (iy / mag) + dang * (ixb / den);
                }
            }
        }, grain);
        sink.add(ng, std::move(gout));
    });
}

// Total squared gradient energy per patch, as data (no tape).
template <typename T>
Tensor<T> gradient_energy(const Tensor<T>& grad) {
    check(grad.rank() == 5 && grad.dim(1) == 1 && grad.dim(2) == 2,
          "gradient_energy wants gradients {K,1,2,S,S}");
    const std::int64_t n = grad.dim(0), sp = grad.dim(3) * grad.dim(4);
    Tensor<T> out = Tensor<T>::zeros({n});
    const T* pg = grad.data();
    for (std::int64_t k = 0; k < n; ++k) {
        T acc = T(0);
        for (std::int64_t p = 0; p < 2 * sp; ++p) {
            const T v = pg[k * 2 * sp + p];
            acc += v * v;
        }
        out.data()[k] = acc;
    }
    return out;
}

}  // namespace detail

// Gaussian-weighted 36-bin gradient histogram with triangular circular
// binning, read out as the circular mean of a sharpened softmax. Patches with
// no gradient signal report orientation 0.
template <typename T>
Tensor<T> dominant_orientation(const Tensor<T>& patches) {
    detail::check(patches.rank() == 4 && patches.dim(1) == 1 && patches.dim(2) == patches.dim(3),
                  "dominant_orientation wants square {K,1,S,S} grayscale patches");
    detail::check(patches.dim(2) >= 3, "dominant_orientation wants patches of side >= 3");
    constexpr std::int64_t bins = 36;
    constexpr T pi = std::numbers::pi_v<T>;
    const std::int64_t s = patches.dim(2);

    auto grad = spatial_gradient(patches);

    // gaussian window folded into the binning footprint
    Tensor<T> wg = Tensor<T>::zeros({s * s, 1});
    const T c = static_cast<T>(s - 1) / T(2);
    const T inv2s2 = T(1) / (T(2) * (static_cast<T>(s) / T(2)) * (static_cast<T>(s) / T(2)));
    for (std::int64_t y = 0; y < s; ++y)
        for (std::int64_t x = 0; x < s; ++x) {
            const T dx = static_cast<T>(x) - c, dy = static_cast<T>(y) - c;
            wg.data()[y * s + x] = std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
    auto h = detail::angular_moments(grad, wg, bins);  // {K,36}

    const T delta = T(2) * pi / static_cast<T>(bins);

    // the max scales the sharpening, so its gradient path stays live
    auto q = exp(h / (reduce_max(h, {1}, true) + kFeatEps<T>) * T(8));
    q = q / sum(q, {1}, true);
    Tensor<T> sin_c = Tensor<T>::zeros({1, bins});
    Tensor<T> cos_c = Tensor<T>::zeros({1, bins});
    for (std::int64_t b = 0; b < bins; ++b) {
        sin_c.data()[b] = std::sin(static_cast<T>(b) * delta);
        cos_c.data()[b] = std::cos(static_cast<T>(b) * delta);
    }
    auto ori = atan2(sum(q * sin_c, {1}), sum(q * cos_c, {1}) + kFeatEps<T>);
    ori = ori + detail::vmap(ori, [](T v) { return v < T(0) ? T(2) * pi : T(0); });
    // adding 2*pi to a tiny negative can round up to exactly 2*pi
    ori = ori - detail::vmap(ori, [](T v) { return v >= T(2) * pi ? T(2) * pi : T(0); });

    // flat patches carry no direction; pin them to 0 by convention
    auto flat = detail::vmap(detail::gradient_energy(grad),
                             [](T v) { return v < T(1e-16) ? T(1) : T(0); });
    return ori * (T(1) - flat);
}

namespace detail {

// Rotated/scaled sampling grid around each feature, {K,size,size,2} in
// normalized coordinates, built in one pass with accumulation directly into
// the per-feature parameters on the way back.
template <typename T>
Tensor<T> oriented_grid(const FeatureTensors<T>& f, std::int64_t size, ScalarOf<T> radius_scale,
                        std::int64_t h, std::int64_t w) {
    const std::int64_t k = f.x.dim(0), sp = size * size;
    std::vector<T> ox(static_cast<std::size_t>(sp)), oy(static_cast<std::size_t>(sp));
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
            ox[static_cast<std::size_t>(y * size + x)] =
                static_cast<T>(2 * x - (size - 1)) / static_cast<T>(size);
            oy[static_cast<std::size_t>(y * size + x)] =
                static_cast<T>(2 * y - (size - 1)) / static_cast<T>(size);
        }

    Tensor<T> grid = Tensor<T>::zeros({k, size, size, 2});
    {
        const T* fx = f.x.data();
        const T* fy = f.y.data();
        const T* fs = f.scale.data();
        const T* fo = f.orientation.data();
        T* pg = grid.data();
        parallel_for(k, [&](std::int64_t k0, std::int64_t k1) {
            for (std::int64_t i = k0; i < k1; ++i) {
                const T cs = std::cos(fo[i]), sn = std::sin(fo[i]);
                const T rad = fs[i] * radius_scale;
                T* row = pg + i * sp * 2;
                for (std::int64_t p = 0; p < sp; ++p) {
                    const std::size_t u = static_cast<std::size_t>(p);
                    const T px = fx[i] + rad * (cs * ox[u] - sn * oy[u]);
                    const T py = fy[i] + rad * (sn * ox[u] + cs * oy[u]);
                    row[2 * p] = (px * T(2) + T(1)) / static_cast<T>(w) - T(1);
                    row[2 * p + 1] = (py * T(2) + T(1)) / static_cast<T>(h) - T(1);
                }
            }
        }, std::max<std::int64_t>(1, 8192 / std::max<std::int64_t>(1, sp)));
    }

    const int nx = node_or_negative(f.x);
    const int ny = node_or_negative(f.y);
    const int ns = node_or_negative(f.scale);
    const int no = node_or_negative(f.orientation);
    auto fs_t = f.scale;
    auto fo_t = f.orientation;
    return record_op<T>(std::move(grid), {&f.x, &f.y, &f.scale, &f.orientation},
                        [=](const Tensor<T>& g, GradSink<T>& sink) {
        const T* pg = g.data();
        const T* fs = fs_t.data();
        const T* fo = fo_t.data();
        Tensor<T> gx_acc = Tensor<T>::zeros({k});
        Tensor<T> gy_acc = Tensor<T>::zeros({k});
        Tensor<T> gs_acc = Tensor<T>::zeros({k});
        Tensor<T> go_acc = Tensor<T>::zeros({k});
        parallel_for(k, [&](std::int64_t k0, std::int64_t k1) {
            for (std::int64_t i = k0; i < k1; ++i) {
                const T cs = std::cos(fo[i]), sn = std::sin(fo[i]);
                const T rad = fs[i] * radius_scale;
                const T* row = pg + i * sp * 2;
                T ax = T(0), ay = T(0), ar = T(0), ao = T(0);
                for (std::int64_t p = 0; p < sp; ++p) {
                    const std::size_t u = static_cast<std::size_t>(p);
                    const T dpx = row[2 * p] * (T(2) / static_cast<T>(w));
                    const T dpy = row[2 * p + 1] * (T(2) / static_cast<T>(h));
                    ax += dpx;
                    ay += dpy;
                    ar += dpx * (cs * ox[u] - sn * oy[u]) + dpy * (sn * ox[u] + cs * oy[u]);
                    ao += dpx * rad * (-sn * ox[u] - cs * oy[u]) +
                          dpy * rad * (cs * ox[u] - sn * oy[u]);
                }
                gx_acc.data()[i] = ax;
                gy_acc.data()[i] = ay;
                gs_acc.data()[i] = ar * radius_scale;
                go_acc.data()[i] = ao;
            }
        }, std::max<std::int64_t>(1, 8192 / std::max<std::int64_t>(1, sp)));
        if (nx >= 0) sink.add(nx, std::move(gx_acc));
        if (ny >= 0) sink.add(ny, std::move(gy_acc));
        if (ns >= 0) sink.add(ns, std::move(gs_acc));
        if (no >= 0) sink.add(no, std::move(go_acc));
    });
}

}  // namespace detail

// Rotated square patches around each feature, sampled bilinearly; the window
// half-side is radius_scale times the feature scale. Gradients flow into the
// image and into the feature coordinates, scale, and orientation.
template <typename T>
Tensor<T> extract_oriented_patches(const Tensor<T>& img, const FeatureTensors<T>& f,
                                   std::int64_t size = kSiftPatch,
                                   ScalarOf<T> radius_scale = ScalarOf<T>(6)) {
    detail::check(img.rank() == 4 && img.dim(0) == 1 && img.dim(1) == 1,
                  "extract_oriented_patches wants a {1,1,H,W} image");
    detail::check(size >= 2, "extract_oriented_patches wants size >= 2");
    detail::check(radius_scale > ScalarOf<T>(0), "extract_oriented_patches wants a positive radius");
    return grid_sample_bilinear(
        img, detail::oriented_grid(f, size, radius_scale, img.dim(2), img.dim(3)));
}

// 4x4 spatial cells x 8 orientation bins with bilinear soft assignment in
// space and angle and a Gaussian spatial window, then L2 normalize, clamp at
// 0.2, renormalize. Gradient-free patches fall back to a uniform descriptor.
template <typename T>
Tensor<T> sift_describe(const Tensor<T>& patches) {
    detail::check(patches.rank() == 4 && patches.dim(1) == 1 &&
                      patches.dim(2) == kSiftPatch && patches.dim(3) == kSiftPatch,
                  "sift_describe wants {K,1,32,32} patches, got " +
                      detail::shape_str(patches.shape()));
    constexpr std::int64_t s = kSiftPatch, cells = 4, bins = 8;
    const std::int64_t n = patches.dim(0);

    auto grad = spatial_gradient(patches);

    // fixed spatial footprint: gaussian window times cell triangles, {s*s,16}
    const T cw = static_cast<T>(s) / static_cast<T>(cells);
    const T center = static_cast<T>(s - 1) / T(2);
    const T sig = static_cast<T>(s) / T(2);
    Tensor<T> footprint = Tensor<T>::zeros({s * s, cells * cells});
    for (std::int64_t y = 0; y < s; ++y)
        for (std::int64_t x = 0; x < s; ++x) {
            const T g = std::exp(-((static_cast<T>(x) - center) * (static_cast<T>(x) - center) +
                                   (static_cast<T>(y) - center) * (static_cast<T>(y) - center)) /
                                 (T(2) * sig * sig));
            for (std::int64_t cy = 0; cy < cells; ++cy)
                for (std::int64_t cx = 0; cx < cells; ++cx) {
                    const T ccy = cw * static_cast<T>(cy) + (cw - T(1)) / T(2);
                    const T ccx = cw * static_cast<T>(cx) + (cw - T(1)) / T(2);
                    const T wy = std::max(T(0), T(1) - std::abs(static_cast<T>(y) - ccy) / cw);
                    const T wx = std::max(T(0), T(1) - std::abs(static_cast<T>(x) - ccx) / cw);
                    footprint.data()[(y * s + x) * cells * cells + cy * cells + cx] = g * wy * wx;
                }
        }

    auto d = detail::angular_moments(grad, footprint, bins);  // {K,128}, bin-major

    auto n1 = sqrt(sum(square(d), {1}, true) + kFeatEps<T>);
    auto clipped = minimum(d / n1, ScalarOf<T>(0.2));
    auto n2 = sqrt(sum(square(clipped), {1}, true) + kFeatEps<T>);
    auto out = clipped / n2;

    auto flat = detail::vmap(reshape(detail::gradient_energy(grad), {n, 1}),
                             [](T v) { return v < T(1e-16) ? T(1) : T(0); });
    const T uniform = T(1) / std::sqrt(static_cast<T>(cells * cells * bins));
    return out * (T(1) - flat) + flat * uniform;
}

enum class MatchPolicy { kMutual, kMutualRatio };

template <typename T>
struct Match {
    std::int64_t a;
    std::int64_t b;
    T distance;
};

// Mutual nearest neighbors by L2 descriptor distance, optionally filtered by
// the ratio to the second-nearest candidate. Ties keep the lower index.
template <typename T>
std::vector<Match<T>> match_descriptors(const Tensor<T>& da, const Tensor<T>& db,
                                        MatchPolicy policy = MatchPolicy::kMutual,
                                        ScalarOf<T> ratio = ScalarOf<T>(0.8)) {
    detail::check(da.rank() == 2 && db.rank() == 2 && da.dim(1) == db.dim(1),
                  "match_descriptors wants {K,D} sets with equal D");
    detail::check(ratio > ScalarOf<T>(0) && ratio <= ScalarOf<T>(1),
                  "match_descriptors ratio must lie in (0,1]");
    const std::int64_t k1 = da.dim(0), k2 = db.dim(0);
    if (k1 == 0 || k2 == 0) return {};

    auto dots = matmul(detach(da), transpose_last2(detach(db)));
    auto na = sum(square(detach(da)), {1});
    auto nb = sum(square(detach(db)), {1});
    auto d2 = [&](std::int64_t i, std::int64_t j) {
        return std::max(T(0), na.data()[i] + nb.data()[j] - T(2) * dots.data()[i * k2 + j]);
    };

    std::vector<std::int64_t> nn1(static_cast<std::size_t>(k1)), nn2(static_cast<std::size_t>(k2));
    std::vector<T> best1(static_cast<std::size_t>(k1)), second1(static_cast<std::size_t>(k1));
    parallel_for(k1, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) {
            T b1 = std::numeric_limits<T>::infinity(), b2 = b1;
            std::int64_t bj = 0;
            for (std::int64_t j = 0; j < k2; ++j) {
                const T d = d2(i, j);
                if (d < b1) {
                    b2 = b1;
                    b1 = d;
                    bj = j;
                } else if (d < b2) {
                    b2 = d;
                }
            }
            nn1[static_cast<std::size_t>(i)] = bj;
            best1[static_cast<std::size_t>(i)] = b1;
            second1[static_cast<std::size_t>(i)] = b2;
        }
    }, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, k2)));
    parallel_for(k2, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t j = lo; j < hi; ++j) {
            T b1 = std::numeric_limits<T>::infinity();
            std::int64_t bi = 0;
            for (std::int64_t i = 0; i < k1; ++i) {
                const T d = d2(i, j);
                if (d < b1) {
                    b1 = d;
                    bi = i;
                }
            }
            nn2[static_cast<std::size_t>(j)] = bi;
        }
    }, std::max<std::int64_t>(1, 16384 / std::max<std::int64_t>(1, k1)));

    std::vector<Match<T>> out;
    for (std::int64_t i = 0; i < k1; ++i) {
        const std::int64_t j = nn1[static_cast<std::size_t>(i)];
        if (nn2[static_cast<std::size_t>(j)] != i) continue;
        const T d1 = std::sqrt(best1[static_cast<std::size_t>(i)]);
        if (policy == MatchPolicy::kMutualRatio && k2 >= 2) {
            const T d2nd = std::sqrt(second1[static_cast<std::size_t>(i)]);
            if (d1 > ratio * d2nd) continue;
        }
        out.push_back({i, j, d1});
    }
    return out;
}

namespace detail {

// Similarity transform taking the points to centroid 0, mean norm sqrt(2);
// returns {sx, sy, tx, ty} acting as x' = sx*x + tx.
template <typename T>
std::array<T, 4> hartley_norm(const std::vector<T>& pts) {
    const std::size_t n = pts.size() / 2;
    T mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += pts[2 * i];
        my += pts[2 * i + 1];
    }
    mx /= static_cast<T>(n);
    my /= static_cast<T>(n);
    T md = 0;
    for (std::size_t i = 0; i < n; ++i)
        md += std::hypot(pts[2 * i] - mx, pts[2 * i + 1] - my);
    md /= static_cast<T>(n);
    const T s = md > T(0) ? std::sqrt(T(2)) / md : T(1);
    return {s, s, -s * mx, -s * my};
}

// Smallest-eigenvalue eigenvector of a symmetric 9x9 matrix by cyclic Jacobi.
template <typename T>
std::array<T, 9> min_eigvec9(std::array<std::array<T, 9>, 9> a) {
    std::array<std::array<T, 9>, 9> v{};
    for (int i = 0; i < 9; ++i) v[i][i] = T(1);
    for (int sweep = 0; sweep < 64; ++sweep) {
        T off = 0;
        for (int p = 0; p < 9; ++p)
            for (int q = p + 1; q < 9; ++q) off += a[p][q] * a[p][q];
        if (off < T(1e-26)) break;
        for (int p = 0; p < 9; ++p)
            for (int q = p + 1; q < 9; ++q) {
                if (a[p][q] == T(0)) continue;
                const T theta = (a[q][q] - a[p][p]) / (T(2) * a[p][q]);
                const T t = (theta >= T(0) ? T(1) : T(-1)) /
                            (std::abs(theta) + std::sqrt(theta * theta + T(1)));
                const T c = T(1) / std::sqrt(t * t + T(1));
                const T s = t * c;
                for (int i = 0; i < 9; ++i) {
                    const T aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for (int i = 0; i < 9; ++i) {
                    const T api = a[p][i], aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
                for (int i = 0; i < 9; ++i) {
                    const T vip = v[i][p], viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
    }
    int best = 0;
    for (int i = 1; i < 9; ++i)
        if (a[i][i] < a[best][best]) best = i;
    std::array<T, 9> ev;
    for (int i = 0; i < 9; ++i) ev[static_cast<std::size_t>(i)] = v[i][best];
    return ev;
}

// Direct linear transform on Hartley-normalized correspondences; points are
// flat {x0,y0,x1,y1,...} arrays of equal length.
template <typename T>
std::array<T, 9> dlt_homography(const std::vector<T>& src, const std::vector<T>& dst) {
    const std::size_t n = src.size() / 2;
    const auto ta = hartley_norm(src);
    const auto tb = hartley_norm(dst);
    std::array<std::array<T, 9>, 9> ata{};
    for (std::size_t i = 0; i < n; ++i) {
        const T x = ta[0] * src[2 * i] + ta[2], y = ta[1] * src[2 * i + 1] + ta[3];
        const T u = tb[0] * dst[2 * i] + tb[2], v = tb[1] * dst[2 * i + 1] + tb[3];
        const T r1[9] = {x, y, 1, 0, 0, 0, -u * x, -u * y, -u};
        const T r2[9] = {0, 0, 0, x, y, 1, -v * x, -v * y, -v};
        for (int p = 0; p < 9; ++p)
            for (int q = 0; q < 9; ++q) ata[p][q] += r1[p] * r1[q] + r2[p] * r2[q];
    }
    const auto hn = min_eigvec9(ata);
    // H = Tb^-1 * Hn * Ta, with Tb^-1 analytic for a similarity
    const T ib = T(1) / tb[0];
    const std::array<T, 9> tbi = {ib, 0, -tb[2] * ib, 0, ib, -tb[3] * ib, 0, 0, 1};
    const std::array<T, 9> tam = {ta[0], 0, ta[2], 0, ta[1], ta[3], 0, 0, 1};
    std::array<T, 9> tmp{}, h{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                tmp[static_cast<std::size_t>(3 * i + j)] +=
                    hn[static_cast<std::size_t>(3 * i + k)] * tam[static_cast<std::size_t>(3 * k + j)];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                h[static_cast<std::size_t>(3 * i + j)] +=
                    tbi[static_cast<std::size_t>(3 * i + k)] * tmp[static_cast<std::size_t>(3 * k + j)];
    return h;
}

template <typename T>
bool any_collinear4(const T* p, const std::int64_t idx[4]) {
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
            for (int c = b + 1; c < 4; ++c) {
                const T ux = p[2 * idx[b]] - p[2 * idx[a]], uy = p[2 * idx[b] + 1] - p[2 * idx[a] + 1];
                const T vx = p[2 * idx[c]] - p[2 * idx[a]], vy = p[2 * idx[c] + 1] - p[2 * idx[a] + 1];
                const T span = std::abs(ux) + std::abs(uy) + std::abs(vx) + std::abs(vy);
                if (std::abs(ux * vy - uy * vx) <= T(1e-9) * std::max(T(1), span * span)) return true;
            }
    return false;
}

template <typename T>
T reproj_err2(const std::array<T, 9>& h, T x, T y, T u, T v) {
    const T w = h[6] * x + h[7] * y + h[8];
    if (std::abs(w) < T(1e-12)) return std::numeric_limits<T>::infinity();
    const T px = (h[0] * x + h[1] * y + h[2]) / w;
    const T py = (h[3] * x + h[4] * y + h[5]) / w;
    return (px - u) * (px - u) + (py - v) * (py - v);
}

}  // namespace detail

template <typename T>
struct RansacResult {
    Tensor<T> h;        // {3,3}, scaled so the last entry is 1 where possible
    Tensor<T> inliers;  // {M} of 0/1
    std::int64_t inlier_count = 0;
};

// Classic 4-point RANSAC: seeded sampling, DLT hypotheses, consensus by
// reprojection error, then a least-squares DLT refit on the winning inliers.
// Verification only; nothing here joins the autodiff tape.
template <typename T>
RansacResult<T> ransac_homography(const Tensor<T>& pts_a, const Tensor<T>& pts_b,
                                  std::int64_t iters, ScalarOf<T> inlier_thresh,
                                  std::uint64_t seed = 0) {
    detail::check(pts_a.rank() == 2 && pts_a.dim(1) == 2 && pts_a.shape() == pts_b.shape(),
                  "ransac_homography wants matching {M,2} point sets");
    detail::check(pts_a.dim(0) >= 4, "ransac_homography wants at least 4 correspondences");
    detail::check(iters >= 1 && inlier_thresh > ScalarOf<T>(0),
                  "ransac_homography wants iters >= 1 and a positive threshold");
    const std::int64_t m = pts_a.dim(0);
    const T* pa = pts_a.data();
    const T* pb = pts_b.data();
    const T t2 = inlier_thresh * inlier_thresh;

    Rng rng(seed);
    std::array<T, 9> best_h{};
    std::int64_t best_count = -1;
    std::vector<char> best_mask(static_cast<std::size_t>(m), 0), mask(static_cast<std::size_t>(m));
    for (std::int64_t it = 0; it < iters; ++it) {
        std::int64_t idx[4];
        for (int i = 0; i < 4; ++i) {
            bool fresh;
            do {
                idx[i] = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(m)));
                fresh = true;
                for (int j = 0; j < i; ++j)
                    if (idx[j] == idx[i]) fresh = false;
            } while (!fresh);
        }
        if (detail::any_collinear4(pa, idx) || detail::any_collinear4(pb, idx)) continue;
        std::vector<T> src, dst;
        for (int i = 0; i < 4; ++i) {
            src.push_back(pa[2 * idx[i]]);
            src.push_back(pa[2 * idx[i] + 1]);
            dst.push_back(pb[2 * idx[i]]);
            dst.push_back(pb[2 * idx[i] + 1]);
        }
        const auto h = detail::dlt_homography(src, dst);
        std::int64_t count = 0;
        for (std::int64_t i = 0; i < m; ++i) {
            const bool in = detail::reproj_err2(h, pa[2 * i], pa[2 * i + 1], pb[2 * i],
                                                pb[2 * i + 1]) <= t2;
            mask[static_cast<std::size_t>(i)] = in ? 1 : 0;
            count += in;
        }
        if (count > best_count) {
            best_count = count;
            best_h = h;
            best_mask = mask;
        }
    }
    if (best_count < 4)
        throw std::runtime_error("ransac_homography: no hypothesis reached 4 inliers in " +
                                 std::to_string(iters) + " iterations");

    // least-squares refit on the consensus set
    std::vector<T> src, dst;
    for (std::int64_t i = 0; i < m; ++i)
        if (best_mask[static_cast<std::size_t>(i)]) {
            src.push_back(pa[2 * i]);
            src.push_back(pa[2 * i + 1]);
            dst.push_back(pb[2 * i]);
            dst.push_back(pb[2 * i + 1]);
        }
    auto h = detail::dlt_homography(src, dst);

    RansacResult<T> out;
    out.inliers = Tensor<T>::zeros({m});
    for (std::int64_t i = 0; i < m; ++i) {
        const bool in =
            detail::reproj_err2(h, pa[2 * i], pa[2 * i + 1], pb[2 * i], pb[2 * i + 1]) <= t2;
        out.inliers.data()[i] = in ? T(1) : T(0);
        out.inlier_count += in;
    }
    if (std::abs(h[8]) > T(1e-10)) {
        const T h22 = h[8];
        for (auto& e : h) e /= h22;
    }
    std::vector<T> hv(h.begin(), h.end());
    out.h = Tensor<T>::from_data(std::move(hv), {3, 3});
    return out;
}

}  // namespace dcv
