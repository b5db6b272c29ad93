#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dcv/core/rng.hpp"
#include "dcv/core/tensor.hpp"
#include "dcv/features.hpp"
#include "dcv/geometry.hpp"

namespace dcv::apps {

namespace detail {

inline std::uint64_t hash_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

// Seeded multi-octave lattice value noise, evaluable at any continuous
// coordinate. Shifted or warped renders of the same field therefore agree
// analytically, which is what makes the synthetic scenes exact ground truth.
class ValueNoise {
public:
    explicit ValueNoise(std::uint64_t seed, int octaves = 5, double base_period = 32.0)
        : seed_(seed), octaves_(octaves), base_period_(base_period) {
        if (octaves < 1) dcv::detail::fail("ValueNoise wants at least one octave");
        if (!(base_period > 1.0)) dcv::detail::fail("ValueNoise wants base_period > 1");
    }

    // Value in [0,1].
    double operator()(double x, double y) const {
        double acc = 0.0, wsum = 0.0, amp = 1.0, period = base_period_;
        for (int o = 0; o < octaves_; ++o) {
            acc += amp * octave(x / period, y / period, static_cast<std::uint64_t>(o));
            wsum += amp;
            amp *= 0.5;
            period *= 0.5;
        }
        return acc / wsum;
    }

private:
    double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t salt) const {
        const std::uint64_t k = static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ull ^
                                static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4full ^
                                detail::hash_mix(seed_ ^ salt);
        return static_cast<double>(detail::hash_mix(k) >> 11) * 0x1.0p-53;
    }

    double octave(double u, double v, std::uint64_t salt) const {
        const double fu = std::floor(u), fv = std::floor(v);
        const std::int64_t ix = static_cast<std::int64_t>(fu), iy = static_cast<std::int64_t>(fv);
        const double tx = u - fu, ty = v - fv;
        const double sx = tx * tx * (3.0 - 2.0 * tx);
        const double sy = ty * ty * (3.0 - 2.0 * ty);
        const double v00 = lattice(ix, iy, salt), v10 = lattice(ix + 1, iy, salt);
        const double v01 = lattice(ix, iy + 1, salt), v11 = lattice(ix + 1, iy + 1, salt);
        const double top = v00 + (v10 - v00) * sx;
        const double bot = v01 + (v11 - v01) * sx;
        return top + (bot - top) * sy;
    }

    std::uint64_t seed_;
    int octaves_;
    double base_period_;
};

// {1,C,H,W} texture; each channel is an independent field of the same seed.
template <typename T>
Tensor<T> render_texture(std::uint64_t seed, std::int64_t c, std::int64_t h, std::int64_t w,
                         int octaves = 5, double base_period = 32.0) {
    dcv::detail::check(c >= 1 && h >= 1 && w >= 1, "render_texture wants positive extents");
    Tensor<T> img = Tensor<T>::zeros({1, c, h, w});
    T* p = img.data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        ValueNoise field(seed + 0x51ed2701u * static_cast<std::uint64_t>(ch + 1), octaves,
                         base_period);
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                p[(ch * h + y) * w + x] =
                    static_cast<T>(field(static_cast<double>(x), static_cast<double>(y)));
    }
    return img;
}

// A grayscale texture and its re-rendering through a random homography whose
// corner displacements stay within max_shift of the image width. h_gt maps
// normalized coordinates of img_b to normalized coordinates of img_a, the
// direction homography_warp consumes, so img_b == homography_warp(img_a, h_gt).
template <typename T>
struct HomographyPair {
    Tensor<T> img_a;   // {1,1,H,W}
    Tensor<T> img_b;   // {1,1,H,W}, zero where mask_b is zero
    Tensor<T> mask_b;  // {1,1,H,W} of 0/1
    Tensor<T> h_gt;    // {3,3}
};

template <typename T>
HomographyPair<T> make_homography_pair(std::uint64_t seed, std::int64_t h, std::int64_t w,
                                       ScalarOf<T> max_shift = ScalarOf<T>(0.1)) {
    dcv::detail::check(h >= 8 && w >= 8, "make_homography_pair wants at least 8x8 images");
    dcv::detail::check(max_shift >= ScalarOf<T>(0) && max_shift < ScalarOf<T>(0.5),
                       "make_homography_pair wants max_shift in [0, 0.5)");
    Rng rng(detail::hash_mix(seed ^ 0x9a0b6335u));
    const T corners[8] = {T(-1), T(-1), T(1), T(-1), T(1), T(1), T(-1), T(1)};
    std::vector<T> src(corners, corners + 8), dst(corners, corners + 8);
    const double sp = static_cast<double>(max_shift) * static_cast<double>(w);
    for (int i = 0; i < 4; ++i) {
        dst[2 * i] += static_cast<T>(rng.uniform(-sp, sp) * 2.0 / static_cast<double>(w));
        dst[2 * i + 1] += static_cast<T>(rng.uniform(-sp, sp) * 2.0 / static_cast<double>(h));
    }
    const auto hv = dcv::detail::dlt_homography<T>(src, dst);
    Tensor<T> h_gt = Tensor<T>::from_data(std::vector<T>(hv.begin(), hv.end()), {3, 3});
    h_gt = h_gt / dcv::detail::entry(h_gt, 2, 2);

    HomographyPair<T> out;
    out.img_a = render_texture<T>(seed, 1, h, w);
    auto warped = homography_warp(out.img_a, h_gt, h, w);
    out.img_b = warped.first * warped.second;
    out.mask_b = warped.second;
    out.h_gt = h_gt;
    return out;
}

// Fronto-parallel textured plane at constant depth, seen by fx-focal cameras
// displaced along x so each view is the reference texture shifted by a whole
// number of pixels. Sampling a rendered view at those shifts is then exact,
// which makes depth_gt the true optimum of the photometric objective.
template <typename T>
struct PlaneScene {
    std::vector<Tensor<T>> views;  // each {1,3,H,W}
    std::vector<PinholeCamera<T>> cameras;
    std::int64_t ref = 0;
    Tensor<T> depth_gt;  // {1,1,H,W}
};

template <typename T>
PlaneScene<T> make_plane_scene(std::uint64_t seed, std::int64_t h = 240, std::int64_t w = 320,
                               ScalarOf<T> depth = ScalarOf<T>(2),
                               std::int64_t max_disparity = 3) {
    dcv::detail::check(h >= 8 && w >= 8, "make_plane_scene wants at least 8x8 images");
    dcv::detail::check(depth > ScalarOf<T>(0), "make_plane_scene wants positive depth");
    dcv::detail::check(max_disparity >= 1 && max_disparity < w / 4,
                       "make_plane_scene disparity out of range");
    const T fx = T(200), fy = T(200);
    const T cx = static_cast<T>(w - 1) / T(2), cy = static_cast<T>(h - 1) / T(2);
    const std::int64_t disp[3] = {0, max_disparity, -max_disparity};

    PlaneScene<T> scene;
    scene.depth_gt = Tensor<T>::full({1, 1, h, w}, T(depth));
    for (int i = 0; i < 3; ++i) {
        Tensor<T> view = Tensor<T>::zeros({1, 3, h, w});
        T* p = view.data();
        for (std::int64_t c = 0; c < 3; ++c) {
            ValueNoise field(seed + 0x51ed2701u * static_cast<std::uint64_t>(c + 1));
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    p[(c * h + y) * w + x] =
                        static_cast<T>(field(static_cast<double>(x + disp[i]),
                                             static_cast<double>(y)));
        }
        Tensor<T> pose = dcv::detail::eye<T>(4);
        pose.data()[3] = static_cast<T>(disp[i]) * T(depth) / fx;
        scene.views.push_back(view);
        scene.cameras.push_back(make_pinhole<T>(fx, fy, cx, cy, pose));
    }
    return scene;
}

}  // namespace dcv::apps
