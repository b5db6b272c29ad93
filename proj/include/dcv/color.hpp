#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "dcv/core/ops.hpp"
#include "dcv/core/tensor.hpp"

namespace dcv {

enum class ColorSpace { kRgb, kBgr, kGray, kHsv, kYcbcr };

enum class Adjust { kBrightness, kContrast, kSaturation, kHue };

namespace detail {

template <typename T>
void check_channels(const Tensor<T>& img, ColorSpace cs) {
    if (img.rank() != 4) fail("color ops expect {N,C,H,W}");
    const std::int64_t want = cs == ColorSpace::kGray ? 1 : 3;
    if (img.dim(1) != want)
        fail("expected " + std::to_string(want) + " channels, got " + std::to_string(img.dim(1)));
}

template <typename T>
Tensor<T> chan(const Tensor<T>& img, std::int64_t i) {
    return slice(img, 1, i, i + 1);
}

}  // namespace detail

// BT.601 luma. The addition order makes the weights sum to exactly 1.
template <typename T>
Tensor<T> rgb_to_gray(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kRgb);
    auto r = detail::chan(img, 0), g = detail::chan(img, 1), b = detail::chan(img, 2);
    return r * T(0.299) + b * T(0.114) + g * T(0.587);
}

template <typename T>
Tensor<T> gray_to_rgb(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kGray);
    return concat({img, img, img}, 1);
}

template <typename T>
Tensor<T> rgb_to_bgr(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kRgb);
    return concat({detail::chan(img, 2), detail::chan(img, 1), detail::chan(img, 0)}, 1);
}

template <typename T>
Tensor<T> bgr_to_rgb(const Tensor<T>& img) {
    return rgb_to_bgr(img);
}

// Hue in radians [0, 2pi). At equal-maxima branch points the gradient follows
// the first matching channel in (r, g, b) order, matching the max tie rule.
template <typename T>
Tensor<T> rgb_to_hsv(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kRgb);
    constexpr T pi = std::numbers::pi_v<T>;
    auto r = detail::chan(img, 0), g = detail::chan(img, 1), b = detail::chan(img, 2);
    auto v = maximum(maximum(r, g), b);
    auto mn = minimum(minimum(r, g), b);
    auto c = v - mn;

    auto c0 = detail::vmap(c, [](T x) { return x == T(0) ? T(1) : T(0); });
    auto v0 = detail::vmap(v, [](T x) { return x == T(0) ? T(1) : T(0); });
    auto safe_c = c + c0;
    auto safe_v = v + v0;

    auto mr = detail::ge_mask(r, g) * detail::ge_mask(r, b);
    auto mg = (T(1) - mr) * detail::ge_mask(g, b);
    auto mb = T(1) - mr - mg;

    auto hr = (g - b) / safe_c;
    hr = hr + detail::vmap(hr, [](T x) { return x < T(0) ? T(1) : T(0); }) * T(6);
    auto hg = (b - r) / safe_c + T(2);
    auto hb = (r - g) / safe_c + T(4);
    auto h = (mr * hr + mg * hg + mb * hb) * (pi / T(3)) * (T(1) - c0);
    auto s = (c / safe_v) * (T(1) - v0);
    return concat({h, s, v}, 1);
}

template <typename T>
Tensor<T> hsv_to_rgb(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kHsv);
    constexpr T pi = std::numbers::pi_v<T>;
    auto h = detail::chan(img, 0), s = detail::chan(img, 1), v = detail::chan(img, 2);
    auto hp = h * (T(3) / pi);
    auto i = detail::vmap(hp, [](T x) {
        T f = std::fmod(std::floor(x), T(6));
        return f < T(0) ? f + T(6) : f;
    });
    auto f = hp - i;
    auto p = v * (T(1) - s);
    auto q = v * (T(1) - f * s);
    auto t = v * (T(1) - (T(1) - f) * s);

    Tensor<T> m[6];
    for (int k = 0; k < 6; ++k)
        m[k] = detail::vmap(i, [k](T x) { return x == T(k) ? T(1) : T(0); });

    auto r = (m[0] + m[5]) * v + m[1] * q + (m[2] + m[3]) * p + m[4] * t;
    auto g = m[0] * t + (m[1] + m[2]) * v + m[3] * q + (m[4] + m[5]) * p;
    auto b = (m[0] + m[1]) * p + m[2] * t + (m[3] + m[4]) * v + m[5] * q;
    return concat({r, g, b}, 1);
}

namespace detail {
// Full-range BT.601 chroma scales; the inverse divides by the same constants
// so the round trip closes to roundoff.
template <typename T> constexpr T kCbScale = T(0.564);
template <typename T> constexpr T kCrScale = T(0.713);
}  // namespace detail

template <typename T>
Tensor<T> rgb_to_ycbcr(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kRgb);
    auto r = detail::chan(img, 0), g = detail::chan(img, 1), b = detail::chan(img, 2);
    auto y = r * T(0.299) + b * T(0.114) + g * T(0.587);
    auto cb = (b - y) * detail::kCbScale<T> + T(0.5);
    auto cr = (r - y) * detail::kCrScale<T> + T(0.5);
    return concat({y, cb, cr}, 1);
}

template <typename T>
Tensor<T> ycbcr_to_rgb(const Tensor<T>& img) {
    detail::check_channels(img, ColorSpace::kYcbcr);
    auto y = detail::chan(img, 0), cb = detail::chan(img, 1), cr = detail::chan(img, 2);
    auto b = y + (cb - T(0.5)) / detail::kCbScale<T>;
    auto r = y + (cr - T(0.5)) / detail::kCrScale<T>;
    auto g = (y - r * T(0.299) - b * T(0.114)) / T(0.587);
    return concat({r, g, b}, 1);
}

// All pairs route through an RGB pivot.
template <typename T>
Tensor<T> convert(const Tensor<T>& img, ColorSpace from, ColorSpace to) {
    detail::check_channels(img, from);
    if (from == to) return img;
    Tensor<T> rgb;
    switch (from) {
        case ColorSpace::kRgb: rgb = img; break;
        case ColorSpace::kBgr: rgb = bgr_to_rgb(img); break;
        case ColorSpace::kGray: rgb = gray_to_rgb(img); break;
        case ColorSpace::kHsv: rgb = hsv_to_rgb(img); break;
        case ColorSpace::kYcbcr: rgb = ycbcr_to_rgb(img); break;
    }
    switch (to) {
        case ColorSpace::kRgb: return rgb;
        case ColorSpace::kBgr: return rgb_to_bgr(rgb);
        case ColorSpace::kGray: return rgb_to_gray(rgb);
        case ColorSpace::kHsv: return rgb_to_hsv(rgb);
        case ColorSpace::kYcbcr: return rgb_to_ycbcr(rgb);
    }
    detail::fail("unsupported color space");
    return rgb;
}

template <typename T>
Tensor<T> adjust(const Tensor<T>& img, Adjust what, ScalarOf<T> amount) {
    detail::check_channels(img, ColorSpace::kRgb);
    constexpr T two_pi = T(2) * std::numbers::pi_v<T>;
    switch (what) {
        case Adjust::kBrightness:
            return clamp(img + amount, T(0), T(1));
        case Adjust::kContrast:
            return clamp(img * amount, T(0), T(1));
        case Adjust::kSaturation: {
            auto hsv = rgb_to_hsv(img);
            auto s = clamp(detail::chan(hsv, 1) * amount, T(0), T(1));
            return hsv_to_rgb(concat({detail::chan(hsv, 0), s, detail::chan(hsv, 2)}, 1));
        }
        case Adjust::kHue: {
            auto hsv = rgb_to_hsv(img);
            auto h = detail::chan(hsv, 0) + amount;
            auto wraps = detail::vmap(h, [two_pi](T x) { return std::floor(x / two_pi); });
            h = h - wraps * two_pi;
            return hsv_to_rgb(concat({h, detail::chan(hsv, 1), detail::chan(hsv, 2)}, 1));
        }
    }
    detail::fail("unknown adjustment");
    return img;
}

}  // namespace dcv
