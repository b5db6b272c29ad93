#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

#include "dcv/core/ops.hpp"
#include "dcv/core/sample.hpp"
#include "dcv/core/tensor.hpp"

namespace dcv {

template <typename T>
constexpr T kWEps = T(1e-8);

namespace detail {

template <typename T>
Tensor<T> c1(const Tensor<T>& x) {
    return reshape(x, {1});
}

template <typename T>
Tensor<T> row3(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
    return concat({c1(a), c1(b), c1(c)}, 0);
}

template <typename T>
Tensor<T> mat3(const Tensor<T>& r0, const Tensor<T>& r1, const Tensor<T>& r2) {
    return stack({r0, r1, r2}, 0);
}

template <typename T>
Tensor<T> entry(const Tensor<T>& m, std::int64_t i, std::int64_t j) {
    return reshape(slice(slice(m, 0, i, i + 1), 1, j, j + 1), {});
}

template <typename T>
Tensor<T> eye(std::int64_t n) {
    Tensor<T> m = Tensor<T>::zeros({n, n});
    for (std::int64_t i = 0; i < n; ++i) m.data()[i * n + i] = T(1);
    return m;
}

template <typename T>
T det3_vals(const Tensor<T>& m) {
    const T* p = m.data();
    return p[0] * (p[4] * p[8] - p[5] * p[7]) - p[1] * (p[3] * p[8] - p[5] * p[6]) +
           p[2] * (p[3] * p[7] - p[4] * p[6]);
}

template <typename T>
void check_rotation_vals(const Tensor<T>& r, const char* what) {
    const T* p = r.data();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            T dot = 0;
            for (int k = 0; k < 3; ++k) dot += p[k * 3 + i] * p[k * 3 + j];
            if (std::abs(double(dot - (i == j ? T(1) : T(0)))) > 1e-6)
                fail(std::string(what) + ": not orthonormal");
        }
    if (std::abs(double(det3_vals(r) - T(1))) > 1e-6)
        fail(std::string(what) + ": determinant is not +1");
}

template <typename T>
void check_pose_vals(const Tensor<T>& pose, const char* what) {
    if (pose.shape() != Shape{4, 4}) fail(std::string(what) + ": pose must be {4,4}");
    Tensor<T> r = Tensor<T>::zeros({3, 3});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.data()[i * 3 + j] = pose.data()[i * 4 + j];
    check_rotation_vals(r, what);
    const T* p = pose.data();
    if (std::abs(double(p[12])) > 1e-6 || std::abs(double(p[13])) > 1e-6 ||
        std::abs(double(p[14])) > 1e-6 || std::abs(double(p[15] - T(1))) > 1e-6)
        fail(std::string(what) + ": last row must be (0,0,0,1)");
}

template <typename T>
Tensor<T> pose_rot(const Tensor<T>& pose) {
    return slice(slice(pose, 0, 0, 3), 1, 0, 3);
}

template <typename T>
Tensor<T> pose_trans(const Tensor<T>& pose) {
    return reshape(slice(slice(pose, 0, 0, 3), 1, 3, 4), {3});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Angles and homogeneous coordinates
// ---------------------------------------------------------------------------

enum class AngleDir { kRadToDeg, kDegToRad };

template <typename T>
Tensor<T> rad_to_deg(const Tensor<T>& x) {
    return x * (T(180) / std::numbers::pi_v<T>);
}

template <typename T>
Tensor<T> deg_to_rad(const Tensor<T>& x) {
    return x * (std::numbers::pi_v<T> / T(180));
}

template <typename T>
Tensor<T> angle_convert(const Tensor<T>& x, AngleDir dir) {
    return dir == AngleDir::kRadToDeg ? rad_to_deg(x) : deg_to_rad(x);
}

template <typename T>
Tensor<T> to_homogeneous(const Tensor<T>& pts) {
    if (pts.rank() < 1) detail::fail("to_homogeneous wants at least rank 1");
    Shape os = pts.shape();
    os.back() = 1;
    return concat({pts, Tensor<T>::full(os, T(1))}, pts.rank() - 1);
}

// Divides by the last coordinate. Denominators inside (-w_eps, w_eps) are
// replaced by +-w_eps so the result stays finite; callers mask those points.
template <typename T>
Tensor<T> from_homogeneous(const Tensor<T>& pts) {
    if (pts.rank() < 1 || pts.shape().back() < 2)
        detail::fail("from_homogeneous wants a last axis of at least 2");
    const std::int64_t ax = pts.rank() - 1;
    const std::int64_t d = pts.shape().back() - 1;
    auto xy = slice(pts, ax, 0, d);
    auto w = slice(pts, ax, d, d + 1);
    auto low = detail::vmap(w, [](T x) { return std::abs(x) < kWEps<T> ? T(1) : T(0); });
    auto repl = detail::vmap(w, [](T x) { return x >= T(0) ? kWEps<T> : -kWEps<T>; });
    return xy / (w * (T(1) - low) + low * repl);
}

enum class HomogDir { kToHomogeneous, kFromHomogeneous };

template <typename T>
Tensor<T> homogeneous_convert(const Tensor<T>& pts, HomogDir dir) {
    return dir == HomogDir::kToHomogeneous ? to_homogeneous(pts) : from_homogeneous(pts);
}

// ---------------------------------------------------------------------------
// Rotation representations
// ---------------------------------------------------------------------------

enum class RotKind { kQuaternion, kAxisAngle, kMatrix };

template <typename T>
struct RotationRepr {
    RotKind kind = RotKind::kMatrix;
    Tensor<T> value;  // {4} wxyz, {3}, or {3,3}
};

// Rodrigues formula R = I + A[v]x + B[v]x^2 with A = sin(t)/t, B = (1-cos(t))/t^2.
// Below t = 1e-4 both factors switch to series in t^2, keeping gradients finite at zero.
template <typename T>
Tensor<T> axis_angle_to_matrix(const Tensor<T>& v) {
    if (v.shape() != Shape{3}) detail::fail("axis_angle_to_matrix wants shape {3}");
    auto t2 = sum(square(v));
    auto vx = reshape(slice(v, 0, 0, 1), {});
    auto vy = reshape(slice(v, 0, 1, 2), {});
    auto vz = reshape(slice(v, 0, 2, 3), {});
    auto zero = Tensor<T>::scalar(0);
    auto k = detail::mat3(detail::row3(zero, neg(vz), vy), detail::row3(vz, zero, neg(vx)),
                          detail::row3(neg(vy), vx, zero));
    Tensor<T> a, b;
    if (t2.item() < T(1e-8)) {
        a = T(1) - t2 / T(6) + square(t2) / T(120);
        b = T(0.5) - t2 / T(24) + square(t2) / T(720);
    } else {
        auto t = sqrt(t2);
        a = sin(t) / t;
        b = (T(1) - cos(t)) / t2;
    }
    return detail::eye<T>(3) + a * k + b * matmul(k, k);
}

template <typename T>
Tensor<T> matrix_to_axis_angle(const Tensor<T>& m) {
    if (m.shape() != Shape{3, 3}) detail::fail("matrix_to_axis_angle wants shape {3,3}");
    detail::check_rotation_vals(m, "matrix_to_axis_angle");
    auto a = detail::row3(detail::entry(m, 2, 1) - detail::entry(m, 1, 2),
                          detail::entry(m, 0, 2) - detail::entry(m, 2, 0),
                          detail::entry(m, 1, 0) - detail::entry(m, 0, 1));  // 2 sin(t) axis
    auto na2 = sum(square(a));
    if (na2.item() < T(4e-8)) return a * T(0.5);
    auto na = sqrt(na2);
    auto tr = detail::entry(m, 0, 0) + detail::entry(m, 1, 1) + detail::entry(m, 2, 2);
    auto theta = atan2(na, tr - T(1));
    return a * (theta / na);
}

template <typename T>
Tensor<T> quaternion_to_matrix(const Tensor<T>& q) {
    if (q.shape() != Shape{4}) detail::fail("quaternion_to_matrix wants shape {4} (w,x,y,z)");
    const T* p = q.data();
    const double norm = std::sqrt(double(p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]));
    if (std::abs(norm - 1.0) > 1e-6) detail::fail("quaternion is not unit length");
    auto qn = q / sqrt(sum(square(q)));
    auto w = reshape(slice(qn, 0, 0, 1), {});
    auto x = reshape(slice(qn, 0, 1, 2), {});
    auto y = reshape(slice(qn, 0, 2, 3), {});
    auto z = reshape(slice(qn, 0, 3, 4), {});
    auto r0 = detail::row3(T(1) - (square(y) + square(z)) * T(2), (x * y - w * z) * T(2),
                           (x * z + w * y) * T(2));
    auto r1 = detail::row3((x * y + w * z) * T(2), T(1) - (square(x) + square(z)) * T(2),
                           (y * z - w * x) * T(2));
    auto r2 = detail::row3((x * z - w * y) * T(2), (y * z + w * x) * T(2),
                           T(1) - (square(x) + square(y)) * T(2));
    return detail::mat3(r0, r1, r2);
}

template <typename T>
Tensor<T> matrix_to_quaternion(const Tensor<T>& m) {
    if (m.shape() != Shape{3, 3}) detail::fail("matrix_to_quaternion wants shape {3,3}");
    detail::check_rotation_vals(m, "matrix_to_quaternion");
    const T* p = m.data();
    const T tr = p[0] + p[4] + p[8];
    auto e = [&](std::int64_t i, std::int64_t j) { return detail::entry(m, i, j); };
    Tensor<T> w, x, y, z;
    if (tr > T(0)) {
        auto s = sqrt(e(0, 0) + e(1, 1) + e(2, 2) + T(1)) * T(2);
        w = s * T(0.25);
        x = (e(2, 1) - e(1, 2)) / s;
        y = (e(0, 2) - e(2, 0)) / s;
        z = (e(1, 0) - e(0, 1)) / s;
    } else if (p[0] >= p[4] && p[0] >= p[8]) {
        auto s = sqrt(e(0, 0) - e(1, 1) - e(2, 2) + T(1)) * T(2);
        w = (e(2, 1) - e(1, 2)) / s;
        x = s * T(0.25);
        y = (e(0, 1) + e(1, 0)) / s;
        z = (e(0, 2) + e(2, 0)) / s;
    } else if (p[4] >= p[8]) {
        auto s = sqrt(e(1, 1) - e(0, 0) - e(2, 2) + T(1)) * T(2);
        w = (e(0, 2) - e(2, 0)) / s;
        x = (e(0, 1) + e(1, 0)) / s;
        y = s * T(0.25);
        z = (e(1, 2) + e(2, 1)) / s;
    } else {
        auto s = sqrt(e(2, 2) - e(0, 0) - e(1, 1) + T(1)) * T(2);
        w = (e(1, 0) - e(0, 1)) / s;
        x = (e(0, 2) + e(2, 0)) / s;
        y = (e(1, 2) + e(2, 1)) / s;
        z = s * T(0.25);
    }
    return concat({detail::c1(w), detail::c1(x), detail::c1(y), detail::c1(z)}, 0);
}

template <typename T>
RotationRepr<T> rotation_convert(const RotationRepr<T>& r, RotKind to) {
    if (r.kind == to) return r;
    Tensor<T> m;
    switch (r.kind) {
        case RotKind::kMatrix: m = r.value; detail::check_rotation_vals(m, "rotation_convert"); break;
        case RotKind::kAxisAngle: m = axis_angle_to_matrix(r.value); break;
        case RotKind::kQuaternion: m = quaternion_to_matrix(r.value); break;
    }
    switch (to) {
        case RotKind::kMatrix: return {to, m};
        case RotKind::kAxisAngle: return {to, matrix_to_axis_angle(m)};
        case RotKind::kQuaternion: return {to, matrix_to_quaternion(m)};
    }
    detail::fail("unknown rotation representation");
    return r;
}

// ---------------------------------------------------------------------------
// Rigid poses {4,4}
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> pose_compose(const Tensor<T>& a, const Tensor<T>& b) {
    return matmul(a, b);
}

template <typename T>
Tensor<T> pose_inverse(const Tensor<T>& t) {
    detail::check_pose_vals(t, "pose_inverse");
    auto rt = transpose_last2(detail::pose_rot(t));
    auto tr = slice(slice(t, 0, 0, 3), 1, 3, 4);  // {3,1}
    auto top = concat({rt, neg(matmul(rt, tr))}, 1);
    auto bottom = Tensor<T>::from_list({1, 4}, {T(0), T(0), T(0), T(1)});
    return concat({top, bottom}, 0);
}

// Frame change: the pose of b relative to a, so that rel * a = b.
template <typename T>
Tensor<T> relative_pose(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_pose_vals(b, "relative_pose");
    return pose_compose(b, pose_inverse(a));
}

// ---------------------------------------------------------------------------
// Pinhole camera
// ---------------------------------------------------------------------------

template <typename T>
struct PinholeCamera {
    Tensor<T> K;     // {3,3} intrinsics, zero skew
    Tensor<T> pose;  // {4,4}, camera-to-world
};

template <typename T>
void validate_camera(const PinholeCamera<T>& cam) {
    if (cam.K.shape() != Shape{3, 3}) detail::fail("camera K must be {3,3}");
    const T* k = cam.K.data();
    if (!(k[0] > T(0)) || !(k[4] > T(0))) detail::fail("focal lengths must be positive");
    if (k[1] != T(0) || k[3] != T(0) || k[6] != T(0) || k[7] != T(0) || k[8] != T(1))
        detail::fail("camera K must be [[fx,0,cx],[0,fy,cy],[0,0,1]]");
    detail::check_pose_vals(cam.pose, "camera pose");
}

template <typename T>
PinholeCamera<T> make_pinhole(ScalarOf<T> fx, ScalarOf<T> fy, ScalarOf<T> cx, ScalarOf<T> cy,
                              Tensor<T> pose = detail::eye<T>(4)) {
    PinholeCamera<T> cam{
        Tensor<T>::from_list({3, 3}, {fx, T(0), cx, T(0), fy, cy, T(0), T(0), T(1)}),
        std::move(pose)};
    validate_camera(cam);
    return cam;
}

namespace detail {

// K^-1 from values; intrinsics are data, gradients flow through points and poses.
template <typename T>
Tensor<T> inv_intrinsics(const Tensor<T>& k) {
    const T* p = k.data();
    const T fx = p[0], cx = p[2], fy = p[4], cy = p[5];
    return Tensor<T>::from_list({3, 3}, {T(1) / fx, T(0), -cx / fx, T(0), T(1) / fy, -cy / fy,
                                         T(0), T(0), T(1)});
}

}  // namespace detail

// World points {..,3} to pixel coordinates {..,2}. Points behind the camera
// come out guarded (see from_homogeneous); callers mask on z when needed.
template <typename T>
Tensor<T> camera_project(const PinholeCamera<T>& cam, const Tensor<T>& pts) {
    validate_camera(cam);
    if (pts.rank() < 2 || pts.shape().back() != 3)
        detail::fail("camera_project wants points {..,3}");
    auto xc = matmul(pts - detail::pose_trans(cam.pose), detail::pose_rot(cam.pose));
    return from_homogeneous(matmul(xc, transpose_last2(cam.K)));
}

// Pixel coordinates {..,2} with depths {..,1} back to world points {..,3}.
template <typename T>
Tensor<T> camera_unproject(const PinholeCamera<T>& cam, const Tensor<T>& pix,
                           const Tensor<T>& depth) {
    validate_camera(cam);
    if (pix.rank() < 2 || pix.shape().back() != 2)
        detail::fail("camera_unproject wants pixels {..,2}");
    auto rays = matmul(to_homogeneous(pix), transpose_last2(detail::inv_intrinsics(cam.K)));
    auto xc = rays * depth;
    return matmul(xc, transpose_last2(detail::pose_rot(cam.pose))) + detail::pose_trans(cam.pose);
}

// ---------------------------------------------------------------------------
// Warps
// ---------------------------------------------------------------------------

// H maps normalized destination coordinates [x,y,1] to normalized source
// coordinates; each output pixel samples the source there (inverse warping).
// The mask flags outputs whose source landed inside [-1,1]^2 with |w| above w_eps.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> homography_warp(const Tensor<T>& img, const Tensor<T>& h,
                                                std::int64_t oh, std::int64_t ow) {
    if (img.rank() != 4) detail::fail("homography_warp wants image {N,C,H,W}");
    Tensor<T> hb = h;
    if (h.rank() == 2) hb = reshape(h, {1, 3, 3});
    if (hb.rank() != 3 || hb.dim(1) != 3 || hb.dim(2) != 3)
        detail::fail("homography must be {3,3} or {N,3,3}");
    for (std::int64_t n = 0; n < hb.dim(0); ++n) {
        Tensor<T> one = Tensor<T>::from_data(
            std::vector<T>(hb.data() + n * 9, hb.data() + (n + 1) * 9), {3, 3});
        if (std::abs(double(detail::det3_vals(one))) < 1e-12)
            detail::fail("singular homography");
    }
    const std::int64_t b = hb.dim(0);
    auto grid_dst = reshape(identity_grid<T>(oh, ow), {1, oh * ow, 2});
    auto src_h = matmul(to_homogeneous(grid_dst), transpose_last2(hb));  // {B,L,3}
    auto grid = reshape(from_homogeneous(src_h), {b, oh, ow, 2});
    auto out = grid_sample_bilinear(img, grid);
    auto w = slice(src_h, 2, 2, 3);
    auto wmask = reshape(
        detail::vmap(w.detached(), [](T x) { return std::abs(x) > kWEps<T> ? T(1) : T(0); }),
        {b, 1, oh, ow});
    return {out, grid_valid_mask(grid) * wmask};
}

template <typename T>
struct AffineParams {
    Tensor<T> rotation = Tensor<T>::scalar(0);      // radians, about the image center
    Tensor<T> translation = Tensor<T>::zeros({2});  // pixels (tx, ty)
    Tensor<T> scale = Tensor<T>::scalar(1);
    Tensor<T> shear = Tensor<T>::scalar(0);         // x-shear factor
};

namespace detail {

template <typename T>
Tensor<T> pix_to_norm_mat(std::int64_t h, std::int64_t w) {
    return Tensor<T>::from_list({3, 3}, {T(2) / T(w), T(0), T(1) / T(w) - T(1), T(0), T(2) / T(h),
                                         T(1) / T(h) - T(1), T(0), T(0), T(1)});
}

template <typename T>
Tensor<T> norm_to_pix_mat(std::int64_t h, std::int64_t w) {
    return Tensor<T>::from_list({3, 3}, {T(w) / T(2), T(0), (T(w) - T(1)) / T(2), T(0), T(h) / T(2),
                                         (T(h) - T(1)) / T(2), T(0), T(0), T(1)});
}

}  // namespace detail

// Forward pixel-space map out(A(x)) = in(x): rotation, shear, and scale about the
// image center followed by a pixel translation. Returns the normalized-coordinate
// homography that samples the source accordingly.
template <typename T>
Tensor<T> affine_to_homography(const AffineParams<T>& p, std::int64_t h, std::int64_t w) {
    auto c = cos(reshape(p.rotation, {}));
    auto s = sin(reshape(p.rotation, {}));
    auto sc = reshape(p.scale, {});
    auto sh = reshape(p.shear, {});
    auto m00 = sc * c;
    auto m01 = sc * (c * sh - s);
    auto m10 = sc * s;
    auto m11 = sc * (s * sh + c);
    auto tx = reshape(slice(p.translation, 0, 0, 1), {});
    auto ty = reshape(slice(p.translation, 0, 1, 2), {});
    const T cx = (T(w) - T(1)) / T(2), cy = (T(h) - T(1)) / T(2);
    auto bx = tx + cx - (m00 * cx + m01 * cy);
    auto by = ty + cy - (m10 * cx + m11 * cy);

    auto det = m00 * m11 - m01 * m10;
    if (std::abs(double(det.item())) < 1e-12) detail::fail("affine map is singular");
    auto i00 = m11 / det, i01 = neg(m01) / det, i10 = neg(m10) / det, i11 = m00 / det;
    auto ibx = neg(i00 * bx + i01 * by);
    auto iby = neg(i10 * bx + i11 * by);
    auto zero = Tensor<T>::scalar(0);
    auto one = Tensor<T>::scalar(1);
    auto inv_pix = detail::mat3(detail::row3(i00, i01, ibx), detail::row3(i10, i11, iby),
                                detail::row3(zero, zero, one));
    return matmul(matmul(detail::pix_to_norm_mat<T>(h, w), inv_pix),
                  detail::norm_to_pix_mat<T>(h, w));
}

template <typename T>
Tensor<T> warp_affine(const Tensor<T>& img, const AffineParams<T>& p) {
    if (img.rank() != 4) detail::fail("warp_affine wants image {N,C,H,W}");
    return homography_warp(img, affine_to_homography(p, img.dim(2), img.dim(3)), img.dim(2),
                           img.dim(3))
        .first;
}

// Backward warp of a source view into the reference view: each reference pixel is
// unprojected with its depth, moved into the source camera, projected, and sampled.
// The mask flags samples that landed in front of the source camera and on its image.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> depth_warp(const Tensor<T>& src, const PinholeCamera<T>& cam_src,
                                           const PinholeCamera<T>& cam_ref,
                                           const Tensor<T>& depth) {
    validate_camera(cam_src);
    validate_camera(cam_ref);
    if (src.rank() != 4) detail::fail("depth_warp wants image {N,C,H,W}");
    if (depth.rank() != 4 || depth.dim(1) != 1) detail::fail("depth must be {N,1,H,W}");
    const std::int64_t n = depth.dim(0), h = depth.dim(2), w = depth.dim(3);
    const std::int64_t hs = src.dim(2), ws = src.dim(3);

    Tensor<T> pix = Tensor<T>::zeros({1, h * w, 2});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) {
            pix.data()[(y * w + x) * 2] = T(x);
            pix.data()[(y * w + x) * 2 + 1] = T(y);
        }

    auto rays = matmul(to_homogeneous(pix),
                       transpose_last2(detail::inv_intrinsics(cam_ref.K)));  // {1,HW,3}
    auto xc = rays * reshape(depth, {n, h * w, 1});
    auto xw = matmul(xc, transpose_last2(detail::pose_rot(cam_ref.pose))) +
              detail::pose_trans(cam_ref.pose);
    auto xs = matmul(xw - detail::pose_trans(cam_src.pose), detail::pose_rot(cam_src.pose));
    auto ph = matmul(xs, transpose_last2(cam_src.K));  // {N,HW,3}
    auto uv = from_homogeneous(ph);

    auto scale = Tensor<T>::from_list({2}, {T(2) / T(ws), T(2) / T(hs)});
    auto off = Tensor<T>::from_list({2}, {T(1) / T(ws) - T(1), T(1) / T(hs) - T(1)});
    auto grid = reshape(uv * scale + off, {n, h, w, 2});
    auto out = grid_sample_bilinear(src, grid);

    auto z = slice(ph, 2, 2, 3);
    auto zmask = reshape(
        detail::vmap(z.detached(), [](T v) { return v > kWEps<T> ? T(1) : T(0); }),
        {n, 1, h, w});
    return {out, grid_valid_mask(grid) * zmask};
}

}  // namespace dcv
