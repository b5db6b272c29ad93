#include <doctest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "dcv/core/graph.hpp"
#include "dcv/core/ops.hpp"
#include "dcv/geometry.hpp"
#include "oracles.hpp"

using dcv::PinholeCamera;
using dcv::RotKind;
using dcv::Shape;
using dcv::Tensor;
using oracles::gradcheck;
using oracles::GradCheckOpts;
using oracles::rand_tensor;

namespace {

constexpr double kPi = std::numbers::pi;

// Scalar Rodrigues: R = I cos t + sin t [n]x + (1 - cos t) n n^T.
std::array<double, 9> rodrigues_ref(double x, double y, double z) {
    const double t = std::sqrt(x * x + y * y + z * z);
    std::array<double, 9> r{1, 0, 0, 0, 1, 0, 0, 0, 1};
    if (t == 0) return r;
    const double n[3] = {x / t, y / t, z / t};
    const double c = std::cos(t), s = std::sin(t);
    const double kx[9] = {0, -n[2], n[1], n[2], 0, -n[0], -n[1], n[0], 0};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r[i * 3 + j] = c * (i == j ? 1.0 : 0.0) + s * kx[i * 3 + j] +
                           (1 - c) * n[i] * n[j];
    return r;
}

Tensor<double> random_rigid(dcv::Rng& rng) {
    auto aa = oracles::rand_tensor(rng, {3}, -1.5, 1.5);
    auto r = dcv::axis_angle_to_matrix(aa);
    Tensor<double> t = Tensor<double>::zeros({4, 4});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t.data()[i * 4 + j] = r.data()[i * 3 + j];
    for (int i = 0; i < 3; ++i) t.data()[i * 4 + 3] = rng.uniform(-2.0, 2.0);
    t.data()[15] = 1.0;
    return t;
}

double bilinear_clamped(const Tensor<double>& img, std::int64_t n, std::int64_t c, double xp,
                        double yp) {
    const std::int64_t h = img.dim(2), w = img.dim(3);
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(xp));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(yp));
    const double wx = xp - std::floor(xp), wy = yp - std::floor(yp);
    auto px = [&](std::int64_t yy, std::int64_t xx) {
        return img.at({n, c, std::clamp<std::int64_t>(yy, 0, h - 1),
                       std::clamp<std::int64_t>(xx, 0, w - 1)});
    };
    return (1 - wx) * (1 - wy) * px(y0, x0) + wx * (1 - wy) * px(y0, x0 + 1) +
           (1 - wx) * wy * px(y0 + 1, x0) + wx * wy * px(y0 + 1, x0 + 1);
}

// Per-pixel scalar oracle for homography warping in normalized coordinates.
double hwarp_oracle(const Tensor<double>& img, const double h9[9], std::int64_t n, std::int64_t c,
                    std::int64_t y, std::int64_t x, std::int64_t oh, std::int64_t ow) {
    const double nx = (2.0 * x + 1) / ow - 1, ny = (2.0 * y + 1) / oh - 1;
    const double sx = h9[0] * nx + h9[1] * ny + h9[2];
    const double sy = h9[3] * nx + h9[4] * ny + h9[5];
    const double sw = h9[6] * nx + h9[7] * ny + h9[8];
    const double gx = sx / sw, gy = sy / sw;
    const std::int64_t wi = img.dim(3), hi = img.dim(2);
    return bilinear_clamped(img, n, c, ((gx + 1) * wi - 1) / 2, ((gy + 1) * hi - 1) / 2);
}

}  // namespace

TEST_CASE("angle conversions") {
    auto pi = Tensor<double>::scalar(kPi);
    CHECK(dcv::rad_to_deg(pi).item() == doctest::Approx(180.0).epsilon(1e-14));
    CHECK(dcv::rad_to_deg(Tensor<double>::scalar(1.0)).item() ==
          doctest::Approx(57.29577951308232).epsilon(1e-14));
    auto x = Tensor<double>::scalar(0.7312);
    CHECK(dcv::deg_to_rad(dcv::rad_to_deg(x)).item() == doctest::Approx(0.7312).epsilon(1e-15));
    CHECK(dcv::angle_convert(pi, dcv::AngleDir::kRadToDeg).item() ==
          doctest::Approx(180.0).epsilon(1e-14));
    gradcheck({x}, [](std::vector<Tensor<double>>& in) { return dcv::rad_to_deg(in[0]); });
}

TEST_CASE("homogeneous coordinates") {
    auto p = Tensor<double>::from_list({1, 2}, {2, 3});
    auto ph = dcv::to_homogeneous(p);
    CHECK(ph.shape() == Shape{1, 3});
    CHECK(ph.data()[0] == 2.0);
    CHECK(ph.data()[1] == 3.0);
    CHECK(ph.data()[2] == 1.0);

    auto q = dcv::from_homogeneous(Tensor<double>::from_list({1, 3}, {4, 6, 2}));
    CHECK(q.shape() == Shape{1, 2});
    CHECK(q.data()[0] == 2.0);
    CHECK(q.data()[1] == 3.0);

    dcv::Rng rng(179);
    auto pts = rand_tensor(rng, {5, 3});
    auto rt = dcv::from_homogeneous(dcv::to_homogeneous(pts));
    for (std::int64_t i = 0; i < pts.numel(); ++i) CHECK(rt.data()[i] == pts.data()[i]);

    // a tiny w is guarded rather than dividing to infinity
    auto tiny = dcv::from_homogeneous(Tensor<double>::from_list({1, 3}, {1, 1, 1e-12}));
    CHECK(std::isfinite(tiny.data()[0]));
    CHECK(tiny.data()[0] == doctest::Approx(1e8));

    auto big = rand_tensor(rng, {4, 4}, 0.5, 2.0);
    gradcheck({big}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::from_homogeneous(in[0])));
    });
}

TEST_CASE("axis angle to matrix follows rodrigues") {
    auto zero = dcv::axis_angle_to_matrix(Tensor<double>::zeros({3}));
    for (int i = 0; i < 9; ++i) CHECK(zero.data()[i] == (i % 4 == 0 ? 1.0 : 0.0));

    auto quarter = dcv::axis_angle_to_matrix(Tensor<double>::from_list({3}, {0, 0, kPi / 2}));
    const double want_q[9] = {0, -1, 0, 1, 0, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) CHECK(quarter.data()[i] == doctest::Approx(want_q[i]));

    dcv::Rng rng(181);
    for (int it = 0; it < 5; ++it) {
        const double x = rng.uniform(-1.5, 1.5), y = rng.uniform(-1.5, 1.5),
                     z = rng.uniform(-1.5, 1.5);
        auto got = dcv::axis_angle_to_matrix(Tensor<double>::from_list({3}, {x, y, z}));
        auto want = rodrigues_ref(x, y, z);
        for (int i = 0; i < 9; ++i)
            CHECK(got.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }

    auto v = Tensor<double>::from_list({3}, {0.3, -0.8, 0.5});
    gradcheck({v}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::axis_angle_to_matrix(in[0]) +
                                    dcv::axis_angle_to_matrix(in[0]) * 0.5));
    });
    // the near-zero series branch also differentiates
    auto small = Tensor<double>::from_list({3}, {1e-5, -2e-5, 5e-6});
    gradcheck({small}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::axis_angle_to_matrix(in[0])));
    });
}

TEST_CASE("rotation representations round trip") {
    auto qid = dcv::quaternion_to_matrix(Tensor<double>::from_list({4}, {1, 0, 0, 0}));
    for (int i = 0; i < 9; ++i) CHECK(qid.data()[i] == (i % 4 == 0 ? 1.0 : 0.0));
    CHECK_THROWS(dcv::quaternion_to_matrix(Tensor<double>::from_list({4}, {1, 0.1, 0, 0})));

    dcv::Rng rng(191);
    for (int it = 0; it < 8; ++it) {
        Tensor<double> aa = rand_tensor(rng, {3}, -1.0, 1.0);
        auto m = dcv::axis_angle_to_matrix(aa);
        auto back = dcv::matrix_to_axis_angle(m);
        for (int i = 0; i < 3; ++i)
            CHECK(back.data()[i] == doctest::Approx(aa.data()[i]).epsilon(1e-9));

        auto q = dcv::matrix_to_quaternion(m);
        double norm = 0;
        for (int i = 0; i < 4; ++i) norm += q.data()[i] * q.data()[i];
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-10));
        auto m2 = dcv::quaternion_to_matrix(q);
        for (int i = 0; i < 9; ++i)
            CHECK(m2.data()[i] == doctest::Approx(m.data()[i]).epsilon(1e-9));
    }

    // a rotation near pi exercises the non-positive-trace branches
    auto big = dcv::axis_angle_to_matrix(Tensor<double>::from_list({3}, {3.0, 0.2, -0.1}));
    auto qb = dcv::matrix_to_quaternion(big);
    auto mb = dcv::quaternion_to_matrix(qb);
    for (int i = 0; i < 9; ++i)
        CHECK(mb.data()[i] == doctest::Approx(big.data()[i]).epsilon(1e-9));

    // tiny rotations take the series branch of matrix_to_axis_angle
    auto small = Tensor<double>::from_list({3}, {1e-5, 2e-5, -1e-5});
    auto back_small = dcv::matrix_to_axis_angle(dcv::axis_angle_to_matrix(small));
    for (int i = 0; i < 3; ++i)
        CHECK(back_small.data()[i] == doctest::Approx(small.data()[i]).epsilon(1e-8));

    dcv::RotationRepr<double> rep{RotKind::kAxisAngle, Tensor<double>::from_list({3}, {0.4, -0.2, 0.9})};
    auto as_quat = dcv::rotation_convert(rep, RotKind::kQuaternion);
    CHECK(as_quat.kind == RotKind::kQuaternion);
    auto and_back = dcv::rotation_convert(as_quat, RotKind::kAxisAngle);
    for (int i = 0; i < 3; ++i)
        CHECK(and_back.value.data()[i] == doctest::Approx(rep.value.data()[i]).epsilon(1e-9));

    GradCheckOpts tight;
    tight.eps = 1e-7;
    auto q = dcv::matrix_to_quaternion(dcv::axis_angle_to_matrix(
        Tensor<double>::from_list({3}, {0.4, 0.1, -0.6})));
    gradcheck({q}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::quaternion_to_matrix(in[0])));
    }, tight);
}

TEST_CASE("pose composition inverse and relative pose") {
    dcv::Rng rng(193);
    auto t = random_rigid(rng);
    auto id = dcv::pose_compose(t, dcv::pose_inverse(t));
    for (int i = 0; i < 16; ++i)
        CHECK(id.data()[i] == doctest::Approx(i % 5 == 0 ? 1.0 : 0.0).epsilon(1e-10));

    auto rel_self = dcv::relative_pose(t, t);
    for (int i = 0; i < 16; ++i)
        CHECK(rel_self.data()[i] == doctest::Approx(i % 5 == 0 ? 1.0 : 0.0).epsilon(1e-10));

    auto a = random_rigid(rng);
    auto b = random_rigid(rng);
    auto rel = dcv::relative_pose(a, b);
    auto recon = dcv::matmul(rel, a);
    for (int i = 0; i < 16; ++i)
        CHECK(recon.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-10));

    auto bad = t.clone();
    for (int i = 0; i < 3; ++i) bad.data()[i] *= 2.0;
    CHECK_THROWS(dcv::pose_inverse(bad));

    GradCheckOpts tight;
    tight.eps = 1e-7;
    gradcheck({t}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::pose_inverse(in[0])));
    }, tight);
}

TEST_CASE("pinhole projection") {
    auto cam = dcv::make_pinhole<double>(100, 100, 50, 50);
    auto pix = dcv::camera_project(cam, Tensor<double>::from_list({1, 3}, {1, 2, 4}));
    CHECK(pix.data()[0] == 75.0);
    CHECK(pix.data()[1] == 100.0);

    auto axis = dcv::camera_project(cam, Tensor<double>::from_list({1, 3}, {0, 0, 3.7}));
    CHECK(axis.data()[0] == 50.0);
    CHECK(axis.data()[1] == 50.0);

    CHECK_THROWS(dcv::make_pinhole<double>(-1, 100, 0, 0));
    auto skewed = cam;
    skewed.K = cam.K.clone();
    skewed.K.data()[1] = 0.1;
    CHECK_THROWS(dcv::validate_camera(skewed));

    // round trip through a camera with a nontrivial pose
    dcv::Rng rng(197);
    auto pose = random_rigid(rng);
    auto cam2 = dcv::make_pinhole<double>(85, 92, 31, 27, pose);
    auto pts_cam = rand_tensor(rng, {6, 3}, 0.5, 2.0);  // z in (0.5, 2)
    auto world = dcv::matmul(pts_cam, dcv::transpose_last2(
                                          dcv::slice(dcv::slice(pose, 0, 0, 3), 1, 0, 3)));
    for (std::int64_t i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) world.data()[i * 3 + j] += pose.data()[j * 4 + 3];
    auto pix2 = dcv::camera_project(cam2, world);
    Tensor<double> depth = Tensor<double>::zeros({6, 1});
    for (std::int64_t i = 0; i < 6; ++i) depth.data()[i] = pts_cam.data()[i * 3 + 2];
    auto back = dcv::camera_unproject(cam2, pix2, depth);
    for (std::int64_t i = 0; i < 18; ++i)
        CHECK(back.data()[i] == doctest::Approx(world.data()[i]).epsilon(1e-9));

    gradcheck({world}, [&](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::camera_project(cam2, in[0])));
    });
}

TEST_CASE("homography_warp identity and off-image translation") {
    dcv::Rng rng(199);
    auto img = rand_tensor(rng, {2, 3, 4, 8});  // power-of-two extents: exact center hits
    auto [out, mask] = dcv::homography_warp(img, dcv::detail::eye<double>(3), 4, 8);
    for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(out.data()[i] == img.data()[i]);
    for (std::int64_t i = 0; i < mask.numel(); ++i) CHECK(mask.data()[i] == 1.0);

    auto shift = Tensor<double>::from_list({3, 3}, {1, 0, 2, 0, 1, 0, 0, 0, 1});
    auto [out2, mask2] = dcv::homography_warp(img, shift, 4, 8);
    for (std::int64_t i = 0; i < mask2.numel(); ++i) CHECK(mask2.data()[i] == 0.0);

    CHECK_THROWS(dcv::homography_warp(img, Tensor<double>::zeros({3, 3}), 4, 8));
}

TEST_CASE("homography_warp matches the scalar oracle") {
    dcv::Rng rng(211);
    auto img = rand_tensor(rng, {1, 2, 5, 7});
    const double h9[9] = {1.05, 0.03, -0.12, -0.02, 0.97, 0.08, 0.01, -0.015, 1.0};
    Tensor<double> h = Tensor<double>::from_list({3, 3}, {h9[0], h9[1], h9[2], h9[3], h9[4],
                                                          h9[5], h9[6], h9[7], h9[8]});
    auto [out, mask] = dcv::homography_warp(img, h, 6, 5);
    CHECK(out.shape() == Shape{1, 2, 6, 5});
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t y = 0; y < 6; ++y)
            for (std::int64_t x = 0; x < 5; ++x)
                CHECK(out.at({0, c, y, x}) ==
                      doctest::Approx(hwarp_oracle(img, h9, 0, c, y, x, 6, 5)).epsilon(1e-12));
}

TEST_CASE("homography_warp composes") {
    // low curvature keeps the intermediate resampling error below tolerance
    const std::int64_t h = 32, w = 32;
    Tensor<double> img = Tensor<double>::zeros({1, 1, h, w});
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            img.data()[y * w + x] = 0.5 + 0.3 * std::sin(0.06 * x) * std::cos(0.05 * y);

    auto h1 = Tensor<double>::from_list({3, 3}, {1.08, 0.03, 0.06, -0.02, 0.94, -0.05, 0.01, 0, 1});
    auto h2 = Tensor<double>::from_list({3, 3}, {0.95, -0.04, -0.03, 0.03, 1.06, 0.04, 0, 0.012, 1});
    auto [once, m1] = dcv::homography_warp(img, h1, h, w);
    auto [twice, m2] = dcv::homography_warp(once, h2, h, w);
    auto [fused, mf] = dcv::homography_warp(img, dcv::matmul(h1, h2), h, w);
    // margin skips pixels whose two-step path reads border-clamped samples
    for (std::int64_t y = 5; y < h - 5; ++y)
        for (std::int64_t x = 5; x < w - 5; ++x)
            if (m2.at({0, 0, y, x}) == 1.0 && mf.at({0, 0, y, x}) == 1.0)
                CHECK(std::abs(twice.at({0, 0, y, x}) - fused.at({0, 0, y, x})) < 1e-3);
}

TEST_CASE("homography_warp differentiates in image and matrix") {
    dcv::Rng rng(223);
    auto img = rand_tensor(rng, {1, 1, 5, 5});
    auto h = Tensor<double>::from_list({3, 3}, {0.93, 0.02, 0.01, -0.03, 0.95, -0.02, 0.01, 0.02, 1});
    gradcheck({img, h}, [](std::vector<Tensor<double>>& in) {
        auto [out, mask] = dcv::homography_warp(in[0], in[1], 5, 5);
        return dcv::sum(dcv::square(out));
    });
}

TEST_CASE("warp_affine identity translation and rotation") {
    dcv::Rng rng(227);
    auto img = rand_tensor(rng, {1, 1, 8, 8});

    dcv::AffineParams<double> id;
    auto same = dcv::warp_affine(img, id);
    for (std::int64_t i = 0; i < img.numel(); ++i) CHECK(same.data()[i] == img.data()[i]);

    dcv::AffineParams<double> tr;
    tr.translation = Tensor<double>::from_list({2}, {1, 0});
    auto shifted = dcv::warp_affine(img, tr);
    for (std::int64_t y = 0; y < 8; ++y)
        for (std::int64_t x = 1; x < 8; ++x)
            CHECK(shifted.at({0, 0, y, x}) == img.at({0, 0, y, x - 1}));

    dcv::AffineParams<double> full;
    full.rotation = Tensor<double>::scalar(2 * kPi);
    auto turned = dcv::warp_affine(img, full);
    for (std::int64_t i = 0; i < img.numel(); ++i)
        CHECK(turned.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));
}

TEST_CASE("warp_affine matches a scalar inverse-map oracle") {
    dcv::Rng rng(229);
    auto img = rand_tensor(rng, {1, 1, 6, 9});
    dcv::AffineParams<double> p;
    p.rotation = Tensor<double>::scalar(kPi / 6);
    p.translation = Tensor<double>::from_list({2}, {0.7, -0.3});
    p.scale = Tensor<double>::scalar(0.9);
    p.shear = Tensor<double>::scalar(0.1);
    auto out = dcv::warp_affine(img, p);

    const double c = std::cos(kPi / 6), s = std::sin(kPi / 6), sc = 0.9, sh = 0.1;
    const double m[4] = {sc * c, sc * (c * sh - s), sc * s, sc * (s * sh + c)};
    const double cx = (9 - 1) / 2.0, cy = (6 - 1) / 2.0;
    const double det = m[0] * m[3] - m[1] * m[2];
    const double mi[4] = {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det};
    for (std::int64_t y = 0; y < 6; ++y)
        for (std::int64_t x = 0; x < 9; ++x) {
            const double dx = x - cx - 0.7, dy = y - cy + 0.3;
            const double sx = mi[0] * dx + mi[1] * dy + cx;
            const double sy = mi[2] * dx + mi[3] * dy + cy;
            CHECK(out.at({0, 0, y, x}) ==
                  doctest::Approx(bilinear_clamped(img, 0, 0, sx, sy)).epsilon(1e-10));
        }
}

TEST_CASE("warp_affine differentiates in all parameters") {
    dcv::Rng rng(233);
    auto img = rand_tensor(rng, {1, 1, 5, 5});
    auto rot = Tensor<double>::scalar(0.3);
    auto t = Tensor<double>::from_list({2}, {0.4, -0.6});
    auto sc = Tensor<double>::scalar(1.1);
    auto sh = Tensor<double>::scalar(-0.2);
    gradcheck({rot, t, sc, sh, img}, [](std::vector<Tensor<double>>& in) {
        dcv::AffineParams<double> p{in[0], in[1], in[2], in[3]};
        return dcv::sum(dcv::square(dcv::warp_affine(in[4], p)));
    });
}

TEST_CASE("depth_warp with identical cameras is the identity") {
    dcv::Rng rng(239);
    auto src = rand_tensor(rng, {1, 2, 6, 8});
    auto cam = dcv::make_pinhole<double>(90, 95, 4.0, 3.0);
    auto depth = rand_tensor(rng, {1, 1, 6, 8}, 0.5, 5.0);
    auto [out, mask] = dcv::depth_warp(src, cam, cam, depth);
    for (std::int64_t i = 0; i < src.numel(); ++i)
        CHECK(out.data()[i] == doctest::Approx(src.data()[i]).epsilon(1e-9));
    for (std::int64_t i = 0; i < mask.numel(); ++i) CHECK(mask.data()[i] == 1.0);
}

TEST_CASE("depth_warp reproduces uniform disparity for a fronto-parallel plane") {
    dcv::Rng rng(241);
    auto src = rand_tensor(rng, {1, 1, 8, 16});
    auto cam_ref = dcv::make_pinhole<double>(100, 100, 8.0, 4.0);
    Tensor<double> pose = dcv::detail::eye<double>(4);
    pose.data()[3] = 0.2;  // source camera displaced along +x
    auto cam_src = dcv::make_pinhole<double>(100, 100, 8.0, 4.0, pose);
    auto depth = Tensor<double>::full({1, 1, 8, 16}, 10.0);  // disparity = 100*0.2/10 = 2 px

    auto [out, mask] = dcv::depth_warp(src, cam_src, cam_ref, depth);
    for (std::int64_t y = 0; y < 8; ++y)
        for (std::int64_t x = 0; x < 16; ++x) {
            if (x >= 2) {
                CHECK(out.at({0, 0, y, x}) ==
                      doctest::Approx(src.at({0, 0, y, x - 2})).epsilon(1e-9));
                CHECK(mask.at({0, 0, y, x}) == 1.0);
            } else {
                CHECK(mask.at({0, 0, y, x}) == 0.0);
            }
        }
}

TEST_CASE("depth_warp gradients flow into depth image and pose") {
    dcv::Rng rng(251);
    auto src = rand_tensor(rng, {1, 1, 4, 5});
    auto depth = rand_tensor(rng, {1, 1, 4, 5}, 1.0, 3.0);
    Tensor<double> pose = dcv::detail::eye<double>(4);
    pose.data()[3] = 0.07;
    pose.data()[7] = -0.04;

    gradcheck({depth, src}, [&](std::vector<Tensor<double>>& in) {
        auto cam_ref = dcv::make_pinhole<double>(20, 20, 2.0, 1.5);
        auto cam_src = dcv::make_pinhole<double>(20, 20, 2.0, 1.5, pose);
        auto [out, mask] = dcv::depth_warp(in[1], cam_src, cam_ref, in[0]);
        return dcv::sum(dcv::square(out));
    });

    GradCheckOpts tight;
    tight.eps = 1e-7;
    gradcheck({pose}, [&](std::vector<Tensor<double>>& in) {
        auto cam_ref = dcv::make_pinhole<double>(20, 20, 2.0, 1.5);
        auto cam_src = dcv::make_pinhole<double>(20, 20, 2.0, 1.5, in[0]);
        auto [out, mask] = dcv::depth_warp(src, cam_src, cam_ref, depth);
        return dcv::sum(dcv::square(out));
    }, tight);

    // a single perturbed depth value only moves its own output pixel
    auto cam_ref = dcv::make_pinhole<double>(20, 20, 2.0, 1.5);
    auto cam_src = dcv::make_pinhole<double>(20, 20, 2.0, 1.5, pose);
    auto base = dcv::depth_warp(src, cam_src, cam_ref, depth).first;
    auto d2 = depth.clone();
    d2.data()[7] += 0.05;
    auto bumped = dcv::depth_warp(src, cam_src, cam_ref, d2).first;
    for (std::int64_t i = 0; i < base.numel(); ++i) {
        if (i == 7)
            CHECK(std::abs(bumped.data()[i] - base.data()[i]) > 0);
        else
            CHECK(bumped.data()[i] == base.data()[i]);
    }
}
