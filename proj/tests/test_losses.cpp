#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dcv/core/ops.hpp"
#include "dcv/losses.hpp"
#include "oracles.hpp"

using dcv::Shape;
using dcv::Tensor;
using oracles::gradcheck;
using oracles::rand_tensor;

namespace {

// Independent per-window SSIM evaluation with replicate borders.
double ssim_ref(const Tensor<double>& a, const Tensor<double>& b, int win) {
    const std::int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    const int r = win / 2;
    std::vector<double> wt(static_cast<std::size_t>(win) * win);
    double tot = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wt[static_cast<std::size_t>((dy + r) * win + (dx + r))] = v;
            tot += v;
        }
    for (auto& v : wt) v /= tot;
    double acc = 0;
    for (std::int64_t ni = 0; ni < n; ++ni)
        for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    double ma = 0, mb = 0, ea2 = 0, eb2 = 0, eab = 0;
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            const std::int64_t yy = std::clamp<std::int64_t>(y + dy, 0, h - 1);
                            const std::int64_t xx = std::clamp<std::int64_t>(x + dx, 0, w - 1);
                            const double av = a.at({ni, ci, yy, xx});
                            const double bv = b.at({ni, ci, yy, xx});
                            const double wv = wt[static_cast<std::size_t>((dy + r) * win + (dx + r))];
                            ma += wv * av;
                            mb += wv * bv;
                            ea2 += wv * av * av;
                            eb2 += wv * bv * bv;
                            eab += wv * av * bv;
                        }
                    const double va = ea2 - ma * ma, vb = eb2 - mb * mb, cov = eab - ma * mb;
                    const double s = ((2 * ma * mb + 1e-4) * (2 * cov + 9e-4)) /
                                     ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
                    acc += (1 - s) / 2;
                }
    return acc / static_cast<double>(n * c * h * w);
}

Tensor<double> binary_mask(dcv::Rng& rng, Shape s, double keep) {
    Tensor<double> m = Tensor<double>::zeros(s);
    for (std::int64_t i = 0; i < m.numel(); ++i) m.data()[i] = rng.uniform() < keep ? 1.0 : 0.0;
    if (dcv::sum(m).item() == 0.0) m.data()[0] = 1.0;
    return m;
}

}  // namespace

TEST_CASE("l1_photometric masked mean") {
    dcv::Rng rng(301);
    auto a = rand_tensor(rng, {2, 3, 4, 5});
    auto ones = Tensor<double>::ones({2, 1, 4, 5});
    CHECK(dcv::l1_photometric(a, a, ones).item() == 0.0);

    // sixteenths keep the +0.5 offset exactly representable
    Tensor<double> q = Tensor<double>::zeros({2, 3, 4, 5});
    for (std::int64_t i = 0; i < q.numel(); ++i)
        q.data()[i] = static_cast<double>(rng.uniform_int(16)) / 16.0;
    CHECK(dcv::l1_photometric(q, q + 0.5, ones).item() == 0.5);

    auto b = rand_tensor(rng, {2, 3, 4, 5});
    auto mask = binary_mask(rng, {2, 1, 4, 5}, 0.6);
    double num = 0, cnt = 0;
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t c = 0; c < 3; ++c)
            for (std::int64_t y = 0; y < 4; ++y)
                for (std::int64_t x = 0; x < 5; ++x)
                    if (mask.at({n, 0, y, x}) == 1.0) {
                        num += std::abs(a.at({n, c, y, x}) - b.at({n, c, y, x}));
                        cnt += 1;
                    }
    CHECK(dcv::l1_photometric(a, b, mask).item() == doctest::Approx(num / cnt).epsilon(1e-12));

    CHECK_THROWS(dcv::l1_photometric(a, b, Tensor<double>::zeros({2, 1, 4, 5})));
    CHECK_THROWS(dcv::l1_photometric(a, rand_tensor(rng, {2, 3, 4, 6}), ones));
    CHECK_THROWS(dcv::l1_photometric(a, b, Tensor<double>::ones({2, 3, 4, 5})));

    gradcheck({a, b}, [&](std::vector<Tensor<double>>& in) {
        return dcv::l1_photometric(in[0], in[1], mask);
    });
}

TEST_CASE("ssim_loss zero at identity and symmetric") {
    dcv::Rng rng(307);
    auto a = rand_tensor(rng, {1, 2, 8, 8}, 0.0, 1.0);
    auto b = rand_tensor(rng, {1, 2, 8, 8}, 0.0, 1.0);
    CHECK(dcv::ssim_loss(a, a).item() == 0.0);
    CHECK(dcv::ssim_loss(a, b).item() == dcv::ssim_loss(b, a).item());

    auto l = dcv::ssim_loss(a, b).item();
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
    auto inv = dcv::ssim_loss(a, 1.0 - a).item();
    CHECK(inv > 0.0);
    CHECK(inv <= 1.0);
}

TEST_CASE("ssim_loss matches the per-window reference") {
    dcv::Rng rng(311);
    auto a = rand_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0);
    auto b = rand_tensor(rng, {1, 1, 8, 8}, 0.0, 1.0);
    CHECK(dcv::ssim_loss(a, b, 5).item() == doctest::Approx(ssim_ref(a, b, 5)).epsilon(1e-10));
    auto c = rand_tensor(rng, {2, 2, 6, 7}, 0.0, 1.0);
    auto d = rand_tensor(rng, {2, 2, 6, 7}, 0.0, 1.0);
    CHECK(dcv::ssim_loss(c, d, 3).item() == doctest::Approx(ssim_ref(c, d, 3)).epsilon(1e-10));

    CHECK_THROWS(dcv::ssim_loss(a, b, 4));
    CHECK_THROWS(dcv::ssim_loss(a, b, 9));
    CHECK_THROWS(dcv::ssim_loss(a, rand_tensor(rng, {1, 1, 8, 9})));

    auto sa = rand_tensor(rng, {1, 1, 5, 6}, 0.1, 0.9);
    auto sb = rand_tensor(rng, {1, 1, 5, 6}, 0.1, 0.9);
    gradcheck({sa, sb}, [](std::vector<Tensor<double>>& in) {
        return dcv::ssim_loss(in[0], in[1], 3);
    });
}

TEST_CASE("smoothness_loss closed forms") {
    dcv::Rng rng(313);
    auto guide = rand_tensor(rng, {1, 3, 4, 9});
    CHECK(dcv::smoothness_loss(Tensor<double>::full({1, 1, 4, 9}, 0.7), guide).item() == 0.0);

    // x-ramp of slope 1/4 against a flat guide: mean |slope| exactly
    Tensor<double> ramp = Tensor<double>::zeros({1, 1, 4, 9});
    for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 0; x < 9; ++x) ramp.data()[y * 9 + x] = 0.25 * x;
    auto flat = Tensor<double>::full({1, 3, 4, 9}, 0.3);
    CHECK(dcv::smoothness_loss(ramp, flat).item() == 0.25);

    // a depth step costs less where the guide has an aligned strong edge
    Tensor<double> step = Tensor<double>::zeros({1, 1, 4, 8});
    Tensor<double> edgy = Tensor<double>::zeros({1, 1, 4, 8});
    for (std::int64_t y = 0; y < 4; ++y)
        for (std::int64_t x = 4; x < 8; ++x) {
            step.data()[y * 8 + x] = 1.0;
            edgy.data()[y * 8 + x] = 3.0;
        }
    auto flat8 = Tensor<double>::full({1, 1, 4, 8}, 0.5);
    auto on_edge = dcv::smoothness_loss(step, edgy).item();
    auto on_flat = dcv::smoothness_loss(step, flat8).item();
    CHECK(on_edge < on_flat);
    CHECK(on_flat == 4.0 / 28.0);
    CHECK(on_edge == doctest::Approx(4.0 * std::exp(-3.0) / 28.0).epsilon(1e-12));

    CHECK_THROWS(dcv::smoothness_loss(rand_tensor(rng, {1, 2, 4, 9}), guide));
    CHECK_THROWS(dcv::smoothness_loss(rand_tensor(rng, {1, 1, 4, 8}), guide));

    auto depth = rand_tensor(rng, {1, 1, 4, 5});
    auto g = rand_tensor(rng, {1, 2, 4, 5});
    gradcheck({depth, g}, [](std::vector<Tensor<double>>& in) {
        return dcv::smoothness_loss(in[0], in[1]);
    });
}

TEST_CASE("depth_total_loss composition and degenerate weights") {
    dcv::Rng rng(317);
    auto ref = rand_tensor(rng, {1, 2, 6, 6}, 0.0, 1.0);
    auto depth = rand_tensor(rng, {1, 1, 6, 6}, 0.5, 2.0);
    std::vector<dcv::WarpedView<double>> views;
    for (int i = 0; i < 2; ++i)
        views.push_back({rand_tensor(rng, {1, 2, 6, 6}, 0.0, 1.0),
                         binary_mask(rng, {1, 1, 6, 6}, 0.8)});

    dcv::DepthLossWeights<double> w;
    auto total = dcv::depth_total_loss(ref, views, depth, w, 5);
    auto s = (dcv::ssim_loss(ref, views[0].image, 5) + dcv::ssim_loss(ref, views[1].image, 5)) / 2.0;
    auto l = (dcv::l1_photometric(ref, views[0].image, views[0].mask) +
              dcv::l1_photometric(ref, views[1].image, views[1].mask)) /
             2.0;
    auto expect = 0.85 * s + (1.0 - 0.85) * l + 0.1 * dcv::smoothness_loss(depth, ref);
    CHECK(total.item() == expect.item());

    dcv::DepthLossWeights<double> pure_l1{0.0, 0.0};
    std::vector<dcv::WarpedView<double>> one(views.begin(), views.begin() + 1);
    CHECK(dcv::depth_total_loss(ref, one, depth, pure_l1, 5).item() ==
          dcv::l1_photometric(ref, views[0].image, views[0].mask).item());

    // perfect warp and constant depth sit at the loss minimum of zero
    std::vector<dcv::WarpedView<double>> perfect{{ref, Tensor<double>::ones({1, 1, 6, 6})}};
    CHECK(dcv::depth_total_loss(ref, perfect, Tensor<double>::full({1, 1, 6, 6}, 1.5), w, 5)
              .item() == 0.0);

    double prev = -1.0;
    for (double lam : {0.0, 0.05, 0.5}) {
        dcv::DepthLossWeights<double> wl{0.85, lam};
        double v = dcv::depth_total_loss(ref, views, depth, wl, 5).item();
        CHECK(v > prev);
        prev = v;
    }

    CHECK_THROWS(dcv::depth_total_loss(ref, {}, depth, w, 5));
    CHECK_THROWS(dcv::depth_total_loss(ref, views, depth, {1.2, 0.1}, 5));
    CHECK_THROWS(dcv::depth_total_loss(ref, views, depth, {0.5, -0.1}, 5));

    auto small_ref = rand_tensor(rng, {1, 1, 5, 5}, 0.1, 0.9);
    auto small_view = rand_tensor(rng, {1, 1, 5, 5}, 0.1, 0.9);
    auto small_depth = rand_tensor(rng, {1, 1, 5, 5}, 0.5, 2.0);
    gradcheck({small_ref, small_view, small_depth}, [](std::vector<Tensor<double>>& in) {
        std::vector<dcv::WarpedView<double>> v{{in[1], Tensor<double>::ones({1, 1, 5, 5})}};
        return dcv::depth_total_loss(in[0], v, in[2], {0.6, 0.2}, 3);
    });
}

TEST_CASE("attack_losses hand-computed triplets") {
    auto kp = Tensor<double>::from_list({3, 2}, {0, 0, 0.4, 0, 0, 0.5});
    auto desc_a = Tensor<double>::from_list({3, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0});
    auto desc_b = Tensor<double>::from_list(
        {3, 4}, {0.6, 0.8, 0, 0, 0, 0.6, 0.8, 0, 0, 0, 0.28, 0.96});
    auto h = dcv::detail::eye<double>(3);
    auto img = Tensor<double>::from_list({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});

    auto r = dcv::attack_losses(kp, desc_a, kp, desc_b, h, {img}, {img});
    CHECK(r.location.item() == 0.0);
    CHECK(r.regularizer.item() == 0.0);
    const double s04 = std::sqrt(0.4), s08 = std::sqrt(0.8), s2 = std::sqrt(2.0);
    const double want = ((1 + s08 - s2) + (1 + s08 - s04) + (2.2 - s04)) / 3.0;
    CHECK(r.descriptor.item() == doctest::Approx(want).epsilon(1e-9));
    CHECK(r.total.item() == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("attack_losses hinge flag and location term") {
    // one genuine pair plus one far keypoint acting as the hard negative
    auto kp_a = Tensor<double>::from_list({1, 2}, {0, 0});
    auto kp_b = Tensor<double>::from_list({2, 2}, {0, 0, 0.5, 0.5});
    auto da = Tensor<double>::from_list({1, 2}, {1, 0});
    auto db = Tensor<double>::from_list({2, 2}, {1, 0, 0, 1});
    auto h = dcv::detail::eye<double>(3);
    auto img = Tensor<double>::from_list({1, 1, 1, 2}, {0.5, 0.5});
    auto img0 = Tensor<double>::from_list({1, 1, 1, 2}, {0.25, 0.75});

    dcv::AttackLossWeights<double> hinge;
    auto rh = dcv::attack_losses(kp_a, da, kp_b, db, h, {img}, {img0}, hinge);
    CHECK(rh.descriptor.item() == 0.0);
    CHECK(rh.regularizer.item() == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(rh.total.item() == doctest::Approx(10.0 * 0.0625).epsilon(1e-12));

    dcv::AttackLossWeights<double> literal = hinge;
    literal.hinge = false;
    auto rl = dcv::attack_losses(kp_a, da, kp_b, db, h, {img}, {img0}, literal);
    CHECK(rl.descriptor.item() == doctest::Approx(1.0 - std::sqrt(2.0)).epsilon(1e-4));

    // a dyadic translation maps the pair exactly, so the residual is zero
    auto ht = Tensor<double>::from_list({3, 3}, {1, 0, 0.25, 0, 1, 0, 0, 0, 1});
    auto kp_a2 = Tensor<double>::from_list({1, 2}, {0.375, 0.25});
    auto kp_b2 = Tensor<double>::from_list({2, 2}, {0.125, 0.25, 0.625, 0.75});
    auto r2 = dcv::attack_losses(kp_a2, da, kp_b2, db, ht, {img}, {img});
    CHECK(r2.location.item() == 0.0);

    // offset pair: mean squared residual per pair
    auto kp_a3 = Tensor<double>::from_list({1, 2}, {0.03, -0.04});
    auto kp_b3 = Tensor<double>::from_list({2, 2}, {0, 0, 0.5, 0.5});
    auto r3 = dcv::attack_losses(kp_a3, da, kp_b3, db, h, {img}, {img});
    CHECK(r3.location.item() == doctest::Approx(0.0025).epsilon(1e-14));

    auto far = Tensor<double>::from_list({1, 2}, {0.9, 0.9});
    CHECK_THROWS(dcv::attack_losses(far, da, kp_b, db, h, {img}, {img}));
    CHECK_THROWS(dcv::attack_losses(Tensor<double>::zeros({0, 2}), Tensor<double>::zeros({0, 2}),
                                    kp_b, db, h, {img}, {img}));
    CHECK_THROWS(dcv::attack_losses(kp_a, da, kp_b, db, h, {img},
                                    {Tensor<double>::zeros({1, 1, 2, 2})}));
}

TEST_CASE("attack_losses differentiates through every tensor input") {
    auto kp_a = Tensor<double>::from_list({3, 2}, {0.01, 0.0, 0.41, 0.01, -0.01, 0.52});
    auto kp_b = Tensor<double>::from_list({3, 2}, {0.0, 0.01, 0.4, 0.0, 0.0, 0.5});
    auto desc_a = Tensor<double>::from_list({3, 3}, {0.9, 0.1, 0.2, 0.1, 0.8, 0.3, 0.2, 0.3, 0.7});
    auto desc_b = Tensor<double>::from_list({3, 3}, {0.8, 0.2, 0.1, 0.2, 0.9, 0.2, 0.1, 0.2, 0.9});
    auto h = dcv::detail::eye<double>(3);
    dcv::Rng rng(331);
    auto ia = rand_tensor(rng, {1, 1, 3, 3});
    auto ib = rand_tensor(rng, {1, 1, 3, 3});
    auto ia0 = rand_tensor(rng, {1, 1, 3, 3});
    auto ib0 = rand_tensor(rng, {1, 1, 3, 3});

    gradcheck({kp_a, kp_b, desc_a, desc_b, h, ia, ib}, [&](std::vector<Tensor<double>>& in) {
        auto r = dcv::attack_losses(in[0], in[2], in[1], in[3], in[4],
                                    {in[5], in[6]}, {ia0, ib0});
        return r.total;
    });
}
