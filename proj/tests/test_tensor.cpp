#include <doctest.h>

#include <cmath>
#include <vector>

#include "dcv/core/graph.hpp"
#include "dcv/core/ops.hpp"
#include "dcv/core/parallel.hpp"
#include "dcv/core/rng.hpp"
#include "dcv/core/tensor.hpp"
#include "oracles.hpp"

using dcv::Graph;
using dcv::Shape;
using dcv::Tensor;
using oracles::gradcheck;
using oracles::rand_tensor;

TEST_CASE("tensor construction and accessors") {
    auto t = Tensor<double>::from_list({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rank() == 2);
    CHECK(t.numel() == 6);
    CHECK(t.at({1, 2}) == 6);
    CHECK(t.dim(-1) == 3);
    auto s = Tensor<double>::scalar(4.5);
    CHECK(s.numel() == 1);
    CHECK(s.item() == 4.5);
    CHECK_THROWS(t.item());
    auto c = t.clone();
    c.data()[0] = 99;
    CHECK(t.data()[0] == 1);
}

TEST_CASE("broadcast add values") {
    auto a = Tensor<double>::from_list({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = Tensor<double>::from_list({3}, {10, 20, 30});
    auto c = dcv::add(a, b);
    CHECK(c.shape() == Shape{2, 3});
    CHECK(c.at({0, 0}) == 11);
    CHECK(c.at({1, 2}) == 36);
    auto col = Tensor<double>::from_list({2, 1}, {100, 200});
    auto d = dcv::add(a, col);
    CHECK(d.at({0, 2}) == 103);
    CHECK(d.at({1, 0}) == 204);
    CHECK_THROWS(dcv::add(a, Tensor<double>::from_list({4}, {1, 2, 3, 4})));
}

TEST_CASE("binary op gradients under broadcast") {
    dcv::Rng rng(7);
    auto a = rand_tensor(rng, {2, 3}, 0.5, 2.0);
    auto b = rand_tensor(rng, {3}, 0.5, 2.0);
    for (int which = 0; which < 4; ++which) {
        gradcheck({a, b}, [&](std::vector<Tensor<double>>& in) {
            Tensor<double> r;
            switch (which) {
                case 0: r = in[0] + in[1]; break;
                case 1: r = in[0] - in[1]; break;
                case 2: r = in[0] * in[1]; break;
                default: r = in[0] / in[1]; break;
            }
            return dcv::sum(r * r);
        });
    }
}

TEST_CASE("pow and atan2 gradients") {
    dcv::Rng rng(11);
    auto a = rand_tensor(rng, {4}, 0.5, 2.0);
    auto b = rand_tensor(rng, {4}, 0.5, 2.0);
    gradcheck({a, b}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::pow(in[0], in[1])); });
    auto y = rand_tensor(rng, {5}, -2.0, 2.0);
    auto x = rand_tensor(rng, {5}, 0.3, 2.0);
    gradcheck({y, x}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::atan2(in[0], in[1])); });
}

TEST_CASE("unary gradients") {
    dcv::Rng rng(3);
    auto pos = rand_tensor(rng, {6}, 0.2, 2.0);
    auto any = rand_tensor(rng, {6}, -2.0, 2.0);
    gradcheck({pos}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::log(in[0])); });
    gradcheck({pos}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::sqrt(in[0])); });
    gradcheck({any}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::exp(in[0])); });
    gradcheck({any}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::sin(in[0]) * dcv::cos(in[0])); });
    gradcheck({any}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::softplus(in[0])); });
    gradcheck({any}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::square(dcv::abs(in[0]))); });
    gradcheck({any}, [](std::vector<Tensor<double>>& in) { return dcv::sum(dcv::neg(in[0])); });
}

TEST_CASE("abs subgradient at zero is zero") {
    Graph<double> g;
    auto x = g.leaf(Tensor<double>::from_list({3}, {-1.0, 0.0, 2.0}));
    auto grads = dcv::backward(dcv::sum(dcv::abs(x)));
    auto gx = grads.at(x);
    CHECK(gx.data()[0] == -1.0);
    CHECK(gx.data()[1] == 0.0);
    CHECK(gx.data()[2] == 1.0);
}

TEST_CASE("clamp passes gradient at the boundary") {
    Graph<double> g;
    auto x = g.leaf(Tensor<double>::from_list({5}, {-2.0, 0.0, 0.5, 1.0, 3.0}));
    auto grads = dcv::backward(dcv::sum(dcv::clamp(x, 0.0, 1.0)));
    auto gx = grads.at(x);
    CHECK(gx.data()[0] == 0.0);
    CHECK(gx.data()[1] == 1.0);
    CHECK(gx.data()[2] == 1.0);
    CHECK(gx.data()[3] == 1.0);
    CHECK(gx.data()[4] == 0.0);
}

TEST_CASE("maximum and minimum route ties to the first argument") {
    Graph<double> g;
    auto a = g.leaf(Tensor<double>::from_list({3}, {1.0, 5.0, 2.0}));
    auto b = g.leaf(Tensor<double>::from_list({3}, {1.0, 3.0, 4.0}));
    auto grads = dcv::backward(dcv::sum(dcv::maximum(a, b)));
    CHECK(grads.at(a).data()[0] == 1.0);  // tie
    CHECK(grads.at(a).data()[1] == 1.0);
    CHECK(grads.at(a).data()[2] == 0.0);
    CHECK(grads.at(b).data()[0] == 0.0);
    CHECK(grads.at(b).data()[2] == 1.0);

    Graph<double> g2;
    auto c = g2.leaf(Tensor<double>::from_list({2}, {1.0, 1.0}));
    auto d = g2.leaf(Tensor<double>::from_list({2}, {1.0, 0.0}));
    auto grads2 = dcv::backward(dcv::sum(dcv::minimum(c, d)));
    CHECK(grads2.at(c).data()[0] == 1.0);  // tie
    CHECK(grads2.at(c).data()[1] == 0.0);
    CHECK(grads2.at(d).data()[1] == 1.0);
}

TEST_CASE("where selects and routes gradients") {
    dcv::Rng rng(5);
    auto cond = Tensor<double>::from_list({4}, {1, 0, 1, 0});
    auto a = rand_tensor(rng, {4});
    auto b = rand_tensor(rng, {4});
    auto out = dcv::where(cond, a, b);
    CHECK(out.data()[0] == a.data()[0]);
    CHECK(out.data()[1] == b.data()[1]);
    gradcheck({a, b}, [&](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::where(cond, in[0], in[1]) * dcv::where(cond, in[0], in[1]));
    });
}

TEST_CASE("sum and mean over axes") {
    auto a = Tensor<double>::from_list({2, 3}, {1, 2, 3, 4, 5, 6});
    auto s0 = dcv::sum(a, {0});
    CHECK(s0.shape() == Shape{3});
    CHECK(s0.data()[0] == 5);
    CHECK(s0.data()[2] == 9);
    auto s1 = dcv::sum(a, {1}, true);
    CHECK(s1.shape() == Shape{2, 1});
    CHECK(s1.data()[1] == 15);
    auto m = dcv::mean(a);
    CHECK(m.shape() == Shape{});
    CHECK(m.item() == doctest::Approx(3.5));
    CHECK_THROWS(dcv::sum(a, {0, 0}));
    CHECK_THROWS(dcv::sum(a, {2}));

    dcv::Rng rng(9);
    auto x = rand_tensor(rng, {3, 4});
    gradcheck({x}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::mean(in[0], {1})));
    });
}

TEST_CASE("reduce_max keeps first index on ties") {
    auto a = Tensor<double>::from_list({2, 3}, {1, 7, 7, 2, 2, 2});
    Graph<double> g;
    auto x = g.leaf(a);
    auto mx = dcv::reduce_max(x, {1});
    CHECK(mx.shape() == Shape{2});
    CHECK(mx.data()[0] == 7);
    CHECK(mx.data()[1] == 2);
    auto grads = dcv::backward(dcv::sum(mx));
    auto gx = grads.at(x);
    CHECK(gx.at({0, 0}) == 0);
    CHECK(gx.at({0, 1}) == 1);  // first of the tied 7s
    CHECK(gx.at({0, 2}) == 0);
    CHECK(gx.at({1, 0}) == 1);  // first of the tied 2s

    auto mn = dcv::reduce_min(a, {0});
    CHECK(mn.data()[0] == 1);
    CHECK(mn.data()[1] == 2);
}

TEST_CASE("movement ops round trip") {
    auto a = Tensor<double>::from_list({2, 3}, {1, 2, 3, 4, 5, 6});
    auto r = dcv::reshape(a, {3, -1});
    CHECK(r.shape() == Shape{3, 2});
    CHECK(r.at({2, 1}) == 6);
    CHECK_THROWS(dcv::reshape(a, {4, 2}));

    auto p = dcv::permute(a, {1, 0});
    CHECK(p.shape() == Shape{3, 2});
    CHECK(p.at({2, 0}) == 3);
    CHECK(p.at({0, 1}) == 4);

    auto sl = dcv::slice(a, 1, 1, 3);
    CHECK(sl.shape() == Shape{2, 2});
    CHECK(sl.at({0, 0}) == 2);
    CHECK(sl.at({1, 1}) == 6);

    auto cat = dcv::concat({a, a}, 0);
    CHECK(cat.shape() == Shape{4, 3});
    CHECK(cat.at({3, 2}) == 6);

    auto st = dcv::stack({a, a}, 0);
    CHECK(st.shape() == Shape{2, 2, 3});

    auto bc = dcv::broadcast_to(Tensor<double>::from_list({1, 3}, {1, 2, 3}), {2, 3});
    CHECK(bc.at({1, 1}) == 2);
}

TEST_CASE("movement op gradients") {
    dcv::Rng rng(13);
    auto a = rand_tensor(rng, {2, 3});
    auto b = rand_tensor(rng, {2, 3});
    gradcheck({a}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::reshape(in[0], {6})));
    });
    gradcheck({a}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::permute(in[0], {1, 0})));
    });
    gradcheck({a}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::slice(in[0], 1, 0, 2)));
    });
    gradcheck({a, b}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::concat({in[0], in[1]}, 1)));
    });
    gradcheck({a}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::broadcast_to(in[0], {4, 2, 3})));
    });
}

TEST_CASE("take_rows gathers and accumulates duplicates") {
    auto a = Tensor<double>::from_list({3, 2}, {1, 2, 3, 4, 5, 6});
    auto t = dcv::take_rows(a, {2, 0, 2});
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.at({0, 1}) == 6);
    CHECK(t.at({1, 0}) == 1);

    Graph<double> g;
    auto x = g.leaf(a);
    auto grads = dcv::backward(dcv::sum(dcv::take_rows(x, {2, 0, 2})));
    auto gx = grads.at(x);
    CHECK(gx.at({0, 0}) == 1);
    CHECK(gx.at({1, 0}) == 0);
    CHECK(gx.at({2, 0}) == 2);  // picked twice
    CHECK_THROWS(dcv::take_rows(a, {3}));
}

TEST_CASE("matmul matches brute force and differentiates") {
    dcv::Rng rng(17);
    auto a = rand_tensor(rng, {2, 3, 4});
    auto b = rand_tensor(rng, {2, 4, 5});
    auto c = dcv::matmul(a, b);
    CHECK(c.shape() == Shape{2, 3, 5});
    for (std::int64_t n = 0; n < 2; ++n)
        for (std::int64_t i = 0; i < 3; ++i)
            for (std::int64_t j = 0; j < 5; ++j) {
                double acc = 0;
                for (std::int64_t k = 0; k < 4; ++k) acc += a.at({n, i, k}) * b.at({n, k, j});
                CHECK(c.at({n, i, j}) == doctest::Approx(acc).epsilon(1e-12));
            }

    gradcheck({a, b}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::matmul(in[0], in[1])));
    });

    // leading-axis broadcast: single matrix against a batch
    auto m = rand_tensor(rng, {3, 3});
    auto batch = rand_tensor(rng, {4, 3, 2});
    auto out = dcv::matmul(m, batch);
    CHECK(out.shape() == Shape{4, 3, 2});
    gradcheck({m, batch}, [](std::vector<Tensor<double>>& in) {
        return dcv::sum(dcv::square(dcv::matmul(in[0], in[1])));
    });
    CHECK_THROWS(dcv::matmul(rand_tensor(rng, {2, 3}), rand_tensor(rng, {2, 3})));
}

TEST_CASE("graph reset invalidates stale tensors") {
    Graph<double> g;
    auto x = g.leaf(Tensor<double>::scalar(2.0));
    auto y = x * x;
    CHECK(y.on_graph());
    g.reset();
    CHECK_FALSE(y.on_graph());
    auto x2 = g.leaf(Tensor<double>::scalar(3.0));
    auto grads = dcv::backward(x2 * x2);
    CHECK(grads.at(x2).item() == doctest::Approx(6.0));
}

TEST_CASE("grad accumulates across reuse") {
    Graph<double> g;
    auto x = g.leaf(Tensor<double>::scalar(3.0));
    auto y = x * x + x * 4.0;  // dy/dx = 2x + 4 = 10
    auto grads = dcv::backward(y);
    CHECK(grads.at(x).item() == doctest::Approx(10.0));
}

TEST_CASE("unreached leaf reports zero gradient") {
    Graph<double> g;
    auto x = g.leaf(Tensor<double>::scalar(3.0));
    auto z = g.leaf(Tensor<double>::scalar(5.0));
    auto grads = dcv::backward(x * x);
    CHECK_FALSE(grads.reached(z));
    CHECK(grads.at(z).item() == 0.0);
}

TEST_CASE("mixing graphs throws") {
    Graph<double> g1, g2;
    auto a = g1.leaf(Tensor<double>::scalar(1.0));
    auto b = g2.leaf(Tensor<double>::scalar(2.0));
    CHECK_THROWS(dcv::add(a, b));
}

TEST_CASE("reductions are bitwise stable across thread counts") {
    dcv::Rng rng(23);
    auto x = rand_tensor(rng, {40000});
    dcv::set_num_threads(1);
    const double s1 = dcv::sum(x).item();
    const double m1 = dcv::mean(x).item();
    dcv::set_num_threads(8);
    const double s8 = dcv::sum(x).item();
    const double m8 = dcv::mean(x).item();
    CHECK(s1 == s8);
    CHECK(m1 == m8);
}

TEST_CASE("float tensors work through the same ops") {
    auto a = Tensor<float>::from_list({2, 2}, {1, 2, 3, 4});
    Graph<float> g;
    auto x = g.leaf(a);
    auto loss = dcv::sum(dcv::square(x));
    auto grads = dcv::backward(loss);
    CHECK(grads.at(x).at({1, 1}) == doctest::Approx(8.0f));
    auto d = a.cast<double>();
    CHECK(d.at({0, 1}) == 2.0);
}

TEST_CASE("rng is deterministic and fork() splits streams") {
    dcv::Rng a(42), b(42);
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    dcv::Rng c(42);
    auto d = c.fork();
    CHECK(c.next_u64() != d.next_u64());
    dcv::Rng u(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}
