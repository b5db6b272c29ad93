#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <doctest.h>

#include "dcv/core/graph.hpp"
#include "dcv/core/ops.hpp"
#include "dcv/core/rng.hpp"
#include "dcv/core/tensor.hpp"

namespace oracles {

inline bool close(double a, double b, double rel, double abs_tol) {
    return std::abs(a - b) <= abs_tol + rel * std::max(std::abs(a), std::abs(b));
}

struct GradCheckOpts {
    double rel = 1e-4;
    double abs = 1e-7;
    double eps = 1e-5;
};

// Compares reverse-mode gradients of a scalar-valued function against central
// differences. `fn` receives the inputs (graph-attached when differentiating,
// plain values when probing) and must return a scalar tensor.
inline void gradcheck(std::vector<dcv::Tensor<double>> inputs,
                      const std::function<dcv::Tensor<double>(std::vector<dcv::Tensor<double>>&)>& fn,
                      GradCheckOpts opts = {}) {
    dcv::Graph<double> graph;
    std::vector<dcv::Tensor<double>> leaves;
    leaves.reserve(inputs.size());
    for (auto& in : inputs) leaves.push_back(graph.leaf(in));
    dcv::Tensor<double> loss = fn(leaves);
    REQUIRE(loss.numel() == 1);
    auto grads = dcv::backward(loss);

    auto value_at = [&]() {
        std::vector<dcv::Tensor<double>> plain;
        plain.reserve(inputs.size());
        for (auto& in : inputs) plain.push_back(in.detached());
        return fn(plain).item();
    };

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const dcv::Tensor<double> analytic = grads.at(leaves[i]);
        double* p = inputs[i].data();
        for (std::int64_t k = 0; k < inputs[i].numel(); ++k) {
            const double saved = p[k];
            const double step = opts.eps * std::max(1.0, std::abs(saved));
            p[k] = saved + step;
            const double lp = value_at();
            p[k] = saved - step;
            const double lm = value_at();
            p[k] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double got = analytic.data()[k];
            INFO("input ", i, " element ", k, ": analytic ", got, " numeric ", numeric);
            CHECK(close(got, numeric, opts.rel, opts.abs));
        }
    }
}

inline dcv::Tensor<double> rand_tensor(dcv::Rng& rng, dcv::Shape shape, double lo = -1.0, double hi = 1.0) {
    dcv::Tensor<double> t = dcv::Tensor<double>::zeros(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace oracles
