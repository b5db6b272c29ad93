#pragma once

#include <cmath>
#include <vector>

#include "dcv/core/tensor.hpp"

namespace dcv {

// Optimizers mutate the parameter buffers in place between graph epochs; the
// caller re-creates leaves from the same tensors each iteration.

template <typename T>
struct AdamOpts {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
};

template <typename T>
class Adam {
public:
    Adam(std::vector<Tensor<T>> params, AdamOpts<T> opts = {})
        : params_(std::move(params)), opts_(opts) {
        for (const auto& p : params_) {
            m_.push_back(Tensor<T>::zeros(p.shape()));
            v_.push_back(Tensor<T>::zeros(p.shape()));
        }
    }

    void step(const std::vector<Tensor<T>>& grads) {
        detail::check(grads.size() == params_.size(), "gradient count does not match parameter count");
        ++t_;
        const T bc1 = T(1) - std::pow(opts_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(opts_.beta2, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            detail::check(grads[i].shape() == params_[i].shape(), "gradient shape does not match parameter");
            T* p = params_[i].data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            const T* g = grads[i].data();
            for (std::int64_t k = 0; k < params_[i].numel(); ++k) {
                m[k] = opts_.beta1 * m[k] + (T(1) - opts_.beta1) * g[k];
                v[k] = opts_.beta2 * v[k] + (T(1) - opts_.beta2) * g[k] * g[k];
                const T mhat = m[k] / bc1;
                const T vhat = v[k] / bc2;
                p[k] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
            }
        }
    }

    std::vector<Tensor<T>>& params() { return params_; }

private:
    std::vector<Tensor<T>> params_, m_, v_;
    AdamOpts<T> opts_;
    std::int64_t t_ = 0;
};

template <typename T>
struct SgdOpts {
    T lr = T(1e-2);
    T momentum = T(0.9);
};

template <typename T>
class SgdMomentum {
public:
    SgdMomentum(std::vector<Tensor<T>> params, SgdOpts<T> opts = {})
        : params_(std::move(params)), opts_(opts) {
        for (const auto& p : params_) v_.push_back(Tensor<T>::zeros(p.shape()));
    }

    void step(const std::vector<Tensor<T>>& grads) {
        detail::check(grads.size() == params_.size(), "gradient count does not match parameter count");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            detail::check(grads[i].shape() == params_[i].shape(), "gradient shape does not match parameter");
            T* p = params_[i].data();
            T* v = v_[i].data();
            const T* g = grads[i].data();
            for (std::int64_t k = 0; k < params_[i].numel(); ++k) {
                v[k] = opts_.momentum * v[k] + g[k];
                p[k] -= opts_.lr * v[k];
            }
        }
    }

    std::vector<Tensor<T>>& params() { return params_; }

private:
    std::vector<Tensor<T>> params_, v_;
    SgdOpts<T> opts_;
};

}  // namespace dcv
