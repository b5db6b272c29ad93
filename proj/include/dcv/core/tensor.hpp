#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcv {

using Shape = std::vector<std::int64_t>;

template <typename T>
class Graph;

namespace detail {

inline std::int64_t numel_of(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

inline std::vector<std::int64_t> strides_of(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::int64_t i = static_cast<std::int64_t>(s.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * s[i + 1];
    return st;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

}  // namespace detail

// Dense row-major tensor. The element buffer is shared between copies and is
// treated as immutable once an op has produced it; optimizers are the one
// deliberate exception and mutate leaf buffers between graph builds.
//
// A tensor may be attached to a Graph node, in which case it participates in
// gradient recording. Detached tensors never allocate gradient storage.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor full(Shape shape, T value) {
        Tensor t;
        t.shape_ = std::move(shape);
        for (auto e : t.shape_) detail::check(e >= 0, "tensor extent must be non-negative");
        t.buf_ = std::make_shared<std::vector<T>>(static_cast<std::size_t>(detail::numel_of(t.shape_)), value);
        return t;
    }

    static Tensor scalar(T value) { return full({}, value); }

    static Tensor from_data(std::vector<T> data, Shape shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        detail::check(detail::numel_of(t.shape_) == static_cast<std::int64_t>(data.size()),
                      "data length does not match shape " + detail::shape_str(t.shape_));
        t.buf_ = std::make_shared<std::vector<T>>(std::move(data));
        return t;
    }

    static Tensor from_list(Shape shape, std::initializer_list<T> v) {
        return from_data(std::vector<T>(v), std::move(shape));
    }
    static Tensor from_list(std::initializer_list<T> v) {
        return from_data(std::vector<T>(v), Shape{static_cast<std::int64_t>(v.size())});
    }

    bool defined() const { return buf_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t dim(std::int64_t i) const {
        if (i < 0) i += rank();
        return shape_[static_cast<std::size_t>(i)];
    }
    std::int64_t numel() const { return defined() ? static_cast<std::int64_t>(buf_->size()) : 0; }

    T* data() { return buf_->data(); }
    const T* data() const { return buf_->data(); }
    const std::vector<T>& vec() const { return *buf_; }

    T item() const {
        detail::check(numel() == 1, "item() requires a single-element tensor, got " + detail::shape_str(shape_));
        return (*buf_)[0];
    }

    T at(std::initializer_list<std::int64_t> idx) const {
        const auto st = detail::strides_of(shape_);
        std::int64_t flat = 0;
        std::size_t k = 0;
        for (auto i : idx) flat += i * st[k++];
        return (*buf_)[static_cast<std::size_t>(flat)];
    }

    // Deep copy of the buffer; result is detached.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<std::vector<T>>(*buf_);
        return t;
    }

    // True when no other tensor shares this buffer (single-threaded use).
    bool sole_owner() const { return buf_.use_count() == 1; }

    // Same buffer, no graph attachment.
    Tensor detached() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = buf_;
        return t;
    }

    // Same buffer under a new shape of equal element count; detached.
    Tensor with_shape(Shape shape) const {
        if (detail::numel_of(shape) != numel())
            detail::fail("with_shape " + detail::shape_str(shape_) + " -> " + detail::shape_str(shape) +
                         " changes element count");
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = buf_;
        return t;
    }

    // Graph attachment -----------------------------------------------------

    Graph<T>* graph() const;
    int node() const { return node_; }
    bool on_graph() const;
    bool requires_grad() const { return on_graph(); }

    void attach(Graph<T>* g, int node, std::uint64_t epoch) {
        graph_ = g;
        node_ = node;
        epoch_ = epoch;
    }

    template <typename To>
    Tensor<To> cast() const {
        std::vector<To> out(buf_->size());
        for (std::size_t i = 0; i < buf_->size(); ++i) out[i] = static_cast<To>((*buf_)[i]);
        return Tensor<To>::from_data(std::move(out), shape_);
    }

private:
    std::shared_ptr<std::vector<T>> buf_;
    Shape shape_;
    Graph<T>* graph_ = nullptr;
    int node_ = -1;
    std::uint64_t epoch_ = 0;
};

}  // namespace dcv
