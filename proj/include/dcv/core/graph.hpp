#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "dcv/core/tensor.hpp"

namespace dcv {

template <typename T>
class GradSink;

// Tape of recorded operations. Nodes are appended in execution order, so the
// insertion order is already topological and backward is a single reverse
// sweep visiting each node once. The tape is confined to one logical thread.
template <typename T>
class Graph {
public:
    using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)>;

    struct NodeRec {
        std::vector<int> parents;
        Shape shape;
        bool is_leaf = false;
        BackwardFn backward;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Registers `value` as a differentiable leaf. The returned tensor shares
    // the buffer with `value`.
    Tensor<T> leaf(const Tensor<T>& value) {
        NodeRec rec;
        rec.shape = value.shape();
        rec.is_leaf = true;
        nodes_.push_back(std::move(rec));
        Tensor<T> out = value.detached();
        out.attach(this, static_cast<int>(nodes_.size()) - 1, epoch_);
        return out;
    }

    int record(Shape out_shape, std::vector<int> parents, BackwardFn fn) {
        NodeRec rec;
        rec.parents = std::move(parents);
        rec.shape = std::move(out_shape);
        rec.backward = std::move(fn);
        nodes_.push_back(std::move(rec));
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::size_t size() const { return nodes_.size(); }
    std::uint64_t epoch() const { return epoch_; }
    const NodeRec& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

    // Drops all recorded nodes. Tensors attached before the reset become
    // detached (their epoch no longer matches).
    void reset() {
        nodes_.clear();
        ++epoch_;
    }

private:
    std::vector<NodeRec> nodes_;
    std::uint64_t epoch_ = 1;
};

template <typename T>
Graph<T>* Tensor<T>::graph() const {
    return graph_;
}

template <typename T>
bool Tensor<T>::on_graph() const {
    return graph_ != nullptr && node_ >= 0 && epoch_ == graph_->epoch();
}

// Accumulates gradient contributions during a backward sweep.
template <typename T>
class GradSink {
public:
    explicit GradSink(std::vector<Tensor<T>>& grads) : grads_(grads) {}

    void add(int node, Tensor<T> g) {
        if (node < 0) return;
        Tensor<T>& slot = grads_[static_cast<std::size_t>(node)];
        if (!slot.defined()) {
            slot = std::move(g);
            return;
        }
        if (!slot.sole_owner()) slot = slot.clone();  // buffer may back another node's grad
        const T* src = g.data();
        T* dst = slot.data();
        const std::int64_t n = slot.numel();
        for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }

private:
    std::vector<Tensor<T>>& grads_;
};

// Result of a backward sweep: per-leaf gradients, queried by tensor.
// Leaves not reached by the sweep report a zero gradient of their own shape.
template <typename T>
class GradMap {
public:
    GradMap(const Graph<T>* g, std::uint64_t epoch, std::vector<Tensor<T>> grads)
        : graph_(g), epoch_(epoch), grads_(std::move(grads)) {}

    Tensor<T> at(const Tensor<T>& leaf) const {
        detail::check(leaf.graph() == graph_ && leaf.node() >= 0 && epoch_ == graph_->epoch(),
                      "gradient lookup for a tensor not on this graph");
        const auto& t = grads_[static_cast<std::size_t>(leaf.node())];
        if (t.defined()) return t;
        return Tensor<T>::zeros(graph_->node(leaf.node()).shape);
    }

    bool reached(const Tensor<T>& leaf) const {
        return leaf.node() >= 0 && grads_[static_cast<std::size_t>(leaf.node())].defined();
    }

private:
    const Graph<T>* graph_;
    std::uint64_t epoch_;
    std::vector<Tensor<T>> grads_;
};

// Reverse sweep from `root`, seeded with d(root)/d(root) = seed. Visits nodes
// in reverse insertion order exactly once; forward buffers are never mutated.
template <typename T>
GradMap<T> backward(const Tensor<T>& root, Tensor<T> seed) {
    detail::check(root.on_graph(), "backward root is not attached to a graph");
    Graph<T>* g = root.graph();
    detail::check(seed.shape() == root.shape(), "backward seed shape must match root shape");

    std::vector<Tensor<T>> grads(g->size());
    grads[static_cast<std::size_t>(root.node())] = std::move(seed);
    GradSink<T> sink(grads);

    for (int i = root.node(); i >= 0; --i) {
        const auto& rec = g->node(i);
        Tensor<T>& gi = grads[static_cast<std::size_t>(i)];
        if (!gi.defined() || rec.is_leaf) continue;
        rec.backward(gi, sink);
        gi = Tensor<T>();  // intermediate grads are dead once propagated
    }
    return GradMap<T>(g, g->epoch(), std::move(grads));
}

template <typename T>
GradMap<T> backward(const Tensor<T>& root) {
    detail::check(root.numel() == 1, "backward without a seed requires a scalar root");
    return backward(root, Tensor<T>::full(root.shape(), T(1)));
}

namespace detail {

// Common graph of the inputs; null when all are detached. Mixing graphs is a
// usage error.
template <typename T>
Graph<T>* graph_of(std::initializer_list<const Tensor<T>*> ts) {
    Graph<T>* g = nullptr;
    for (const Tensor<T>* t : ts) {
        if (t->defined() && t->on_graph()) {
            if (g == nullptr) {
                g = t->graph();
            } else {
                check(g == t->graph(), "operands recorded on different graphs");
            }
        }
    }
    return g;
}

template <typename T>
int node_or_negative(const Tensor<T>& t) {
    return t.on_graph() ? t.node() : -1;
}

}  // namespace detail

}  // namespace dcv
