#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace aftrans {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
struct Node;

/// Dense row-major tensor with an optional gradient buffer and a tape node
/// linking it to the operation that produced it.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<std::vector<T>> grad;
    bool requires_grad = false;
    std::shared_ptr<Node<T>> node;

    Tensor() : data(std::make_shared<std::vector<T>>()) {}

    // requires_grad tensors get their grad buffer at construction so that
    // every copy on the tape shares the same accumulation target.
    static Tensor zeros(std::vector<std::size_t> shp, bool rg = false) {
        Tensor t;
        t.shape = std::move(shp);
        t.data = std::make_shared<std::vector<T>>(count(t.shape), T(0));
        t.requires_grad = rg;
        if (rg) t.ensure_grad();
        return t;
    }

    static Tensor from(std::vector<std::size_t> shp, std::vector<T> values, bool rg = false) {
        if (count(shp) != values.size())
            throw ShapeError("tensor: data length does not match shape");
        Tensor t;
        t.shape = std::move(shp);
        t.data = std::make_shared<std::vector<T>>(std::move(values));
        t.requires_grad = rg;
        if (rg) t.ensure_grad();
        return t;
    }

    static Tensor scalar(T v, bool rg = false) {
        return from({1}, {v}, rg);
    }

    static std::size_t count(const std::vector<std::size_t>& shp) {
        std::size_t n = 1;
        for (auto e : shp) n *= e;
        return n;
    }

    std::size_t numel() const { return data->size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const {
        if (shape.size() != 2) throw ShapeError("rows(): tensor is not rank-2");
        return shape[0];
    }
    std::size_t cols() const {
        if (shape.size() != 2) throw ShapeError("cols(): tensor is not rank-2");
        return shape[1];
    }

    T& at(std::size_t r, std::size_t c) { return (*data)[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return (*data)[r * shape[1] + c]; }

    T& operator[](std::size_t i) { return (*data)[i]; }
    const T& operator[](std::size_t i) const { return (*data)[i]; }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<T>>(numel(), T(0));
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }

    /// Value-only copy: same data snapshot, detached from the tape.
    Tensor detached_copy() const {
        Tensor t;
        t.shape = shape;
        t.data = std::make_shared<std::vector<T>>(*data);
        return t;
    }

    bool all_finite() const {
        for (T v : *data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

template <typename T>
struct Node {
    std::vector<Tensor<T>> parents;
    // Reads out.grad, accumulates into each parent's grad buffer.
    std::function<void(Tensor<T>& out)> backward;
};

namespace detail {

template <typename T>
void topo_visit(const std::shared_ptr<Node<T>>& node, Tensor<T> holder,
                std::unordered_set<Node<T>*>& seen, std::vector<Tensor<T>>& order) {
    if (!node || seen.count(node.get())) return;
    seen.insert(node.get());
    for (auto& p : node->parents)
        topo_visit(p.node, p, seen, order);
    order.push_back(std::move(holder));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Gradients accumulate additively
/// into every requires_grad tensor reachable through the tape.
template <typename T>
void backward(Tensor<T>& loss) {
    if (loss.numel() != 1)
        throw ValueError("backward: root must be a scalar tensor");
    loss.ensure_grad();
    (*loss.grad)[0] = T(1);

    std::unordered_set<Node<T>*> seen;
    std::vector<Tensor<T>> order;
    detail::topo_visit(loss.node, loss, seen, order);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto& t = *it;
        if (t.node && t.node->backward) {
            t.ensure_grad();
            t.node->backward(t);
        }
    }
}

}  // namespace aftrans
