#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "patcher/errors.hpp"

namespace patcher {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One value node in the autodiff graph. Values are written once by the
// producing op; gradients accumulate with += during backward.
struct Node {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // empty until first touched by backward
    bool requires_grad = false;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    float* ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0f);
        return grad.data();
    }
};

}  // namespace detail

// Dense row-major f32 tensor. Cheap to copy (shared handle to the node).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, float fill);
    static Tensor from_data(Shape shape, std::vector<float> data);
    static Tensor scalar(float v) { return from_data({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t ndim() const { return static_cast<int64_t>(node_->shape.size()); }
    int64_t dim(int64_t i) const { return node_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return node_->numel(); }

    const float* data() const { return node_->value.data(); }
    float* mutable_data() { return node_->value.data(); }
    const std::vector<float>& values() const { return node_->value; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return node_ && !node_->grad.empty(); }
    const float* grad() const { return node_->grad.data(); }
    std::vector<float> grad_vector() const {
        return node_->grad.empty() ? std::vector<float>(node_->value.size(), 0.0f) : node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0f);
    }

    // Scalar extraction; contract-checked.
    float item() const {
        if (numel() != 1) throw ContractError("item() on tensor with " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }

    // Deep copy of values only (fresh leaf, no grad history).
    Tensor clone() const { return from_data(shape(), node_->value); }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    std::shared_ptr<detail::Node> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

// Reverse-mode tape. Thread-local: each thread owns an independent tape, so
// separate inference contexts can run concurrently over shared parameters.
class Tape {
public:
    static Tape& current();

    bool recording() const { return no_grad_depth_ == 0; }
    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    // Seeds d(loss)/d(loss) = 1, replays recorded ops in reverse, accumulating
    // grads (+=) into every requires_grad node on the path, then clears.
    void backward(const Tensor& loss);

private:
    friend struct NoGradGuard;
    std::vector<std::function<void()>> ops_;
    int no_grad_depth_ = 0;
};

// RAII scope that disables tape recording (inference / finite differences).
struct NoGradGuard {
    NoGradGuard() { ++Tape::current().no_grad_depth_; }
    ~NoGradGuard() { --Tape::current().no_grad_depth_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline void backward(const Tensor& loss) { Tape::current().backward(loss); }

}  // namespace patcher
