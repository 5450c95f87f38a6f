#include "patcher/tensor.hpp"

#include <sstream>

namespace patcher {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape shape) {
    validate_shape(shape);
    auto node = std::make_shared<detail::Node>();
    node->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
    node->shape = std::move(shape);
    return wrap(std::move(node));
}

Tensor Tensor::full(Shape shape, float fill) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.node()->value) v = fill;
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    validate_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    return wrap(std::move(node));
}

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss tensor");
    }
    if (ops_.empty()) {
        throw ContractError("backward called with an empty tape");
    }
    auto node = loss.node();
    float* g = node->ensure_grad();
    g[0] += 1.0f;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
}

}  // namespace patcher
