#pragma once

#include <initializer_list>
#include <vector>

#include "patcher/tensor.hpp"

namespace patcher::detail {

inline bool grads_needed(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::current().recording()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

inline std::vector<int64_t> strides_of(const Shape& shape) {
    std::vector<int64_t> st(shape.size(), 1);
    for (int64_t i = static_cast<int64_t>(shape.size()) - 2; i >= 0; --i) {
        st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
    }
    return st;
}

// Odometer-style multi-index increment; returns false after the last index.
inline bool next_index(std::vector<int64_t>& idx, const Shape& shape) {
    for (int64_t i = static_cast<int64_t>(idx.size()) - 1; i >= 0; --i) {
        if (++idx[static_cast<size_t>(i)] < shape[static_cast<size_t>(i)]) return true;
        idx[static_cast<size_t>(i)] = 0;
    }
    return false;
}

}  // namespace patcher::detail
