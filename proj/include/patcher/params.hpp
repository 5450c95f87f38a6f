#pragma once

#include <map>
#include <string>

#include "patcher/rng.hpp"
#include "patcher/tensor.hpp"

namespace patcher {

// Named parameter table. Names are hierarchical dot-separated paths;
// iteration order is lexicographic (std::map), which fixes checkpoint
// layout and optimizer traversal order.
class ParameterStore {
public:
    Tensor add(const std::string& name, Tensor t) {
        auto [it, inserted] = params_.emplace(name, std::move(t));
        if (!inserted) throw ContractError("parameter '" + name + "' already registered");
        it->second.set_requires_grad(true);
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    Tensor get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }

    size_t size() const { return params_.size(); }

    void zero_grads() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Tensor> params_;
};

// Weight init helpers: truncated normal (std 0.02) for weights, zeros for
// biases and norm betas, ones for norm gammas.
inline Tensor init_trunc_normal(ParameterStore& store, const std::string& name, Shape shape, Rng& rng, float stddev = 0.02f) {
    Tensor t = Tensor::zeros(std::move(shape));
    float* p = t.mutable_data();
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) p[i] = rng.trunc_normal(stddev);
    return store.add(name, std::move(t));
}

inline Tensor init_zeros(ParameterStore& store, const std::string& name, Shape shape) {
    return store.add(name, Tensor::zeros(std::move(shape)));
}

inline Tensor init_ones(ParameterStore& store, const std::string& name, Shape shape) {
    return store.add(name, Tensor::full(std::move(shape), 1.0f));
}

}  // namespace patcher
