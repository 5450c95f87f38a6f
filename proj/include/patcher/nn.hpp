#pragma once

#include <string>

#include "patcher/ops.hpp"
#include "patcher/params.hpp"

namespace patcher {

// Dense layer; weight is [in, out] so forward is a plain matmul.
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, int64_t in, int64_t out, Rng& rng) {
        weight = init_trunc_normal(store, name + ".weight", {in, out}, rng);
        bias = init_zeros(store, name + ".bias", {out});
    }

    Tensor forward(const Tensor& x) const {
        const int64_t in = weight.dim(0), out = weight.dim(1);
        Shape out_shape = x.shape();
        out_shape.back() = out;
        const int64_t rows = x.numel() / in;
        Tensor flat = reshape(x, {rows, in});
        Tensor y = matmul(flat, weight);
        y = add(y, expand(reshape(bias, {1, out}), {rows, out}));
        return reshape(y, std::move(out_shape));
    }
};

struct LayerNormLayer {
    Tensor gamma;
    Tensor beta;

    LayerNormLayer() = default;
    LayerNormLayer(ParameterStore& store, const std::string& name, int64_t dim) {
        gamma = init_ones(store, name + ".gamma", {dim});
        beta = init_zeros(store, name + ".beta", {dim});
    }

    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

struct Conv2dLayer {
    Tensor weight;  // [out, in/groups, k, k]
    Tensor bias;
    int64_t stride = 1;
    int64_t pad = 0;
    int64_t groups = 1;

    Conv2dLayer() = default;
    Conv2dLayer(ParameterStore& store, const std::string& name, int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride_, int64_t pad_, int64_t groups_, Rng& rng)
        : stride(stride_), pad(pad_), groups(groups_) {
        weight = init_trunc_normal(store, name + ".weight", {out_ch, in_ch / groups_, kernel, kernel}, rng);
        bias = init_zeros(store, name + ".bias", {out_ch});
    }

    Tensor forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad, groups); }
};

}  // namespace patcher
