#pragma once

#include <optional>
#include <vector>

#include "patcher/nn.hpp"

namespace patcher {

// Per-stage Transformer hyperparameters.
struct StageConfig {
    int64_t embed_dim = 64;
    int64_t n_blocks = 1;     // N_v
    int64_t heads = 1;
    int64_t reduction = 1;    // spatial reduction ratio of keys/values
    int64_t ffn_expansion = 4;

    void validate() const {
        if (embed_dim <= 0 || n_blocks < 0 || heads <= 0 || reduction <= 0 || ffn_expansion <= 0) {
            throw ConfigError("stage config fields must be positive (n_blocks may be 0)");
        }
        if (embed_dim % heads != 0) {
            throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " + std::to_string(heads));
        }
    }
};

// [B,d,M,M] -> [B,M*M,d], tokens row-major over the grid.
Tensor map_to_tokens(const Tensor& x);
// [B,N,d] -> [B,d,M,M]; N must be a perfect square.
Tensor tokens_to_map(const Tensor& x);

// Shared linear embedding of each non-overlapping small patch into a token.
struct PatchEmbed {
    Conv2dLayer proj;  // kernel = stride = small patch side
    int64_t small = 2;

    PatchEmbed() = default;
    PatchEmbed(ParameterStore& store, const std::string& name, int64_t in_ch, int64_t embed_dim, int64_t small_side, Rng& rng);

    // [B,C,side,side] -> [B, (side/small)^2, embed_dim]
    Tensor forward(const Tensor& stacked) const;
};

// SegFormer-style attention: queries from every token, keys/values from a
// token grid reduced by `reduction` via a learned strided projection + norm.
struct EfficientSelfAttention {
    Linear query, key, value, proj;
    std::optional<Conv2dLayer> reduce;
    std::optional<LayerNormLayer> reduce_norm;
    int64_t dim = 0;
    int64_t heads = 1;
    int64_t reduction = 1;

    EfficientSelfAttention() = default;
    EfficientSelfAttention(ParameterStore& store, const std::string& name, const StageConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [B,N,d] -> [B,N,d]
};

// Token MLP with an interior 3x3 depthwise conv over the token grid; this
// carries positional information, so no positional encodings exist anywhere.
struct MixFfn {
    Linear fc1, fc2;
    Conv2dLayer dwconv;

    MixFfn() = default;
    MixFfn(ParameterStore& store, const std::string& name, int64_t dim, int64_t expansion, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [B,N,d] -> [B,N,d]
};

// Pre-norm residual block: x + Attn(LN(x)), then x + MixFFN(LN(x)).
struct VitBlock {
    LayerNormLayer norm1, norm2;
    EfficientSelfAttention attn;
    MixFfn ffn;

    VitBlock() = default;
    VitBlock(ParameterStore& store, const std::string& name, const StageConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& x) const;
};

// The N_v-deep stack; n_blocks == 0 is the identity.
Tensor run_vit_stack(const std::vector<VitBlock>& blocks, Tensor x);

}  // namespace patcher
