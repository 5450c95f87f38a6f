#pragma once

#include <array>
#include <vector>

#include "patcher/nn.hpp"

namespace patcher {

struct DecoderConfig {
    int64_t expert_dim = 256;                          // D
    std::array<int64_t, 2> mlp_hidden{256, 256};       // pixel-wise MLP hidden widths
    std::array<int64_t, 4> gate_channels{256, 256, 256, 4};

    void validate() const {
        if (expert_dim <= 0 || mlp_hidden[0] <= 0 || mlp_hidden[1] <= 0) {
            throw ConfigError("decoder: widths must be positive");
        }
        for (int64_t c : gate_channels) {
            if (c <= 0) throw ConfigError("decoder: gate channels must be positive");
        }
        if (gate_channels[3] != 4) {
            throw ConfigError("decoder: final gate channels must equal the 4 experts, got " + std::to_string(gate_channels[3]));
        }
    }

    static DecoderConfig paper_default() { return DecoderConfig{}; }
    static DecoderConfig tiny() { return DecoderConfig{16, {16, 16}, {16, 16, 16, 4}}; }
};

// The decoder's inspectable intermediates: upsampled expert maps F1..F4,
// per-pixel gate weights W1..W4 (each with a singleton channel axis), and
// the combined map O.
struct ExpertFeatures {
    std::array<Tensor, 4> experts;
    std::array<Tensor, 4> weights;
    Tensor combined;
};

// Pixel-wise MLP: 1x1 conv chain with ReLU between layers, none after last.
struct PixelMlp {
    std::vector<Conv2dLayer> layers;

    PixelMlp() = default;
    PixelMlp(ParameterStore& store, const std::string& name, const std::vector<int64_t>& widths, Rng& rng);

    Tensor forward(const Tensor& x) const;
};

struct MoeDecoder {
    DecoderConfig cfg;
    std::array<PixelMlp, 4> expert_mlps;
    std::vector<Conv2dLayer> gate_convs;  // 3x3 chain, ReLU after all but last
    PixelMlp head;                        // D -> hidden -> hidden -> 1

    MoeDecoder() = default;
    MoeDecoder(ParameterStore& store, const std::string& name, const std::array<int64_t, 4>& encoder_dims, const DecoderConfig& cfg_, Rng& rng);

    // Per-expert pixel-wise MLP at native resolution, then bilinear resize
    // to the first map's spatial dims.
    std::array<Tensor, 4> project(const std::array<Tensor, 4>& encoder_maps) const;

    // Concat -> conv chain -> per-pixel softmax over the 4 expert channels;
    // returns each weight map as [B,1,H,W].
    std::array<Tensor, 4> gate(const std::array<Tensor, 4>& experts) const;

    // O = sum_i W_i (*) F_i with W_i broadcast across channels.
    static Tensor combine(const std::array<Tensor, 4>& experts, const std::array<Tensor, 4>& weights);

    // Head MLP, upsample x2, crop padding back to the original image size.
    Tensor predict(const Tensor& combined, int64_t out_h, int64_t out_w) const;

    Tensor forward(const std::array<Tensor, 4>& encoder_maps, int64_t out_h, int64_t out_w, ExpertFeatures* capture = nullptr) const;
};

}  // namespace patcher
