#pragma once

#include "patcher/decoder.hpp"
#include "patcher/encoder.hpp"

namespace patcher {

struct ModelConfig {
    PatcherConfig encoder;
    DecoderConfig decoder;

    void validate() const {
        encoder.validate();
        decoder.validate();
    }

    static ModelConfig paper_default(int64_t in_channels = 3) {
        return {PatcherConfig::paper_default(in_channels), DecoderConfig::paper_default()};
    }
    static ModelConfig tiny(int64_t in_channels = 1) {
        return {PatcherConfig::tiny(in_channels), DecoderConfig::tiny()};
    }
};

// Encoder cascade + MoE decoder; outputs raw segmentation logits at the
// input's spatial size (stage padding is cropped back off at the end).
struct PatcherModel {
    ModelConfig cfg;
    Encoder encoder;
    MoeDecoder decoder;

    PatcherModel() = default;
    PatcherModel(ParameterStore& store, const ModelConfig& cfg_, Rng& rng)
        : cfg(cfg_),
          encoder(store, "enc", cfg_.encoder, rng),
          decoder(store, "dec",
                  {cfg_.encoder.stage[0].embed_dim, cfg_.encoder.stage[1].embed_dim, cfg_.encoder.stage[2].embed_dim, cfg_.encoder.stage[3].embed_dim},
                  cfg_.decoder, rng) {}

    Tensor forward(const Tensor& image, ExpertFeatures* capture = nullptr) const {
        std::array<Tensor, 4> maps = encoder.encode(image);
        return decoder.forward(maps, image.dim(2), image.dim(3), capture);
    }
};

// Builds a model with parameters drawn from `seed`, registered in `store`.
inline PatcherModel build_model(ParameterStore& store, const ModelConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    return PatcherModel(store, cfg, rng);
}

}  // namespace patcher
