#pragma once

#include <array>
#include <vector>

#include "patcher/patching.hpp"
#include "patcher/transformer.hpp"

namespace patcher {

// Full encoder hyperparameters: four stages of patch geometry + Transformer
// width/depth. Stage i consumes stage i-1's output channels.
struct PatcherConfig {
    int64_t in_channels = 3;
    std::array<PatchSpec, 4> patch{};
    std::array<StageConfig, 4> stage{};

    void validate() const;

    // Paper-scale configuration (L=32, P=8, S=2, dims 64/128/320/512,
    // depths 3/6/40/3). Heads and reduction ratios follow SegFormer-B
    // defaults since only the family is named.
    static PatcherConfig paper_default(int64_t in_channels = 3);

    // Desk-scale preset used throughout the tests.
    static PatcherConfig tiny(int64_t in_channels = 1);

    // Spatial dims of each stage output for an H x W input, by the padding
    // and halving rules alone (no tensor compute).
    static std::array<std::pair<int64_t, int64_t>, 4> stage_shapes(const PatcherConfig& cfg, int64_t h, int64_t w);
};

// One Patcher block: partition -> embed -> Transformer stack -> center-crop
// reassembly. Downsamples spatially by the small patch side.
struct PatcherBlock {
    PatchSpec spec;
    StageConfig cfg;
    PatchEmbed embed;
    std::vector<VitBlock> blocks;

    PatcherBlock() = default;
    PatcherBlock(ParameterStore& store, const std::string& name, int64_t in_ch, const PatchSpec& spec_, const StageConfig& cfg_, Rng& rng);

    // Effective geometry for a given input: when the input is smaller than
    // the large patch, the whole input becomes a single patch with zero
    // context (large side clamped down to a multiple of the small side).
    PatchSpec effective_spec(int64_t h, int64_t w) const;

    Tensor forward(const Tensor& x) const;  // [B,C,H,W] -> [B,E,H'/S,W'/S]
};

struct Encoder {
    PatcherConfig cfg;
    std::vector<PatcherBlock> stages;

    Encoder() = default;
    Encoder(ParameterStore& store, const std::string& name, const PatcherConfig& cfg_, Rng& rng);

    // Cascade of the four blocks; element i is stage i's output map.
    std::array<Tensor, 4> encode(const Tensor& image) const;
};

}  // namespace patcher
