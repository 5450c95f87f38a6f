#include "patcher/encoder.hpp"

namespace patcher {

void PatcherConfig::validate() const {
    if (in_channels <= 0) throw ConfigError("encoder: in_channels must be positive");
    for (size_t i = 0; i < 4; ++i) {
        patch[i].validate();
        stage[i].validate();
    }
}

PatcherConfig PatcherConfig::paper_default(int64_t in_channels) {
    PatcherConfig cfg;
    cfg.in_channels = in_channels;
    const int64_t dims[4] = {64, 128, 320, 512};
    const int64_t depths[4] = {3, 6, 40, 3};
    const int64_t heads[4] = {1, 2, 5, 8};
    const int64_t reductions[4] = {8, 4, 2, 1};
    for (size_t i = 0; i < 4; ++i) {
        cfg.patch[i] = PatchSpec{32, 8, 2};
        cfg.stage[i] = StageConfig{dims[i], depths[i], heads[i], reductions[i], 4};
    }
    return cfg;
}

PatcherConfig PatcherConfig::tiny(int64_t in_channels) {
    PatcherConfig cfg;
    cfg.in_channels = in_channels;
    const int64_t dims[4] = {8, 16, 16, 32};
    const int64_t heads[4] = {1, 2, 2, 4};
    const int64_t reductions[4] = {2, 2, 1, 1};
    for (size_t i = 0; i < 4; ++i) {
        cfg.patch[i] = PatchSpec{8, 2, 2};
        cfg.stage[i] = StageConfig{dims[i], 1, heads[i], reductions[i], 4};
    }
    return cfg;
}

PatcherBlock::PatcherBlock(ParameterStore& store, const std::string& name, int64_t in_ch, const PatchSpec& spec_, const StageConfig& cfg_, Rng& rng)
    : spec(spec_), cfg(cfg_), embed(store, name + ".embed", in_ch, cfg_.embed_dim, spec_.small, rng) {
    spec.validate();
    cfg.validate();
    blocks.reserve(static_cast<size_t>(cfg.n_blocks));
    for (int64_t i = 0; i < cfg.n_blocks; ++i) {
        blocks.emplace_back(store, name + ".blk" + std::to_string(i), cfg, rng);
    }
}

PatchSpec PatcherBlock::effective_spec(int64_t h, int64_t w) const {
    const int64_t smallest = std::min(h, w);
    if (smallest >= spec.large) return spec;
    PatchSpec eff = spec;
    eff.large = std::max<int64_t>(spec.small, (smallest / spec.small) * spec.small);
    eff.context = 0;
    return eff;
}

Tensor PatcherBlock::forward(const Tensor& x) const {
    if (x.ndim() != 4) throw GeometryError("patcher block: input must be [B,C,H,W]");
    const PatchSpec eff = effective_spec(x.dim(2), x.dim(3));
    PadToMultipleResult padded = pad_to_multiple(x, eff.large);
    auto [stacked, grid] = partition(padded.padded, eff);
    Tensor tokens = embed.forward(stacked);
    tokens = run_vit_stack(blocks, std::move(tokens));
    return reassemble(tokens_to_map(tokens), grid);
}

Encoder::Encoder(ParameterStore& store, const std::string& name, const PatcherConfig& cfg_, Rng& rng) : cfg(cfg_) {
    cfg.validate();
    stages.reserve(4);
    int64_t ch = cfg.in_channels;
    for (size_t i = 0; i < 4; ++i) {
        stages.emplace_back(store, name + ".s" + std::to_string(i), ch, cfg.patch[i], cfg.stage[i], rng);
        ch = cfg.stage[i].embed_dim;
    }
}

std::array<Tensor, 4> Encoder::encode(const Tensor& image) const {
    if (image.ndim() != 4) throw GeometryError("encode: input must be [B,C,H,W]");
    if (image.dim(1) != cfg.in_channels) {
        throw ShapeError("encode: expected " + std::to_string(cfg.in_channels) + " channels, got " + std::to_string(image.dim(1)));
    }
    int64_t downsample = 1;
    for (size_t i = 0; i < 4; ++i) downsample *= cfg.patch[i].small;
    if (image.dim(2) < downsample || image.dim(3) < downsample) {
        throw GeometryError("encode: input " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) + " smaller than total downsample factor " + std::to_string(downsample));
    }
    std::array<Tensor, 4> maps;
    Tensor x = image;
    for (size_t i = 0; i < 4; ++i) {
        x = stages[i].forward(x);
        maps[i] = x;
    }
    return maps;
}

std::array<std::pair<int64_t, int64_t>, 4> PatcherConfig::stage_shapes(const PatcherConfig& cfg, int64_t h, int64_t w) {
    std::array<std::pair<int64_t, int64_t>, 4> shapes;
    auto ceil_to = [](int64_t v, int64_t m) { return ((v + m - 1) / m) * m; };
    for (size_t i = 0; i < 4; ++i) {
        const PatchSpec& spec = cfg.patch[i];
        int64_t large = spec.large;
        if (std::min(h, w) < large) {
            large = std::max<int64_t>(spec.small, (std::min(h, w) / spec.small) * spec.small);
        }
        h = ceil_to(h, large) / spec.small;
        w = ceil_to(w, large) / spec.small;
        shapes[i] = {h, w};
    }
    return shapes;
}

}  // namespace patcher
