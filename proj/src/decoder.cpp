#include "patcher/decoder.hpp"

namespace patcher {

PixelMlp::PixelMlp(ParameterStore& store, const std::string& name, const std::vector<int64_t>& widths, Rng& rng) {
    layers.reserve(widths.size() - 1);
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        layers.emplace_back(store, name + ".fc" + std::to_string(i), widths[i], widths[i + 1], 1, 1, 0, 1, rng);
    }
}

Tensor PixelMlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

MoeDecoder::MoeDecoder(ParameterStore& store, const std::string& name, const std::array<int64_t, 4>& encoder_dims, const DecoderConfig& cfg_, Rng& rng) : cfg(cfg_) {
    cfg.validate();
    for (size_t i = 0; i < 4; ++i) {
        expert_mlps[i] = PixelMlp(store, name + ".expert" + std::to_string(i), {encoder_dims[i], cfg.mlp_hidden[0], cfg.mlp_hidden[1], cfg.expert_dim}, rng);
    }
    gate_convs.reserve(4);
    int64_t in_ch = 4 * cfg.expert_dim;
    for (size_t i = 0; i < 4; ++i) {
        gate_convs.emplace_back(store, name + ".gate" + std::to_string(i), in_ch, cfg.gate_channels[i], 3, 1, 1, 1, rng);
        in_ch = cfg.gate_channels[i];
    }
    head = PixelMlp(store, name + ".head", {cfg.expert_dim, cfg.mlp_hidden[0], cfg.mlp_hidden[1], 1}, rng);
}

std::array<Tensor, 4> MoeDecoder::project(const std::array<Tensor, 4>& encoder_maps) const {
    const int64_t out_h = encoder_maps[0].dim(2);
    const int64_t out_w = encoder_maps[0].dim(3);
    std::array<Tensor, 4> experts;
    for (size_t i = 0; i < 4; ++i) {
        Tensor f = expert_mlps[i].forward(encoder_maps[i]);
        experts[i] = bilinear_resize(f, out_h, out_w);
    }
    return experts;
}

std::array<Tensor, 4> MoeDecoder::gate(const std::array<Tensor, 4>& experts) const {
    for (size_t i = 1; i < 4; ++i) {
        if (experts[i].shape() != experts[0].shape()) {
            throw ShapeError("gate: expert maps must share a shape, got " + shape_str(experts[0].shape()) + " vs " + shape_str(experts[i].shape()));
        }
    }
    Tensor h = concat({experts[0], experts[1], experts[2], experts[3]}, 1);
    for (size_t i = 0; i < gate_convs.size(); ++i) {
        h = gate_convs[i].forward(h);
        if (i + 1 < gate_convs.size()) h = relu(h);
    }
    Tensor w = softmax(h, 1);  // [B,4,H,W]
    std::array<Tensor, 4> weights;
    for (int64_t i = 0; i < 4; ++i) weights[static_cast<size_t>(i)] = slice(w, 1, i, i + 1);
    return weights;
}

Tensor MoeDecoder::combine(const std::array<Tensor, 4>& experts, const std::array<Tensor, 4>& weights) {
    Tensor out;
    for (size_t i = 0; i < 4; ++i) {
        if (weights[i].dim(1) != 1) throw ShapeError("combine: weight maps must have a singleton channel axis");
        Tensor term = mul(expand(weights[i], experts[i].shape()), experts[i]);
        out = out.defined() ? add(out, term) : term;
    }
    return out;
}

Tensor MoeDecoder::predict(const Tensor& combined, int64_t out_h, int64_t out_w) const {
    Tensor logits = head.forward(combined);
    logits = bilinear_resize(logits, combined.dim(2) * 2, combined.dim(3) * 2);
    if (logits.dim(2) < out_h || logits.dim(3) < out_w) {
        throw ShapeError("predict: requested output " + std::to_string(out_h) + "x" + std::to_string(out_w) + " exceeds upsampled map " + shape_str(logits.shape()));
    }
    if (logits.dim(2) != out_h) logits = slice(logits, 2, 0, out_h);
    if (logits.dim(3) != out_w) logits = slice(logits, 3, 0, out_w);
    return logits;
}

Tensor MoeDecoder::forward(const std::array<Tensor, 4>& encoder_maps, int64_t out_h, int64_t out_w, ExpertFeatures* capture) const {
    std::array<Tensor, 4> experts = project(encoder_maps);
    std::array<Tensor, 4> weights = gate(experts);
    Tensor combined = combine(experts, weights);
    if (capture) {
        capture->experts = experts;
        capture->weights = weights;
        capture->combined = combined;
    }
    return predict(combined, out_h, out_w);
}

}  // namespace patcher
