#include "patcher/transformer.hpp"

#include <cmath>

namespace patcher {

namespace {

int64_t isqrt_exact(int64_t n, const char* what) {
    int64_t r = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    if (r * r != n) throw ShapeError(std::string(what) + ": token count " + std::to_string(n) + " is not a perfect square");
    return r;
}

}  // namespace

Tensor map_to_tokens(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("map_to_tokens: input must be [B,d,M,M]");
    const int64_t b = x.dim(0), d = x.dim(1), n = x.dim(2) * x.dim(3);
    return permute(reshape(x, {b, d, n}), {0, 2, 1});
}

Tensor tokens_to_map(const Tensor& x) {
    if (x.ndim() != 3) throw ShapeError("tokens_to_map: input must be [B,N,d]");
    const int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
    const int64_t m = isqrt_exact(n, "tokens_to_map");
    return reshape(permute(x, {0, 2, 1}), {b, d, m, m});
}

PatchEmbed::PatchEmbed(ParameterStore& store, const std::string& name, int64_t in_ch, int64_t embed_dim, int64_t small_side, Rng& rng)
    : proj(store, name + ".proj", in_ch, embed_dim, small_side, small_side, 0, 1, rng), small(small_side) {}

Tensor PatchEmbed::forward(const Tensor& stacked) const {
    if (stacked.ndim() != 4) throw ShapeError("patch_embed: input must be [B,C,side,side]");
    if (stacked.dim(2) % small != 0 || stacked.dim(3) % small != 0) {
        throw GeometryError("patch_embed: side " + std::to_string(stacked.dim(2)) + "x" + std::to_string(stacked.dim(3)) + " not divisible by small patch side " + std::to_string(small));
    }
    return map_to_tokens(proj.forward(stacked));
}

EfficientSelfAttention::EfficientSelfAttention(ParameterStore& store, const std::string& name, const StageConfig& cfg, Rng& rng)
    : query(store, name + ".q", cfg.embed_dim, cfg.embed_dim, rng),
      key(store, name + ".k", cfg.embed_dim, cfg.embed_dim, rng),
      value(store, name + ".v", cfg.embed_dim, cfg.embed_dim, rng),
      proj(store, name + ".proj", cfg.embed_dim, cfg.embed_dim, rng),
      dim(cfg.embed_dim),
      heads(cfg.heads),
      reduction(cfg.reduction) {
    if (reduction > 1) {
        reduce.emplace(store, name + ".reduce", dim, dim, reduction, reduction, 0, 1, rng);
        reduce_norm.emplace(store, name + ".reduce_norm", dim);
    }
}

Tensor EfficientSelfAttention::forward(const Tensor& x) const {
    if (x.ndim() != 3 || x.dim(2) != dim) {
        throw ShapeError("attention: expected [B,N," + std::to_string(dim) + "], got " + shape_str(x.shape()));
    }
    const int64_t b = x.dim(0), n = x.dim(1);
    const int64_t head_dim = dim / heads;

    Tensor q = query.forward(x);

    Tensor kv_src = x;
    if (reduction > 1) {
        const int64_t m = isqrt_exact(n, "attention");
        if (m % reduction != 0) {
            throw ConfigError("attention: reduction " + std::to_string(reduction) + " does not divide token grid side " + std::to_string(m));
        }
        kv_src = reduce_norm->forward(map_to_tokens(reduce->forward(tokens_to_map(x))));
    }
    const int64_t nr = kv_src.dim(1);
    Tensor k = key.forward(kv_src);
    Tensor v = value.forward(kv_src);

    Tensor qh = permute(reshape(q, {b, n, heads, head_dim}), {0, 2, 1, 3});   // [B,H,N,dh]
    Tensor kh = permute(reshape(k, {b, nr, heads, head_dim}), {0, 2, 3, 1});  // [B,H,dh,Nr]
    Tensor vh = permute(reshape(v, {b, nr, heads, head_dim}), {0, 2, 1, 3});  // [B,H,Nr,dh]

    const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
    Tensor att = softmax(mul_scalar(matmul(qh, kh), scale), 3);  // [B,H,N,Nr]
    Tensor out = matmul(att, vh);                                // [B,H,N,dh]
    out = reshape(permute(out, {0, 2, 1, 3}), {b, n, dim});
    return proj.forward(out);
}

MixFfn::MixFfn(ParameterStore& store, const std::string& name, int64_t dim, int64_t expansion, Rng& rng)
    : fc1(store, name + ".fc1", dim, dim * expansion, rng),
      fc2(store, name + ".fc2", dim * expansion, dim, rng),
      dwconv(store, name + ".dwconv", dim * expansion, dim * expansion, 3, 1, 1, dim * expansion, rng) {}

Tensor MixFfn::forward(const Tensor& x) const {
    Tensor h = fc1.forward(x);
    h = map_to_tokens(dwconv.forward(tokens_to_map(h)));
    h = gelu(h);
    return fc2.forward(h);
}

VitBlock::VitBlock(ParameterStore& store, const std::string& name, const StageConfig& cfg, Rng& rng)
    : norm1(store, name + ".norm1", cfg.embed_dim),
      norm2(store, name + ".norm2", cfg.embed_dim),
      attn(store, name + ".attn", cfg, rng),
      ffn(store, name + ".ffn", cfg.embed_dim, cfg.ffn_expansion, rng) {}

Tensor VitBlock::forward(const Tensor& x) const {
    Tensor h = add(x, attn.forward(norm1.forward(x)));
    return add(h, ffn.forward(norm2.forward(h)));
}

Tensor run_vit_stack(const std::vector<VitBlock>& blocks, Tensor x) {
    for (const VitBlock& blk : blocks) x = blk.forward(x);
    return x;
}

}  // namespace patcher
