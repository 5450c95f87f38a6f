#include "patcher/patching.hpp"

#include "kernels.hpp"
#include "op_helpers.hpp"
#include "patcher/ops.hpp"

namespace patcher {

using detail::grads_needed;
using NodePtr = std::shared_ptr<detail::Node>;

void PatchSpec::validate() const {
    if (large <= 0 || context < 0 || small <= 0) {
        throw GeometryError("patch spec requires large > 0, context >= 0, small > 0");
    }
    if (large % small != 0) {
        throw GeometryError("large patch side " + std::to_string(large) + " not divisible by small patch side " + std::to_string(small));
    }
    if (padded_side() % small != 0) {
        throw GeometryError("padded patch side " + std::to_string(padded_side()) + " not divisible by small patch side " + std::to_string(small));
    }
    if (context % small != 0) {
        throw GeometryError("context " + std::to_string(context) + " not divisible by small patch side " + std::to_string(small) + "; center crop would misalign");
    }
}

std::pair<Tensor, PatchGrid> partition(const Tensor& x, const PatchSpec& spec) {
    spec.validate();
    if (x.ndim() != 4) throw GeometryError("partition: input must be [B,C,H,W], got " + shape_str(x.shape()));
    const int64_t b0 = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % spec.large != 0 || w % spec.large != 0) {
        throw GeometryError("partition: spatial dims " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by large patch side " + std::to_string(spec.large));
    }
    PatchGrid grid;
    grid.rows = h / spec.large;
    grid.cols = w / spec.large;
    grid.batch0 = b0;
    grid.src_h = h;
    grid.src_w = w;
    grid.spec = spec;

    const int64_t side = spec.padded_side();
    const int64_t pad = spec.context;
    const int64_t len = spec.large;
    Tensor out = Tensor::zeros({grid.stacked_batch(), ch, side, side});
    float* po = out.mutable_data();
    const float* px = x.data();

    const int64_t patches = grid.stacked_batch();
    detail::parallel_for(patches * ch, side * side, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const int64_t bp = i / ch;
            const int64_t c = i % ch;
            const int64_t gx = bp % grid.cols;
            const int64_t gy = (bp / grid.cols) % grid.rows;
            const int64_t b = bp / (grid.rows * grid.cols);
            const float* plane = px + (b * ch + c) * h * w;
            float* dst = po + (bp * ch + c) * side * side;
            for (int64_t py = 0; py < side; ++py) {
                const int64_t sy = gy * len - pad + py;
                if (sy < 0 || sy >= h) continue;  // zero-filled context
                const float* srow = plane + sy * w;
                float* drow = dst + py * side;
                for (int64_t qx = 0; qx < side; ++qx) {
                    const int64_t sx = gx * len - pad + qx;
                    if (sx >= 0 && sx < w) drow[qx] = srow[sx];
                }
            }
        }
    });

    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, grid, ch, h, w, side, pad, len] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            float* gx_buf = xn->ensure_grad();
            // Patches overlap in the source, so scatter per channel plane
            // sequentially over patches; channel planes are independent.
            detail::parallel_for(grid.batch0 * ch, grid.rows * grid.cols * side * side, [&](int64_t i0, int64_t i1) {
                for (int64_t i = i0; i < i1; ++i) {
                    const int64_t b = i / ch;
                    const int64_t c = i % ch;
                    float* plane = gx_buf + (b * ch + c) * h * w;
                    for (int64_t gy = 0; gy < grid.rows; ++gy) {
                        for (int64_t gxc = 0; gxc < grid.cols; ++gxc) {
                            const int64_t bp = (b * grid.rows + gy) * grid.cols + gxc;
                            const float* src = g + (bp * ch + c) * side * side;
                            for (int64_t py = 0; py < side; ++py) {
                                const int64_t sy = gy * len - pad + py;
                                if (sy < 0 || sy >= h) continue;
                                float* drow = plane + sy * w;
                                const float* srow = src + py * side;
                                for (int64_t qx = 0; qx < side; ++qx) {
                                    const int64_t sx = gxc * len - pad + qx;
                                    if (sx >= 0 && sx < w) drow[sx] += srow[qx];
                                }
                            }
                        }
                    }
                }
            });
        });
    }
    return {out, grid};
}

Tensor reassemble(const Tensor& feats, const PatchGrid& grid) {
    if (feats.ndim() != 4) throw GeometryError("reassemble: input must be [B,C,M,M], got " + shape_str(feats.shape()));
    const int64_t m = grid.spec.tokens_side();
    if (feats.dim(0) != grid.stacked_batch()) {
        throw GeometryError("reassemble: batch " + std::to_string(feats.dim(0)) + " does not match grid's " + std::to_string(grid.stacked_batch()));
    }
    if (feats.dim(2) != m || feats.dim(3) != m) {
        throw GeometryError("reassemble: feature side " + std::to_string(feats.dim(2)) + "x" + std::to_string(feats.dim(3)) + " does not match grid's " + std::to_string(m));
    }
    const int64_t ch = feats.dim(1);
    const int64_t core = grid.spec.core_side();
    const int64_t off = grid.spec.crop_offset();
    const int64_t out_h = grid.src_h / grid.spec.small;
    const int64_t out_w = grid.src_w / grid.spec.small;

    Tensor out = Tensor::zeros({grid.batch0, ch, out_h, out_w});
    float* po = out.mutable_data();
    const float* pf = feats.data();
    detail::parallel_for(grid.stacked_batch() * ch, core * core, [&](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const int64_t bp = i / ch;
            const int64_t c = i % ch;
            const int64_t gx = bp % grid.cols;
            const int64_t gy = (bp / grid.cols) % grid.rows;
            const int64_t b = bp / (grid.rows * grid.cols);
            const float* src = pf + (bp * ch + c) * m * m;
            float* dst = po + (b * ch + c) * out_h * out_w;
            for (int64_t ky = 0; ky < core; ++ky) {
                const float* srow = src + (off + ky) * m + off;
                float* drow = dst + (gy * core + ky) * out_w + gx * core;
                for (int64_t kx = 0; kx < core; ++kx) drow[kx] = srow[kx];
            }
        }
    });

    if (grads_needed({&feats})) {
        out.set_requires_grad(true);
        NodePtr fn = feats.node(), on = out.node();
        const PatchGrid g = grid;
        Tape::current().record([fn, on, g, ch, m, core, off, out_h, out_w] {
            if (on->grad.empty()) return;
            const float* gout = on->grad.data();
            float* gf = fn->ensure_grad();
            detail::parallel_for(g.stacked_batch() * ch, core * core, [&](int64_t i0, int64_t i1) {
                for (int64_t i = i0; i < i1; ++i) {
                    const int64_t bp = i / ch;
                    const int64_t c = i % ch;
                    const int64_t gx = bp % g.cols;
                    const int64_t gy = (bp / g.cols) % g.rows;
                    const int64_t b = bp / (g.rows * g.cols);
                    float* dst = gf + (bp * ch + c) * m * m;
                    const float* src = gout + (b * ch + c) * out_h * out_w;
                    for (int64_t ky = 0; ky < core; ++ky) {
                        float* drow = dst + (off + ky) * m + off;
                        const float* srow = src + (gy * core + ky) * out_w + gx * core;
                        for (int64_t kx = 0; kx < core; ++kx) drow[kx] += srow[kx];
                    }
                }
            });
        });
    }
    return out;
}

PadToMultipleResult pad_to_multiple(const Tensor& x, int64_t multiple) {
    if (multiple <= 0) throw GeometryError("pad_to_multiple: multiple must be positive");
    if (x.ndim() != 4) throw GeometryError("pad_to_multiple: input must be [B,C,H,W]");
    const int64_t h = x.dim(2), w = x.dim(3);
    const int64_t ph = (multiple - h % multiple) % multiple;
    const int64_t pw = (multiple - w % multiple) % multiple;
    PadToMultipleResult res;
    res.orig_h = h;
    res.orig_w = w;
    res.padded = (ph == 0 && pw == 0) ? x : pad2d(x, 0, pw, 0, ph);
    return res;
}

}  // namespace patcher
