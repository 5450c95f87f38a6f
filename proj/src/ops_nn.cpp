#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "op_helpers.hpp"
#include "patcher/ops.hpp"

namespace patcher {

using detail::grads_needed;
using NodePtr = std::shared_ptr<detail::Node>;

namespace {

struct ConvDims {
    int64_t batch, in_ch, in_h, in_w;
    int64_t out_ch, group_in, kernel, stride, pad, groups;
    int64_t out_h, out_w;
    int64_t group_out;
    int64_t col_rows;  // group_in * kernel * kernel
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad, int64_t groups) {
    if (x.ndim() != 4) throw ShapeError("conv2d: input must be [B,C,H,W], got " + shape_str(x.shape()));
    if (w.ndim() != 4) throw ShapeError("conv2d: weight must be [O,C/g,k,k], got " + shape_str(w.shape()));
    if (w.dim(2) != w.dim(3)) throw ShapeError("conv2d: only square kernels supported, got " + shape_str(w.shape()));
    if (stride < 1 || pad < 0 || groups < 1) throw ConfigError("conv2d: invalid stride/pad/groups");
    ConvDims d{};
    d.batch = x.dim(0);
    d.in_ch = x.dim(1);
    d.in_h = x.dim(2);
    d.in_w = x.dim(3);
    d.out_ch = w.dim(0);
    d.group_in = w.dim(1);
    d.kernel = w.dim(2);
    d.stride = stride;
    d.pad = pad;
    d.groups = groups;
    if (d.in_ch % groups != 0 || d.out_ch % groups != 0) {
        throw ConfigError("conv2d: channels " + std::to_string(d.in_ch) + "/" + std::to_string(d.out_ch) + " not divisible by groups " + std::to_string(groups));
    }
    if (d.group_in != d.in_ch / groups) {
        throw ShapeError("conv2d: weight expects " + std::to_string(d.group_in) + " input channels per group, input has " + std::to_string(d.in_ch / groups));
    }
    const int64_t span_h = d.in_h + 2 * pad - d.kernel;
    const int64_t span_w = d.in_w + 2 * pad - d.kernel;
    if (span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
        throw ConfigError("conv2d: output size not integral for input " + shape_str(x.shape()) + ", kernel " + std::to_string(d.kernel) + ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
    }
    d.out_h = span_h / stride + 1;
    d.out_w = span_w / stride + 1;
    d.group_out = d.out_ch / groups;
    d.col_rows = d.group_in * d.kernel * d.kernel;
    return d;
}

// col: [group_in*k*k, out_h*out_w] for one (batch, group).
void im2col(const float* x, const ConvDims& d, int64_t g, float* col) {
    const int64_t hw = d.out_h * d.out_w;
    for (int64_t c = 0; c < d.group_in; ++c) {
        const float* plane = x + (g * d.group_in + c) * d.in_h * d.in_w;
        for (int64_t ky = 0; ky < d.kernel; ++ky) {
            for (int64_t kx = 0; kx < d.kernel; ++kx) {
                float* row = col + ((c * d.kernel + ky) * d.kernel + kx) * hw;
                for (int64_t oy = 0; oy < d.out_h; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.in_h) {
                        detail::zero_fill(row + oy * d.out_w, d.out_w);
                        continue;
                    }
                    const float* src = plane + iy * d.in_w;
                    for (int64_t ox = 0; ox < d.out_w; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        row[oy * d.out_w + ox] = (ix >= 0 && ix < d.in_w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_acc(const float* col, const ConvDims& d, int64_t g, float* gx) {
    for (int64_t c = 0; c < d.group_in; ++c) {
        float* plane = gx + (g * d.group_in + c) * d.in_h * d.in_w;
        for (int64_t ky = 0; ky < d.kernel; ++ky) {
            for (int64_t kx = 0; kx < d.kernel; ++kx) {
                const float* row = col + ((c * d.kernel + ky) * d.kernel + kx) * d.out_h * d.out_w;
                for (int64_t oy = 0; oy < d.out_h; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.in_h) continue;
                    float* dst = plane + iy * d.in_w;
                    for (int64_t ox = 0; ox < d.out_w; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        if (ix >= 0 && ix < d.in_w) dst[ix] += row[oy * d.out_w + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad, int64_t groups) {
    const ConvDims d = conv_dims(x, w, stride, pad, groups);
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != d.out_ch)) {
        throw ShapeError("conv2d: bias must be [" + std::to_string(d.out_ch) + "], got " + shape_str(bias.shape()));
    }
    const int64_t hw = d.out_h * d.out_w;
    Tensor out = Tensor::zeros({d.batch, d.out_ch, d.out_h, d.out_w});
    float* po = out.mutable_data();
    const float* px = x.data();
    const float* pw = w.data();
    const bool direct = (d.kernel == 1 && d.stride == 1 && d.pad == 0);

    detail::parallel_for(d.batch, 2 * d.out_ch * d.col_rows * hw, [&](int64_t b0, int64_t b1) {
        std::vector<float> col;
        if (!direct) col.resize(static_cast<size_t>(d.col_rows * hw));
        for (int64_t b = b0; b < b1; ++b) {
            const float* xb = px + b * d.in_ch * d.in_h * d.in_w;
            float* ob = po + b * d.out_ch * hw;
            for (int64_t g = 0; g < d.groups; ++g) {
                const float* colp;
                if (direct) {
                    colp = xb + g * d.group_in * hw;  // 1x1/s1/p0: x plane is already the column matrix
                } else {
                    im2col(xb, d, g, col.data());
                    colp = col.data();
                }
                detail::mm_nn(pw + g * d.group_out * d.col_rows, colp, ob + g * d.group_out * hw, d.group_out, d.col_rows, hw, false);
            }
        }
    });
    if (bias.defined()) {
        const float* pb = bias.data();
        for (int64_t b = 0; b < d.batch; ++b) {
            for (int64_t o = 0; o < d.out_ch; ++o) {
                float* row = po + (b * d.out_ch + o) * hw;
                const float bv = pb[o];
                for (int64_t i = 0; i < hw; ++i) row[i] += bv;
            }
        }
    }

    if (grads_needed({&x, &w, &bias})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), wn = w.node(), on = out.node();
        NodePtr bn = bias.defined() ? bias.node() : nullptr;
        Tape::current().record([xn, wn, bn, on, d, hw, direct] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const float* px = xn->value.data();
            const float* pw = wn->value.data();
            float* gx = xn->requires_grad ? xn->ensure_grad() : nullptr;
            float* gw = wn->requires_grad ? wn->ensure_grad() : nullptr;
            std::vector<float> col, dcol;
            if (!direct) col.resize(static_cast<size_t>(d.col_rows * hw));
            dcol.resize(static_cast<size_t>(d.col_rows * hw));
            for (int64_t b = 0; b < d.batch; ++b) {
                const float* xb = px + b * d.in_ch * d.in_h * d.in_w;
                const float* gb = g + b * d.out_ch * hw;
                for (int64_t gr = 0; gr < d.groups; ++gr) {
                    const float* colp;
                    if (direct) {
                        colp = xb + gr * d.group_in * hw;
                    } else {
                        im2col(xb, d, gr, col.data());
                        colp = col.data();
                    }
                    const float* gout = gb + gr * d.group_out * hw;
                    const float* wg = pw + gr * d.group_out * d.col_rows;
                    if (gw) {
                        detail::mm_nt(gout, colp, gw + gr * d.group_out * d.col_rows, d.group_out, hw, d.col_rows, true);
                    }
                    if (gx) {
                        if (direct) {
                            detail::mm_tn(wg, gout, gx + (b * d.in_ch + gr * d.group_in) * hw, d.group_out, d.col_rows, hw, true);
                        } else {
                            detail::mm_tn(wg, gout, dcol.data(), d.group_out, d.col_rows, hw, false);
                            col2im_acc(dcol.data(), d, gr, gx + b * d.in_ch * d.in_h * d.in_w);
                        }
                    }
                }
            }
            if (bn && bn->requires_grad) {
                float* gbias = bn->ensure_grad();
                for (int64_t b = 0; b < d.batch; ++b) {
                    for (int64_t o = 0; o < d.out_ch; ++o) {
                        const float* row = g + (b * d.out_ch + o) * hw;
                        float acc = 0.0f;
                        for (int64_t i = 0; i < hw; ++i) acc += row[i];
                        gbias[o] += acc;
                    }
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    const int64_t dim = x.dim(x.ndim() - 1);
    if (gamma.ndim() != 1 || gamma.dim(0) != dim || beta.ndim() != 1 || beta.dim(0) != dim) {
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(dim) + "]");
    }
    const int64_t rows = x.numel() / dim;
    Tensor out = Tensor::zeros(x.shape());
    // Cached per-row statistics for backward.
    auto rstd = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
    auto mu = std::make_shared<std::vector<float>>(static_cast<size_t>(rows));
    const float* px = x.data();
    const float* pg = gamma.data();
    const float* pb = beta.data();
    float* po = out.mutable_data();
    detail::parallel_for(rows, 6 * dim, [&](int64_t r0, int64_t r1) {
        for (int64_t r = r0; r < r1; ++r) {
            const float* row = px + r * dim;
            float m = 0.0f;
            for (int64_t i = 0; i < dim; ++i) m += row[i];
            m /= static_cast<float>(dim);
            float var = 0.0f;
            for (int64_t i = 0; i < dim; ++i) {
                const float c = row[i] - m;
                var += c * c;
            }
            var /= static_cast<float>(dim);
            const float rs = 1.0f / std::sqrt(var + eps);
            (*mu)[static_cast<size_t>(r)] = m;
            (*rstd)[static_cast<size_t>(r)] = rs;
            float* orow = po + r * dim;
            for (int64_t i = 0; i < dim; ++i) orow[i] = (row[i] - m) * rs * pg[i] + pb[i];
        }
    });

    if (grads_needed({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node();
        Tape::current().record([xn, gn, bn, on, mu, rstd, rows, dim] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const float* px = xn->value.data();
            const float* pg = gn->value.data();
            if (xn->requires_grad) {
                float* gx = xn->ensure_grad();
                detail::parallel_for(rows, 10 * dim, [&](int64_t r0, int64_t r1) {
                    for (int64_t r = r0; r < r1; ++r) {
                        const float m = (*mu)[static_cast<size_t>(r)];
                        const float rs = (*rstd)[static_cast<size_t>(r)];
                        const float* xrow = px + r * dim;
                        const float* grow = g + r * dim;
                        float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
                        for (int64_t i = 0; i < dim; ++i) {
                            const float xhat = (xrow[i] - m) * rs;
                            const float dxhat = grow[i] * pg[i];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat;
                        }
                        float* gxrow = gx + r * dim;
                        const float inv_d = 1.0f / static_cast<float>(dim);
                        for (int64_t i = 0; i < dim; ++i) {
                            const float xhat = (xrow[i] - m) * rs;
                            const float dxhat = grow[i] * pg[i];
                            gxrow[i] += rs * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
                        }
                    }
                });
            }
            if (gn->requires_grad || bn->requires_grad) {
                float* gg = gn->requires_grad ? gn->ensure_grad() : nullptr;
                float* gb = bn->requires_grad ? bn->ensure_grad() : nullptr;
                for (int64_t r = 0; r < rows; ++r) {
                    const float m = (*mu)[static_cast<size_t>(r)];
                    const float rs = (*rstd)[static_cast<size_t>(r)];
                    const float* xrow = px + r * dim;
                    const float* grow = g + r * dim;
                    for (int64_t i = 0; i < dim; ++i) {
                        if (gg) gg[i] += grow[i] * (xrow[i] - m) * rs;
                        if (gb) gb[i] += grow[i];
                    }
                }
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& x, int64_t axis) {
    const int64_t rank = x.ndim();
    if (axis < 0 || axis >= rank) throw ShapeError("softmax: axis out of range");
    const int64_t n = x.dim(axis);
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int64_t d = axis + 1; d < rank; ++d) inner *= x.dim(d);

    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data();
    float* po = out.mutable_data();
    detail::parallel_for(outer, 6 * n * inner, [&](int64_t o0, int64_t o1) {
        for (int64_t o = o0; o < o1; ++o) {
            for (int64_t i = 0; i < inner; ++i) {
                const float* base = px + o * n * inner + i;
                float* obase = po + o * n * inner + i;
                float mx = base[0];
                for (int64_t j = 1; j < n; ++j) mx = std::max(mx, base[j * inner]);
                float denom = 0.0f;
                for (int64_t j = 0; j < n; ++j) {
                    const float e = std::exp(base[j * inner] - mx);
                    obase[j * inner] = e;
                    denom += e;
                }
                const float inv = 1.0f / denom;
                for (int64_t j = 0; j < n; ++j) obase[j * inner] *= inv;
            }
        }
    });

    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, outer, inner, n] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const float* y = on->value.data();
            float* gx = xn->ensure_grad();
            detail::parallel_for(outer, 4 * n * inner, [&](int64_t o0, int64_t o1) {
                for (int64_t o = o0; o < o1; ++o) {
                    for (int64_t i = 0; i < inner; ++i) {
                        const int64_t off = o * n * inner + i;
                        float dot = 0.0f;
                        for (int64_t j = 0; j < n; ++j) dot += g[off + j * inner] * y[off + j * inner];
                        for (int64_t j = 0; j < n; ++j) {
                            gx[off + j * inner] += y[off + j * inner] * (g[off + j * inner] - dot);
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor pad2d(const Tensor& x, int64_t left, int64_t right, int64_t top, int64_t bottom) {
    if (x.ndim() < 2) throw ShapeError("pad2d: need at least 2 dims, got " + shape_str(x.shape()));
    if (left < 0 || right < 0 || top < 0 || bottom < 0) throw ShapeError("pad2d: negative padding");
    const int64_t rank = x.ndim();
    const int64_t h = x.dim(rank - 2), w = x.dim(rank - 1);
    const int64_t oh = h + top + bottom, ow = w + left + right;
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(rank - 2)] = oh;
    out_shape[static_cast<size_t>(rank - 1)] = ow;
    const int64_t planes = x.numel() / (h * w);

    Tensor out = Tensor::zeros(out_shape);
    float* po = out.mutable_data();
    const float* px = x.data();
    for (int64_t p = 0; p < planes; ++p) {
        const float* src = px + p * h * w;
        float* dst = po + p * oh * ow;
        for (int64_t y = 0; y < h; ++y) {
            std::copy(src + y * w, src + (y + 1) * w, dst + (y + top) * ow + left);
        }
    }
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, planes, h, w, oh, ow, top, left] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            float* gx = xn->ensure_grad();
            for (int64_t p = 0; p < planes; ++p) {
                const float* src = g + p * oh * ow;
                float* dst = gx + p * h * w;
                for (int64_t y = 0; y < h; ++y) {
                    const float* srow = src + (y + top) * ow + left;
                    float* drow = dst + y * w;
                    for (int64_t xk = 0; xk < w; ++xk) drow[xk] += srow[xk];
                }
            }
        });
    }
    return out;
}

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    if (x.ndim() != 4) throw ShapeError("bilinear_resize: input must be [B,C,H,W], got " + shape_str(x.shape()));
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output dims must be positive");
    const int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);

    if (out_h == h && out_w == w) {
        // Same-size resize is the bit-exact identity.
        Tensor out = Tensor::from_data(x.shape(), x.values());
        if (grads_needed({&x})) {
            out.set_requires_grad(true);
            NodePtr xn = x.node(), on = out.node();
            Tape::current().record([xn, on] {
                if (on->grad.empty()) return;
                const float* g = on->grad.data();
                float* gx = xn->ensure_grad();
                const int64_t n = on->numel();
                for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
            });
        }
        return out;
    }

    // Half-pixel source coordinates, clamped at the borders.
    auto make_axis = [](int64_t out_n, int64_t in_n, std::vector<int64_t>& i0, std::vector<int64_t>& i1, std::vector<float>& frac) {
        i0.resize(static_cast<size_t>(out_n));
        i1.resize(static_cast<size_t>(out_n));
        frac.resize(static_cast<size_t>(out_n));
        const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
        for (int64_t o = 0; o < out_n; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            if (src < 0.0) src = 0.0;
            int64_t lo = static_cast<int64_t>(src);
            if (lo > in_n - 1) lo = in_n - 1;
            int64_t hi = std::min<int64_t>(lo + 1, in_n - 1);
            i0[static_cast<size_t>(o)] = lo;
            i1[static_cast<size_t>(o)] = hi;
            frac[static_cast<size_t>(o)] = static_cast<float>(src - static_cast<double>(lo));
        }
    };
    auto y0 = std::make_shared<std::vector<int64_t>>();
    auto y1 = std::make_shared<std::vector<int64_t>>();
    auto fy = std::make_shared<std::vector<float>>();
    auto x0 = std::make_shared<std::vector<int64_t>>();
    auto x1 = std::make_shared<std::vector<int64_t>>();
    auto fx = std::make_shared<std::vector<float>>();
    make_axis(out_h, h, *y0, *y1, *fy);
    make_axis(out_w, w, *x0, *x1, *fx);

    Tensor out = Tensor::zeros({batch, ch, out_h, out_w});
    float* po = out.mutable_data();
    const float* px = x.data();
    const int64_t planes = batch * ch;
    detail::parallel_for(planes, 8 * out_h * out_w, [&](int64_t p0, int64_t p1) {
        for (int64_t p = p0; p < p1; ++p) {
            const float* src = px + p * h * w;
            float* dst = po + p * out_h * out_w;
            for (int64_t oy = 0; oy < out_h; ++oy) {
                const float wy = (*fy)[static_cast<size_t>(oy)];
                const float* r0 = src + (*y0)[static_cast<size_t>(oy)] * w;
                const float* r1 = src + (*y1)[static_cast<size_t>(oy)] * w;
                for (int64_t ox = 0; ox < out_w; ++ox) {
                    const float wx = (*fx)[static_cast<size_t>(ox)];
                    const int64_t c0 = (*x0)[static_cast<size_t>(ox)], c1 = (*x1)[static_cast<size_t>(ox)];
                    const float top = r0[c0] + wx * (r0[c1] - r0[c0]);
                    const float bot = r1[c0] + wx * (r1[c1] - r1[c0]);
                    dst[oy * out_w + ox] = top + wy * (bot - top);
                }
            }
        }
    });

    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, y0, y1, fy, x0, x1, fx, planes, h, w, out_h, out_w] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            float* gx = xn->ensure_grad();
            detail::parallel_for(planes, 8 * out_h * out_w, [&](int64_t p0, int64_t p1) {
                for (int64_t p = p0; p < p1; ++p) {
                    const float* gsrc = g + p * out_h * out_w;
                    float* gdst = gx + p * h * w;
                    for (int64_t oy = 0; oy < out_h; ++oy) {
                        const float wy = (*fy)[static_cast<size_t>(oy)];
                        float* r0 = gdst + (*y0)[static_cast<size_t>(oy)] * w;
                        float* r1 = gdst + (*y1)[static_cast<size_t>(oy)] * w;
                        for (int64_t ox = 0; ox < out_w; ++ox) {
                            const float wx = (*fx)[static_cast<size_t>(ox)];
                            const int64_t c0 = (*x0)[static_cast<size_t>(ox)], c1 = (*x1)[static_cast<size_t>(ox)];
                            const float gv = gsrc[oy * out_w + ox];
                            r0[c0] += gv * (1.0f - wy) * (1.0f - wx);
                            r0[c1] += gv * (1.0f - wy) * wx;
                            r1[c0] += gv * wy * (1.0f - wx);
                            r1[c1] += gv * wy * wx;
                        }
                    }
                }
            });
        });
    }
    return out;
}

}  // namespace patcher
