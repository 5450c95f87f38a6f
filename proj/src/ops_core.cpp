#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "op_helpers.hpp"
#include "patcher/ops.hpp"

namespace patcher {

using detail::grads_needed;
using detail::next_index;
using detail::strides_of;

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

using NodePtr = std::shared_ptr<detail::Node>;

// Unary op with elementwise derivative computed from the input value.
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd dfdx) {
    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data();
    float* po = out.mutable_data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, dfdx] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            float* gx = xn->ensure_grad();
            const float* vx = xn->value.data();
            const int64_t n = on->numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * dfdx(vx[i]);
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.mutable_data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    if (grads_needed({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::current().record([an, bn, on] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const int64_t n = on->numel();
            if (an->requires_grad) {
                float* ga = an->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                float* gb = bn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.mutable_data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
    if (grads_needed({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::current().record([an, bn, on] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const int64_t n = on->numel();
            if (an->requires_grad) {
                float* ga = an->ensure_grad();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                float* gb = bn->ensure_grad();
                for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.mutable_data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    if (grads_needed({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::current().record([an, bn, on] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const int64_t n = on->numel();
            if (an->requires_grad) {
                float* ga = an->ensure_grad();
                const float* vb = bn->value.data();
                for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * vb[i];
            }
            if (bn->requires_grad) {
                float* gb = bn->ensure_grad();
                const float* va = an->value.data();
                for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * va[i];
            }
        });
    }
    return out;
}

Tensor neg(const Tensor& x) {
    return unary_op(
        x, [](float v) { return -v; }, [](float) { return -1.0f; });
}

Tensor add_scalar(const Tensor& x, float s) {
    return unary_op(
        x, [s](float v) { return v + s; }, [](float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& x, float s) {
    return unary_op(
        x, [s](float v) { return v * s; }, [s](float) { return s; });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float v) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor gelu(const Tensor& x) {
    constexpr float kInvSqrt2 = 0.7071067811865475f;
    constexpr float kInvSqrt2Pi = 0.3989422804014327f;
    return unary_op(
        x, [](float v) { return 0.5f * v * (1.0f + std::erf(v * kInvSqrt2)); },
        [](float v) {
            float cdf = 0.5f * (1.0f + std::erf(v * kInvSqrt2));
            float pdf = kInvSqrt2Pi * std::exp(-0.5f * v * v);
            return cdf + v * pdf;
        });
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* px = x.data();
    float* po = out.mutable_data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) {
        float v = px[i];
        if (v >= 0.0f) {
            po[i] = 1.0f / (1.0f + std::exp(-v));
        } else {
            float e = std::exp(v);
            po[i] = e / (1.0f + e);
        }
    }
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            const float* y = on->value.data();
            float* gx = xn->ensure_grad();
            const int64_t n = on->numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (1.0f - y[i]);
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor out = Tensor::from_data(std::move(shape), x.values());
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

namespace {

// Copies with out[i] = in[perm-mapped i]; scatter=true accumulates the other way.
void permute_apply(const float* in, float* out, const Shape& in_shape, const std::vector<int64_t>& axes, bool scatter) {
    const auto in_strides = strides_of(in_shape);
    Shape out_shape(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) out_shape[i] = in_shape[static_cast<size_t>(axes[i])];
    std::vector<int64_t> idx(axes.size(), 0);
    int64_t out_pos = 0;
    do {
        int64_t in_off = 0;
        for (size_t i = 0; i < axes.size(); ++i) in_off += idx[i] * in_strides[static_cast<size_t>(axes[i])];
        if (scatter) {
            out[in_off] += in[out_pos];
        } else {
            out[out_pos] = in[in_off];
        }
        ++out_pos;
    } while (next_index(idx, out_shape));
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int64_t>& axes) {
    const int64_t rank = x.ndim();
    if (static_cast<int64_t>(axes.size()) != rank) {
        throw ShapeError("permute: axes count " + std::to_string(axes.size()) + " != rank " + std::to_string(rank));
    }
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    for (int64_t a : axes) {
        if (a < 0 || a >= rank || seen[static_cast<size_t>(a)]) throw ShapeError("permute: invalid axes permutation");
        seen[static_cast<size_t>(a)] = true;
    }
    Shape out_shape(static_cast<size_t>(rank));
    for (size_t i = 0; i < axes.size(); ++i) out_shape[i] = x.dim(axes[i]);
    Tensor out = Tensor::zeros(out_shape);
    permute_apply(x.data(), out.mutable_data(), x.shape(), axes, false);
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        std::vector<int64_t> ax = axes;
        Tape::current().record([xn, on, ax] {
            if (on->grad.empty()) return;
            permute_apply(on->grad.data(), xn->ensure_grad(), xn->shape, ax, true);
        });
    }
    return out;
}

Tensor transpose(const Tensor& x, int64_t a, int64_t b) {
    std::vector<int64_t> axes(static_cast<size_t>(x.ndim()));
    for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int64_t>(i);
    if (a < 0 || a >= x.ndim() || b < 0 || b >= x.ndim()) throw ShapeError("transpose: axis out of range");
    std::swap(axes[static_cast<size_t>(a)], axes[static_cast<size_t>(b)]);
    return permute(x, axes);
}

Tensor concat(const std::vector<Tensor>& parts, int64_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int64_t rank = parts[0].ndim();
    if (axis < 0 || axis >= rank) throw ShapeError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    int64_t axis_total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() != rank) throw ShapeError("concat: rank mismatch");
        for (int64_t d = 0; d < rank; ++d) {
            if (d != axis && p.dim(d) != out_shape[static_cast<size_t>(d)]) {
                throw ShapeError("concat: shapes disagree: " + shape_str(out_shape) + " vs " + shape_str(p.shape()));
            }
        }
        axis_total += p.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = axis_total;

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (int64_t d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<size_t>(d)];

    Tensor out = Tensor::zeros(out_shape);
    float* po = out.mutable_data();
    int64_t axis_off = 0;
    for (const Tensor& p : parts) {
        const int64_t pa = p.dim(axis);
        const float* pp = p.data();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(pp + o * pa * inner, pp + (o + 1) * pa * inner, po + (o * axis_total + axis_off) * inner);
        }
        axis_off += pa;
    }

    bool any_grad = false;
    for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
    if (Tape::current().recording() && any_grad) {
        out.set_requires_grad(true);
        std::vector<NodePtr> ins;
        ins.reserve(parts.size());
        for (const Tensor& p : parts) ins.push_back(p.node());
        NodePtr on = out.node();
        Tape::current().record([ins, on, outer, inner, axis_total, axis] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            int64_t axis_off = 0;
            for (const NodePtr& in : ins) {
                const int64_t pa = in->shape[static_cast<size_t>(axis)];
                if (in->requires_grad) {
                    float* gi = in->ensure_grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const float* src = g + (o * axis_total + axis_off) * inner;
                        float* dst = gi + o * pa * inner;
                        for (int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
                    }
                }
                axis_off += pa;
            }
        });
    }
    return out;
}

Tensor slice(const Tensor& x, int64_t axis, int64_t start, int64_t end) {
    const int64_t rank = x.ndim();
    if (axis < 0 || axis >= rank) throw ShapeError("slice: axis out of range");
    const int64_t n = x.dim(axis);
    if (start < 0 || end > n || start >= end) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(end) + ") invalid for axis size " + std::to_string(n));
    }
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = end - start;
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int64_t d = axis + 1; d < rank; ++d) inner *= x.dim(d);

    Tensor out = Tensor::zeros(out_shape);
    float* po = out.mutable_data();
    const float* px = x.data();
    const int64_t len = end - start;
    for (int64_t o = 0; o < outer; ++o) {
        std::copy(px + (o * n + start) * inner, px + (o * n + end) * inner, po + o * len * inner);
    }
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, outer, inner, n, start, len] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            float* gx = xn->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                const float* src = g + o * len * inner;
                float* dst = gx + (o * n + start) * inner;
                for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

Tensor expand(const Tensor& x, Shape shape) {
    const int64_t rank = x.ndim();
    if (static_cast<int64_t>(shape.size()) != rank) {
        throw ShapeError("expand: rank mismatch: " + shape_str(x.shape()) + " vs " + shape_str(shape));
    }
    for (int64_t d = 0; d < rank; ++d) {
        if (x.dim(d) != shape[static_cast<size_t>(d)] && x.dim(d) != 1) {
            throw ShapeError("expand: dim " + std::to_string(d) + " of " + shape_str(x.shape()) + " cannot broadcast to " + shape_str(shape));
        }
    }
    const auto in_strides = strides_of(x.shape());
    std::vector<int64_t> eff(in_strides);
    for (int64_t d = 0; d < rank; ++d) {
        if (x.dim(d) == 1 && shape[static_cast<size_t>(d)] != 1) eff[static_cast<size_t>(d)] = 0;
    }
    Tensor out = Tensor::zeros(shape);
    float* po = out.mutable_data();
    const float* px = x.data();
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    int64_t pos = 0;
    const Shape& os = out.shape();
    do {
        int64_t in_off = 0;
        for (size_t i = 0; i < idx.size(); ++i) in_off += idx[i] * eff[i];
        po[pos++] = px[in_off];
    } while (next_index(idx, os));

    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on, eff] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            float* gx = xn->ensure_grad();
            std::vector<int64_t> idx(on->shape.size(), 0);
            int64_t pos = 0;
            do {
                int64_t in_off = 0;
                for (size_t i = 0; i < idx.size(); ++i) in_off += idx[i] * eff[i];
                gx[in_off] += g[pos++];
            } while (next_index(idx, on->shape));
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    float acc = 0.0f;
    const float* px = x.data();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    Tensor out = Tensor::scalar(acc);
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on] {
            if (on->grad.empty()) return;
            const float g = on->grad[0];
            float* gx = xn->ensure_grad();
            const int64_t n = xn->numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor mean(const Tensor& x) {
    const int64_t n = x.numel();
    float acc = 0.0f;
    const float* px = x.data();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    Tensor out = Tensor::scalar(acc / static_cast<float>(n));
    if (grads_needed({&x})) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::current().record([xn, on] {
            if (on->grad.empty()) return;
            const float g = on->grad[0] / static_cast<float>(xn->numel());
            float* gx = xn->ensure_grad();
            const int64_t n = xn->numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

namespace {

struct BatchPlan {
    int64_t count = 1;
    std::vector<int64_t> a_off;  // per-batch offsets in units of one matrix
    std::vector<int64_t> b_off;
    Shape lead;  // broadcast leading dims
    bool a_full = true;
    bool b_full = true;
};

BatchPlan plan_batches(const Tensor& a, const Tensor& b) {
    const int64_t ra = a.ndim() - 2;
    const int64_t rb = b.ndim() - 2;
    const int64_t rl = std::max(ra, rb);
    BatchPlan plan;
    plan.lead.assign(static_cast<size_t>(rl), 1);
    for (int64_t i = 0; i < rl; ++i) {
        const int64_t da = (i < rl - ra) ? 1 : a.dim(i - (rl - ra));
        const int64_t db = (i < rl - rb) ? 1 : b.dim(i - (rl - rb));
        if (da != db && da != 1 && db != 1) {
            throw ShapeError("matmul: leading dims not broadcastable: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
        }
        plan.lead[static_cast<size_t>(i)] = std::max(da, db);
        if (da != plan.lead[static_cast<size_t>(i)]) plan.a_full = false;
        if (db != plan.lead[static_cast<size_t>(i)]) plan.b_full = false;
    }
    plan.count = shape_numel(plan.lead.empty() ? Shape{1} : plan.lead);
    if (plan.lead.empty()) plan.count = 1;

    // Per-batch matrix offsets with stride 0 on broadcast dims.
    std::vector<int64_t> sa(static_cast<size_t>(rl), 0), sb(static_cast<size_t>(rl), 0);
    int64_t stride = 1;
    for (int64_t i = ra - 1; i >= 0; --i) {
        sa[static_cast<size_t>(i + rl - ra)] = (a.dim(i) == 1 && plan.lead[static_cast<size_t>(i + rl - ra)] != 1) ? 0 : stride;
        stride *= a.dim(i);
    }
    stride = 1;
    for (int64_t i = rb - 1; i >= 0; --i) {
        sb[static_cast<size_t>(i + rl - rb)] = (b.dim(i) == 1 && plan.lead[static_cast<size_t>(i + rl - rb)] != 1) ? 0 : stride;
        stride *= b.dim(i);
    }
    plan.a_off.resize(static_cast<size_t>(plan.count));
    plan.b_off.resize(static_cast<size_t>(plan.count));
    std::vector<int64_t> idx(static_cast<size_t>(rl), 0);
    for (int64_t c = 0; c < plan.count; ++c) {
        int64_t oa = 0, ob = 0;
        for (size_t i = 0; i < idx.size(); ++i) {
            oa += idx[i] * sa[i];
            ob += idx[i] * sb[i];
        }
        plan.a_off[static_cast<size_t>(c)] = oa;
        plan.b_off[static_cast<size_t>(c)] = ob;
        if (!plan.lead.empty()) next_index(idx, plan.lead);
    }
    return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) {
        throw ShapeError("matmul: both inputs need rank >= 2, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const int64_t m = a.dim(a.ndim() - 2);
    const int64_t k = a.dim(a.ndim() - 1);
    const int64_t kb = b.dim(b.ndim() - 2);
    const int64_t n = b.dim(b.ndim() - 1);
    if (k != kb) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    BatchPlan plan = plan_batches(a, b);

    Shape out_shape = plan.lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out = Tensor::zeros(out_shape);

    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.mutable_data();
    const int64_t mk = m * k, kn = k * n, mn = m * n;
    if (plan.count == 1) {
        detail::mm_nn(pa, pb, po, m, k, n, false);
    } else {
        detail::parallel_for(plan.count, 2 * m * k * n, [&](int64_t c0, int64_t c1) {
            for (int64_t c = c0; c < c1; ++c) {
                detail::mm_nn(pa + plan.a_off[static_cast<size_t>(c)] * mk, pb + plan.b_off[static_cast<size_t>(c)] * kn, po + c * mn, m, k, n, false);
            }
        });
    }

    if (grads_needed({&a, &b})) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::current().record([an, bn, on, plan, m, k, n, mk, kn, mn] {
            if (on->grad.empty()) return;
            const float* g = on->grad.data();
            if (an->requires_grad) {
                float* ga = an->ensure_grad();
                const float* vb = bn->value.data();
                auto body = [&](int64_t c0, int64_t c1) {
                    for (int64_t c = c0; c < c1; ++c) {
                        detail::mm_nt(g + c * mn, vb + plan.b_off[static_cast<size_t>(c)] * kn, ga + plan.a_off[static_cast<size_t>(c)] * mk, m, n, k, true);
                    }
                };
                if (plan.a_full) {
                    detail::parallel_for(plan.count, 2 * m * k * n, body);
                } else {
                    body(0, plan.count);  // broadcast reuse: sequential accumulation
                }
            }
            if (bn->requires_grad) {
                float* gb = bn->ensure_grad();
                const float* va = an->value.data();
                auto body = [&](int64_t c0, int64_t c1) {
                    for (int64_t c = c0; c < c1; ++c) {
                        detail::mm_tn(va + plan.a_off[static_cast<size_t>(c)] * mk, g + c * mn, gb + plan.b_off[static_cast<size_t>(c)] * kn, m, k, n, true);
                    }
                };
                if (plan.b_full) {
                    detail::parallel_for(plan.count, 2 * m * k * n, body);
                } else {
                    body(0, plan.count);
                }
            }
        });
    }
    return out;
}

}  // namespace patcher
