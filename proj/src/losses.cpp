#include "patcher/losses.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "op_helpers.hpp"
#include "patcher/ops.hpp"

namespace patcher {

using detail::grads_needed;
using NodePtr = std::shared_ptr<detail::Node>;

namespace {

void check_loss_inputs(const char* op, const Tensor& logits, const Tensor& targets, bool binary_targets) {
    if (logits.shape() != targets.shape()) {
        throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(logits.shape()) + " vs " + shape_str(targets.shape()));
    }
    if (binary_targets) {
        const float* t = targets.data();
        const int64_t n = targets.numel();
        for (int64_t i = 0; i < n; ++i) {
            if (t[i] != 0.0f && t[i] != 1.0f) {
                throw DataError(std::string(op) + ": target value " + std::to_string(t[i]) + " at index " + std::to_string(i) + " is not in {0,1}");
            }
        }
    }
}

inline float sigmoid_stable(float v) {
    if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
    const float e = std::exp(v);
    return e / (1.0f + e);
}

}  // namespace

Tensor bce_loss(const Tensor& logits, const Tensor& targets) {
    check_loss_inputs("bce_loss", logits, targets, true);
    const float* z = logits.data();
    const float* t = targets.data();
    const int64_t n = logits.numel();
    float acc = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
        const float zi = z[i];
        acc += std::max(zi, 0.0f) - zi * t[i] + std::log1p(std::exp(-std::abs(zi)));
    }
    Tensor out = Tensor::scalar(acc / static_cast<float>(n));
    if (grads_needed({&logits})) {
        out.set_requires_grad(true);
        NodePtr zn = logits.node(), tn = targets.node(), on = out.node();
        Tape::current().record([zn, tn, on] {
            if (on->grad.empty()) return;
            const float g = on->grad[0];
            const int64_t n = zn->numel();
            const float inv_n = 1.0f / static_cast<float>(n);
            float* gz = zn->ensure_grad();
            const float* z = zn->value.data();
            const float* t = tn->value.data();
            for (int64_t i = 0; i < n; ++i) {
                gz[i] += g * inv_n * (sigmoid_stable(z[i]) - t[i]);
            }
        });
    }
    return out;
}

Tensor iou_loss(const Tensor& logits, const Tensor& targets) {
    check_loss_inputs("iou_loss", logits, targets, false);
    constexpr float kSmooth = 1.0f;
    const float* z = logits.data();
    const float* t = targets.data();
    const int64_t n = logits.numel();
    float inter = 0.0f, psum = 0.0f, tsum = 0.0f;
    for (int64_t i = 0; i < n; ++i) {
        const float p = sigmoid_stable(z[i]);
        inter += p * t[i];
        psum += p;
        tsum += t[i];
    }
    const float uni = psum + tsum - inter;
    Tensor out = Tensor::scalar(1.0f - (inter + kSmooth) / (uni + kSmooth));
    if (grads_needed({&logits})) {
        out.set_requires_grad(true);
        NodePtr zn = logits.node(), tn = targets.node(), on = out.node();
        Tape::current().record([zn, tn, on, inter, uni] {
            if (on->grad.empty()) return;
            const float g = on->grad[0];
            const int64_t n = zn->numel();
            float* gz = zn->ensure_grad();
            const float* z = zn->value.data();
            const float* t = tn->value.data();
            const float denom = uni + kSmooth;
            // d(loss)/dp = -(t*(uni+s) - (inter+s)*(t-1)) / (uni+s)^2, since
            // d(inter)/dp = t and d(uni)/dp = 1 - t.
            for (int64_t i = 0; i < n; ++i) {
                const float p = sigmoid_stable(z[i]);
                const float dinter = t[i];
                const float duni = 1.0f - t[i];
                const float dloss_dp = -(dinter * denom - (inter + kSmooth) * duni) / (denom * denom);
                gz[i] += g * dloss_dp * p * (1.0f - p);
            }
        });
    }
    return out;
}

namespace {

struct MaskCounts {
    double inter = 0.0;
    double a = 0.0;
    double b = 0.0;
};

MaskCounts count_masks(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("metrics: mask shapes disagree: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    }
    MaskCounts c;
    const float* p = pred.data();
    const float* t = target.data();
    const int64_t n = pred.numel();
    for (int64_t i = 0; i < n; ++i) {
        const bool pa = p[i] != 0.0f;
        const bool tb = t[i] != 0.0f;
        c.inter += (pa && tb) ? 1.0 : 0.0;
        c.a += pa ? 1.0 : 0.0;
        c.b += tb ? 1.0 : 0.0;
    }
    return c;
}

}  // namespace

double dsc(const Tensor& pred_mask, const Tensor& target_mask) {
    const MaskCounts c = count_masks(pred_mask, target_mask);
    if (c.a + c.b == 0.0) return 1.0;
    return 2.0 * c.inter / (c.a + c.b);
}

double iou(const Tensor& pred_mask, const Tensor& target_mask) {
    const MaskCounts c = count_masks(pred_mask, target_mask);
    const double uni = c.a + c.b - c.inter;
    if (uni == 0.0) return 1.0;
    return c.inter / uni;
}

void EvalResult::finalize() {
    mean_dsc = 0.0;
    mean_iou = 0.0;
    if (per_image.empty()) return;
    for (const auto& r : per_image) {
        mean_dsc += r.dsc;
        mean_iou += r.iou;
    }
    mean_dsc /= static_cast<double>(per_image.size());
    mean_iou /= static_cast<double>(per_image.size());
}

std::string EvalResult::to_csv() const {
    std::string out = "id,dsc,iou\n";
    char buf[128];
    for (const auto& r : per_image) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", r.id.c_str(), r.dsc, r.iou);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f\n", mean_dsc, mean_iou);
    out += buf;
    return out;
}

}  // namespace patcher
