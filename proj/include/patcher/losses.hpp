#pragma once

#include <string>
#include <vector>

#include "patcher/tensor.hpp"

namespace patcher {

// Mean binary cross-entropy from raw logits, computed in the stable form
// max(z,0) - z*t + log(1 + exp(-|z|)). Targets must be exactly 0 or 1.
Tensor bce_loss(const Tensor& logits, const Tensor& targets);

// Soft Jaccard loss: 1 - (sum(p*t) + 1) / (sum(p) + sum(t) - sum(p*t) + 1)
// with p = sigmoid(logits).
Tensor iou_loss(const Tensor& logits, const Tensor& targets);

// Hard-mask metrics; prediction = logits > 0 (sigmoid > 0.5). Both masks
// empty scores 1.0 by convention.
double dsc(const Tensor& pred_mask, const Tensor& target_mask);
double iou(const Tensor& pred_mask, const Tensor& target_mask);

struct EvalResult {
    struct PerImage {
        std::string id;
        double dsc;
        double iou;
    };
    std::vector<PerImage> per_image;
    double mean_dsc = 0.0;
    double mean_iou = 0.0;

    void finalize();                 // recompute aggregates (mean over images)
    std::string to_csv() const;      // id,dsc,iou rows + aggregate footer
};

}  // namespace patcher
