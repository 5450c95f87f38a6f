#pragma once

#include <functional>
#include <string>
#include <vector>

#include "patcher/tensor.hpp"

namespace patcher {

// Verifies reverse-mode gradients of a scalar-valued deterministic function
// against central finite differences: (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps).
// Returns the max relative error over elements, with denominator
// max(|analytic|, |numeric|, 1e-8). Differences are accumulated in double.
// Throws ContractError if two evaluations of f(x) disagree bitwise.
float grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, float eps = 1e-2f);

// One named finite-difference check; run() returns the max relative error.
struct GradCheckCase {
    std::string name;
    float threshold;
    std::function<float()> run;
};

struct GradCheckRow {
    std::string name;
    float max_rel_err;
    float threshold;
    bool pass;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    bool all_pass() const {
        for (const auto& r : rows) {
            if (!r.pass) return false;
        }
        return true;
    }
};

// Finite-difference cases covering every differentiable op once, the
// composite blocks, and the tiny end-to-end model.
std::vector<GradCheckCase> standard_grad_checks();

GradCheckReport run_grad_checks(const std::vector<GradCheckCase>& cases);

}  // namespace patcher
