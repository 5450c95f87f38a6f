#include "patcher/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace patcher {

float grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, float eps) {
    // Determinism probe: two evaluations must agree bitwise.
    {
        NoGradGuard ng;
        Tensor a = f(x.clone());
        Tensor b = f(x.clone());
        if (a.numel() != 1 || b.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
        if (std::memcmp(a.data(), b.data(), sizeof(float)) != 0) {
            throw ContractError("grad_check: f is not deterministic (repeated evaluation mismatch)");
        }
    }

    // Analytic gradients via the tape.
    Tensor xg = x.clone();
    xg.set_requires_grad(true);
    Tape::current().clear();
    Tensor loss = f(xg);
    if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    backward(loss);
    std::vector<float> analytic = xg.grad_vector();

    // Central differences, one element at a time, f32 forward with f64
    // difference accumulators.
    Tensor xp = x.clone();
    float* p = xp.mutable_data();
    const int64_t n = xp.numel();
    float max_rel = 0.0f;
    NoGradGuard ng;
    for (int64_t i = 0; i < n; ++i) {
        const float orig = p[i];
        p[i] = orig + eps;
        const double fplus = static_cast<double>(f(xp).item());
        p[i] = orig - eps;
        const double fminus = static_cast<double>(f(xp).item());
        p[i] = orig;
        const double numeric = (fplus - fminus) / (2.0 * static_cast<double>(eps));
        const double a = static_cast<double>(analytic[static_cast<size_t>(i)]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        const double rel = std::abs(a - numeric) / denom;
        max_rel = std::max(max_rel, static_cast<float>(rel));
    }
    return max_rel;
}

GradCheckReport run_grad_checks(const std::vector<GradCheckCase>& cases) {
    GradCheckReport report;
    report.rows.reserve(cases.size());
    for (const auto& c : cases) {
        const float err = c.run();
        report.rows.push_back({c.name, err, c.threshold, err < c.threshold});
    }
    return report;
}

}  // namespace patcher
