#pragma once

// Central-finite-difference gradient checking against analytic backward
// passes, in double precision.

#include <functional>

#include "vtg/nn_core.hpp"
#include "vtg/rng.hpp"

namespace vtg::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

/// Compares analytic parameter gradients against central differences for up
/// to `samples` randomly chosen entries of each parameter tensor. `loss` must
/// recompute the full forward pass; `grads` must already hold the analytic
/// gradients for the same loss.
inline GradCheckResult check_param_grads(const nn::ParamList<double>& params,
                                         const std::function<double()>& loss, Rng& rng,
                                         int samples_per_param = 8, double h = 1e-6) {
    GradCheckResult res;
    for (const auto& np : params) {
        auto& value = np.param->value;
        auto& grad = np.param->grad;
        const int n = static_cast<int>(value.size());
        for (int s = 0; s < std::min(samples_per_param, n); ++s) {
            const int64_t idx = rng.uniform_int(0, n - 1);
            const double orig = value[idx];
            const double step = h * std::max(1.0, std::abs(orig));
            value[idx] = orig + step;
            const double lp = loss();
            value[idx] = orig - step;
            const double lm = loss();
            value[idx] = orig;
            const double numeric = (lp - lm) / (2.0 * step);
            res.max_rel_err = std::max(res.max_rel_err, rel_err(grad[idx], numeric));
            ++res.checked;
        }
    }
    return res;
}

/// Same check for an arbitrary (tensor, analytic-grad) pair, e.g. inputs.
inline GradCheckResult check_tensor_grad(TensorT<double>& value, const TensorT<double>& grad,
                                         const std::function<double()>& loss, Rng& rng,
                                         int samples = 32, double h = 1e-6) {
    GradCheckResult res;
    const int n = static_cast<int>(value.size());
    for (int s = 0; s < std::min(samples, n); ++s) {
        const int64_t idx = rng.uniform_int(0, n - 1);
        const double orig = value[idx];
        const double step = h * std::max(1.0, std::abs(orig));
        value[idx] = orig + step;
        const double lp = loss();
        value[idx] = orig - step;
        const double lm = loss();
        value[idx] = orig;
        const double numeric = (lp - lm) / (2.0 * step);
        res.max_rel_err = std::max(res.max_rel_err, rel_err(grad[idx], numeric));
        ++res.checked;
    }
    return res;
}

}  // namespace vtg::testing
