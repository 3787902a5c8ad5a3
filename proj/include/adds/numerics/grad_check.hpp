// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "adds/errors.hpp"
#include "adds/numerics/param.hpp"

namespace adds::num {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    /// A frozen parameter ended up with a nonzero gradient.
    bool frozen_violation = false;
};

/// Loss callback. With `backward` set it must zero all grads, run the
/// forward and backward passes, and leave the analytic gradients in the
/// params; otherwise it only evaluates the loss.
using LossFn = std::function<double(bool backward)>;

/// Compares analytic gradients against central differences
/// (f(x+eps) - f(x-eps)) / 2eps for every trainable entry. The relative error
/// of an entry is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const LossFn& loss_fn, std::span<Param<double>* const> params, double eps,
                                  double floor = 1e-8) {
    GradCheckResult res;
    const double base = loss_fn(true);
    if (!std::isfinite(base)) throw NumericError("grad_check: loss is not finite");

    std::vector<Matrix<double>> analytic;
    analytic.reserve(params.size());
    for (const auto* p : params) analytic.push_back(p->grad);

    for (std::size_t k = 0; k < params.size(); ++k) {
        Param<double>& p = *params[k];
        if (!p.trainable) {
            for (double g : analytic[k].data())
                if (g != 0.0) res.frozen_violation = true;
            continue;
        }
        auto w = p.value.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double orig = w[i];
            w[i] = orig + eps;
            const double fp = loss_fn(false);
            w[i] = orig - eps;
            const double fm = loss_fn(false);
            w[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: loss is not finite");
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[k].data()[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            ++res.checked;
            if (rel > res.max_relative_error) {
                res.max_relative_error = rel;
                res.worst_param = p.name;
                res.worst_index = i;
            }
        }
    }
    return res;
}

}  // namespace adds::num
