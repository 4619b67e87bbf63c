#pragma once

#include <functional>
#include <vector>

#include "htp/tensor.hpp"

namespace htp {

// Central finite-difference verification of reverse-mode gradients, 64-bit
// only. `loss_fn` must rebuild its graph from the current parameter values
// and return the scalar loss; it must not mutate parameters. Relative error
// uses denominator max(|analytic|, |numeric|, 0.01) so that near-zero
// gradients are compared absolutely at the same tolerance.
struct GradCheckResult {
    double max_rel_err = 0.0;
    bool pass = true;
};

inline GradCheckResult grad_check(std::vector<ParamT<double>*> params,
                                  const std::function<double()>& loss_fn,
                                  const std::function<void()>& backward_fn,
                                  double step = 1e-5, double tol = 1e-4) {
    for (auto* p : params) p->zero_grad();
    backward_fn();
    std::vector<TensorT<double>> analytic;
    for (auto* p : params) analytic.push_back(p->grad);

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& value = params[pi]->value;
        for (size_t i = 0; i < value.size(); ++i) {
            const double saved = value.v[i];
            value.v[i] = saved + step;
            const double lp = loss_fn();
            value.v[i] = saved - step;
            const double lm = loss_fn();
            value.v[i] = saved;
            const double numeric = (lp - lm) / (2.0 * step);
            const double a = analytic[pi].v[i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-2});
            if (rel > res.max_rel_err) res.max_rel_err = rel;
        }
    }
    res.pass = res.max_rel_err < tol;
    return res;
}

}  // namespace htp
