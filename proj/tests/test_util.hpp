#pragma once

#include <cmath>
#include <functional>

#include "aada/autodiff.hpp"
#include "aada/random.hpp"

namespace aada::testutil {

inline Tensor random_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Checks analytic d(loss)/d(leaf) against central finite differences.
/// `build` must construct a scalar graph from the current leaf values.
/// Returns the worst relative error over all coordinates.
inline double gradcheck(const std::function<nn::Var()>& build, const nn::Var& x,
                        double step = 1e-5, double denom_floor = 1e-6) {
    if (!x->grad.empty()) x->grad.fill(0.0);  // discard earlier accumulation
    auto loss = build();
    nn::backward(loss);
    Tensor analytic = x->grad;

    double worst = 0.0;
    for (int64_t i = 0; i < x->value.size(); ++i) {
        const double orig = x->value[i];
        x->value[i] = orig + step;
        const double f_plus = build()->value[0];
        x->value[i] = orig - step;
        const double f_minus = build()->value[0];
        x->value[i] = orig;
        const double numeric = (f_plus - f_minus) / (2.0 * step);
        const double denom = std::max({denom_floor, std::abs(numeric), std::abs(analytic[i])});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    if (!x->grad.empty()) x->grad.fill(0.0);
    return worst;
}

}  // namespace aada::testutil
