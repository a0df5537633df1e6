#include "aada/optim.hpp"

#include <cmath>

namespace aada {

void SgdMomentum::step(const std::vector<nn::Var>& params) {
    if (velocity.size() != params.size()) {
        velocity.clear();
        for (const auto& p : params) velocity.emplace_back(p->value.shape());
    }
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p->grad.empty()) continue;
        Tensor& vel = velocity[i];
        for (int64_t j = 0; j < p->value.size(); ++j) {
            const double g = p->grad[j] + weight_decay * p->value[j];
            vel[j] = momentum * vel[j] + g;
            p->value[j] -= lr * vel[j];
        }
    }
}

void Adam::step(const std::vector<nn::Var>& params) {
    if (m.size() != params.size()) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p->value.shape());
            v.emplace_back(p->value.shape());
        }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p->grad.empty()) continue;
        for (int64_t j = 0; j < p->value.size(); ++j) {
            const double g = p->grad[j];
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
            const double mhat = m[i][j] / bc1;
            const double vhat = v[i][j] / bc2;
            p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace aada
