#pragma once

#include <vector>

#include "aada/autodiff.hpp"

namespace aada {

/// SGD with classical momentum and L2 weight decay folded into the gradient.
struct SgdMomentum {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    std::vector<Tensor> velocity;

    void step(const std::vector<nn::Var>& params);
};

/// Adaptive moment estimation with bias correction.
struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<Tensor> m, v;

    void step(const std::vector<nn::Var>& params);
};

}  // namespace aada
