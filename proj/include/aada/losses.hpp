#pragma once

#include <vector>

#include "aada/autodiff.hpp"
#include "aada/tensor.hpp"

namespace aada {

/// Per-class loss weights w_c = (1 - (IoU_c - mean IoU))^kappa, recomputed
/// every epoch from the previous epoch's training confusion.
struct ClassWeights {
    std::vector<double> w;
    double kappa = 4.0;

    static ClassWeights unit(int class_count, double kappa = 4.0) {
        return {std::vector<double>(static_cast<size_t>(class_count), 1.0), kappa};
    }
};

/// Relative weights of the joint objective: omega_t on the supervised loss of
/// transformed images, omega_g on the adversarial generator term, rho on the
/// discriminator variance regularizer.
struct LossWeights {
    double omega_t = 2.0;
    double omega_g = 2.0;
    double rho = 4.0;
};

/// Classes absent from the confusion (zero IoU denominator) get weight 1 and
/// are excluded from the IoU mean.
ClassWeights ace_weights(const std::vector<double>& ious, const std::vector<bool>& present,
                         double kappa);

inline constexpr double kProbFloor = 1e-12;  // clamp before every log

namespace losses {

// Graph-building losses. `scores` are probability maps {B,l,H,W} (per-pixel
// sums of 1); discriminator maps are {B,1,H',W'} with values in (0,1).
// IGNORE-labelled pixels contribute neither to the sum nor to the normalizer.

nn::Var weighted_ce(const nn::Var& scores, const std::vector<LabelMap>& labels,
                    const ClassWeights& weights);

nn::Var focal_loss(const nn::Var& scores, const std::vector<LabelMap>& labels, double gamma);

/// -mean log p over all discriminator cells
nn::Var adv_gen_loss(const nn::Var& p_maps);

/// -mean [log p(x_T) + log(1 - p(x_ST))], one normalizer for the summed pair
nn::Var adv_disc_loss(const nn::Var& p_target, const nn::Var& p_transformed);

/// sum over both map sets of the batch-wise standard deviation (n-1 form)
nn::Var disc_reg_loss(const nn::Var& p_target, const nn::Var& p_transformed);

/// omega_t * sup_transformed + sup_source + omega_g * adv_gen; throws
/// DivergenceError if any component is non-finite
nn::Var joint_loss(const nn::Var& sup_transformed, const nn::Var& sup_source,
                   const nn::Var& adv_gen, const LossWeights& lw);

/// adv_disc + rho * reg
nn::Var disc_total_loss(const nn::Var& adv_disc, const nn::Var& reg, double rho);

}  // namespace losses

/// Normalized Shannon entropy, averaged over every pixel of the map:
/// E = -(1/log l) * sum_c r_c log r_c, with 0 log 0 := 0. Scores {l,H,W} or
/// {B,l,H,W}; result in [0,1].
double mean_entropy(const Tensor& scores);

/// Streaming mean of per-pixel entropies across tiles (fixed accumulation
/// order, exact weighting by pixel count).
struct EntropyAccumulator {
    double sum = 0.0;
    int64_t pixels = 0;
    void add(const Tensor& scores);
    double mean() const { return pixels > 0 ? sum / static_cast<double>(pixels) : 0.0; }
};

}  // namespace aada
