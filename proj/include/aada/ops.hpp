#pragma once

#include "aada/autodiff.hpp"

namespace aada::nn {

// Shapes follow the {B,C,H,W} convention. All convolutions use square
// kernels, symmetric zero padding and square stride.

/// x {B,Ci,H,W} * w {Co,Ci,k,k} + b {Co} -> {B,Co,Ho,Wo}
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

/// per-channel 2-D filter: x {B,C,H,W} * w {C,k,k} + b {C}
Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

/// x {B,Ci,H,W} * w {Ci,Co,k,k} + b {Co} -> {B,Co,(H-1)s-2p+k,...}
Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var maxpool2d(const Var& x, int k, int stride, int pad);

Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);

/// softmax over the channel axis of {B,C,H,W}
Var softmax_channels(const Var& x);

Var upsample_nearest2(const Var& x);
Var concat_channels(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);

/// sum_i coeffs[i]*terms[i] over scalar nodes -> scalar node
Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& coeffs);

/// Batch-norm primitive; the layer wrapper in layers.hpp owns the running
/// statistics. In training mode normalization uses batch statistics and the
/// running buffers are updated only when update_running is set; in eval mode
/// the running buffers are used for normalization.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, bool update_running, double momentum,
               double eps);

/// Divide w by its leading singular value, estimated with one power
/// iteration on the persistent (u,v) pair when update is set. A zero weight
/// matrix passes through unchanged.
Var spectral_norm_apply(const Var& w, Tensor& u, Tensor& v, bool update);

/// Non-graph variant of spectral normalization for plain tensors.
Tensor spectral_normalize(const Tensor& w2d, Tensor& u, Tensor& v, bool update = true);

int conv_out_size(int in, int k, int stride, int pad);

}  // namespace aada::nn
