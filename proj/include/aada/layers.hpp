#pragma once

#include <string>
#include <utility>
#include <vector>

#include "aada/ops.hpp"
#include "aada/random.hpp"

namespace aada::nn {

/// Per-forward mode switches. bn_update_running implements the policy of
/// freezing running-average updates for selected passes while still
/// normalizing with batch statistics.
struct FwdCtx {
    bool training = true;
    bool bn_update_running = true;
};

/// Named parameter/buffer registry used by optimizers and checkpointing.
/// Collection order is deterministic and doubles as the serialization order.
struct ParamSet {
    std::vector<std::pair<std::string, Var>> params;
    std::vector<std::pair<std::string, Tensor*>> buffers;

    void add_param(const std::string& name, const Var& v) { params.emplace_back(name, v); }
    void add_buffer(const std::string& name, Tensor* t) { buffers.emplace_back(name, t); }

    std::vector<Var> vars() const {
        std::vector<Var> out;
        out.reserve(params.size());
        for (const auto& [name, v] : params) out.push_back(v);
        return out;
    }
    int64_t count() const {
        int64_t n = 0;
        for (const auto& [name, v] : params) n += v->value.size();
        return n;
    }
};

Tensor he_normal(std::vector<int> shape, int fan_in, RngStream& rng);

struct Conv2d {
    Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride_, int pad_, RngStream& rng);
    Var forward(const Var& x) const { return conv2d(x, w, b, stride, pad); }
    void collect(ParamSet& ps, const std::string& p) const;
};

struct DepthwiseConv2d {
    Var w, b;
    int stride = 1, pad = 0;

    DepthwiseConv2d() = default;
    DepthwiseConv2d(int c, int k, int stride_, int pad_, RngStream& rng);
    Var forward(const Var& x) const { return depthwise_conv2d(x, w, b, stride, pad); }
    void collect(ParamSet& ps, const std::string& p) const;
};

struct ConvTranspose2d {
    Var w, b;
    int stride = 2, pad = 1;

    ConvTranspose2d() = default;
    ConvTranspose2d(int cin, int cout, int k, int stride_, int pad_, RngStream& rng);
    Var forward(const Var& x) const { return conv2d_transpose(x, w, b, stride, pad); }
    void collect(ParamSet& ps, const std::string& p) const;
};

struct BatchNorm2d {
    Var gamma, beta;
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int c);
    Var forward(const Var& x, const FwdCtx& ctx) {
        return batch_norm(x, gamma, beta, running_mean, running_var, ctx.training,
                          ctx.training && ctx.bn_update_running, momentum, eps);
    }
    void collect(ParamSet& ps, const std::string& p);
};

/// Convolution whose weight passes through spectral normalization. The
/// singular-vector estimates are refreshed once per training forward.
struct SpectralConv2d {
    Var w, b;
    Tensor u, v;
    int stride = 1, pad = 0;

    SpectralConv2d() = default;
    SpectralConv2d(int cin, int cout, int k, int stride_, int pad_, RngStream& rng);
    Var forward(const Var& x, bool update_estimate) {
        return conv2d(x, spectral_norm_apply(w, u, v, update_estimate), b, stride, pad);
    }
    void collect(ParamSet& ps, const std::string& p);
};

}  // namespace aada::nn
