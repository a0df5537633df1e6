#include "aada/layers.hpp"

#include <cmath>

namespace aada::nn {

Tensor he_normal(std::vector<int> shape, int fan_in, RngStream& rng) {
    Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, RngStream& rng)
    : w(leaf(he_normal({cout, cin, k, k}, cin * k * k, rng))),
      b(leaf(Tensor({cout}))),
      stride(stride_),
      pad(pad_) {}

void Conv2d::collect(ParamSet& ps, const std::string& p) const {
    ps.add_param(p + ".w", w);
    ps.add_param(p + ".b", b);
}

DepthwiseConv2d::DepthwiseConv2d(int c, int k, int stride_, int pad_, RngStream& rng)
    : w(leaf(he_normal({c, k, k}, k * k, rng))),
      b(leaf(Tensor({c}))),
      stride(stride_),
      pad(pad_) {}

void DepthwiseConv2d::collect(ParamSet& ps, const std::string& p) const {
    ps.add_param(p + ".w", w);
    ps.add_param(p + ".b", b);
}

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int stride_, int pad_,
                                 RngStream& rng)
    : w(leaf(he_normal({cin, cout, k, k}, cin * k * k, rng))),
      b(leaf(Tensor({cout}))),
      stride(stride_),
      pad(pad_) {}

void ConvTranspose2d::collect(ParamSet& ps, const std::string& p) const {
    ps.add_param(p + ".w", w);
    ps.add_param(p + ".b", b);
}

BatchNorm2d::BatchNorm2d(int c)
    : gamma(leaf(Tensor({c}, 1.0))),
      beta(leaf(Tensor({c}))),
      running_mean({c}),
      running_var({c}, 1.0) {}

void BatchNorm2d::collect(ParamSet& ps, const std::string& p) {
    ps.add_param(p + ".gamma", gamma);
    ps.add_param(p + ".beta", beta);
    ps.add_buffer(p + ".running_mean", &running_mean);
    ps.add_buffer(p + ".running_var", &running_var);
}

SpectralConv2d::SpectralConv2d(int cin, int cout, int k, int stride_, int pad_, RngStream& rng)
    : w(leaf(he_normal({cout, cin, k, k}, cin * k * k, rng))),
      b(leaf(Tensor({cout}))),
      u({cout}),
      v({cin * k * k}),
      stride(stride_),
      pad(pad_) {
    for (int i = 0; i < cout; ++i) u[i] = rng.normal(0.0, 1.0);
    double n = 0.0;
    for (int i = 0; i < cout; ++i) n += u[i] * u[i];
    n = std::sqrt(n);
    for (int i = 0; i < cout; ++i) u[i] /= n;
    // prime the estimates so eval-mode forwards see a sensible sigma
    Tensor w2d({cout, cin * k * k}, w->value.data());
    spectral_normalize(w2d, u, v, true);
}

void SpectralConv2d::collect(ParamSet& ps, const std::string& p) {
    ps.add_param(p + ".w", w);
    ps.add_param(p + ".b", b);
    ps.add_buffer(p + ".u", &u);
    ps.add_buffer(p + ".v", &v);
}

}  // namespace aada::nn
