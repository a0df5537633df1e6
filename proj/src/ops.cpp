#include "aada/ops.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace aada::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace {

// col is (C*k*k) x (Ho*Wo), row-major
void im2col(const double* x, int C, int H, int W, int k, int s, int p, int Ho, int Wo,
            double* col) {
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<int64_t>(c) * H * W;
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                double* row = col + (static_cast<int64_t>((c * k + di) * k + dj)) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * s - p + di;
                    if (ih < 0 || ih >= H) {
                        std::fill(row + static_cast<int64_t>(oh) * Wo,
                                  row + static_cast<int64_t>(oh + 1) * Wo, 0.0);
                        continue;
                    }
                    const double* xr = xc + static_cast<int64_t>(ih) * W;
                    double* out = row + static_cast<int64_t>(oh) * Wo;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * s - p + dj;
                        out[ow] = (iw >= 0 && iw < W) ? xr[iw] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int C, int H, int W, int k, int s, int p, int Ho, int Wo,
                double* x) {
    for (int c = 0; c < C; ++c) {
        double* xc = x + static_cast<int64_t>(c) * H * W;
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                const double* row = col + (static_cast<int64_t>((c * k + di) * k + dj)) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * s - p + di;
                    if (ih < 0 || ih >= H) continue;
                    double* xr = xc + static_cast<int64_t>(ih) * W;
                    const double* in = row + static_cast<int64_t>(oh) * Wo;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * s - p + dj;
                        if (iw >= 0 && iw < W) xr[iw] += in[ow];
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    const int B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const int Co = ws[0], k = ws[2];
    if (ws[1] != Ci) throw std::invalid_argument("conv2d: channel mismatch");
    const int Ho = conv_out_size(H, k, stride, pad);
    const int Wo = conv_out_size(W, k, stride, pad);
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: input smaller than kernel");

    const int K = Ci * k * k;
    const int64_t P = static_cast<int64_t>(Ho) * Wo;
    Tensor out({B, Co, Ho, Wo});
    AlignedDoubles col(static_cast<size_t>(K) * P);
    CMapM Wm(w->value.data(), Co, K);
    for (int bi = 0; bi < B; ++bi) {
        im2col(x->value.data() + static_cast<int64_t>(bi) * Ci * H * W, Ci, H, W, k, stride,
               pad, Ho, Wo, col.data());
        CMapM colm(col.data(), K, P);
        MapM y(out.data() + static_cast<int64_t>(bi) * Co * P, Co, P);
        y.noalias() = Wm * colm;
        for (int co = 0; co < Co; ++co) y.row(co).array() += b->value[co];
    }

    return make_node(std::move(out), {x, w, b}, [=](Node& n) {
        auto& xi = n.inputs[0];
        auto& wi = n.inputs[1];
        auto& bi_ = n.inputs[2];
        AlignedDoubles colb(static_cast<size_t>(K) * P);
        AlignedDoubles dcol(static_cast<size_t>(K) * P);
        CMapM Wmb(wi->value.data(), Co, K);
        for (int bi = 0; bi < B; ++bi) {
            CMapM dy(n.grad.data() + static_cast<int64_t>(bi) * Co * P, Co, P);
            if (wi->needs_grad || bi_->needs_grad) {
                im2col(xi->value.data() + static_cast<int64_t>(bi) * Ci * H * W, Ci, H, W, k,
                       stride, pad, Ho, Wo, colb.data());
                CMapM colm(colb.data(), K, P);
                if (wi->needs_grad) {
                    MapM dw(wi->ensure_grad().data(), Co, K);
                    dw.noalias() += dy * colm.transpose();
                }
                if (bi_->needs_grad) {
                    Tensor& db = bi_->ensure_grad();
                    for (int co = 0; co < Co; ++co) db[co] += dy.row(co).sum();
                }
            }
            if (xi->needs_grad) {
                MapM dcolm(dcol.data(), K, P);
                dcolm.noalias() = Wmb.transpose() * dy;
                col2im_add(dcol.data(), Ci, H, W, k, stride, pad, Ho, Wo,
                           xi->ensure_grad().data() + static_cast<int64_t>(bi) * Ci * H * W);
            }
        }
    });
}

Var depthwise_conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const auto& xs = x->value.shape();
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int k = w->value.shape()[1];
    const int Ho = conv_out_size(H, k, stride, pad);
    const int Wo = conv_out_size(W, k, stride, pad);

    Tensor out({B, C, Ho, Wo});
    for (int bi = 0; bi < B; ++bi) {
        for (int c = 0; c < C; ++c) {
            const double* xc =
                x->value.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
            const double* wc = w->value.data() + static_cast<int64_t>(c) * k * k;
            double* oc = out.data() + (static_cast<int64_t>(bi) * C + c) * Ho * Wo;
            const double bias = b->value[c];
            for (int oh = 0; oh < Ho; ++oh) {
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = bias;
                    for (int di = 0; di < k; ++di) {
                        const int ih = oh * stride - pad + di;
                        if (ih < 0 || ih >= H) continue;
                        for (int dj = 0; dj < k; ++dj) {
                            const int iw = ow * stride - pad + dj;
                            if (iw < 0 || iw >= W) continue;
                            acc += wc[di * k + dj] * xc[static_cast<int64_t>(ih) * W + iw];
                        }
                    }
                    oc[static_cast<int64_t>(oh) * Wo + ow] = acc;
                }
            }
        }
    }

    return make_node(std::move(out), {x, w, b}, [=](Node& n) {
        auto& xi = n.inputs[0];
        auto& wi = n.inputs[1];
        auto& bi_ = n.inputs[2];
        for (int bi = 0; bi < B; ++bi) {
            for (int c = 0; c < C; ++c) {
                const double* dyc =
                    n.grad.data() + (static_cast<int64_t>(bi) * C + c) * Ho * Wo;
                const double* xc =
                    xi->value.data() + (static_cast<int64_t>(bi) * C + c) * H * W;
                const double* wc = wi->value.data() + static_cast<int64_t>(c) * k * k;
                double* dxc = xi->needs_grad
                                  ? xi->ensure_grad().data() +
                                        (static_cast<int64_t>(bi) * C + c) * H * W
                                  : nullptr;
                double* dwc = wi->needs_grad
                                  ? wi->ensure_grad().data() + static_cast<int64_t>(c) * k * k
                                  : nullptr;
                double dbc = 0.0;
                for (int oh = 0; oh < Ho; ++oh) {
                    for (int ow = 0; ow < Wo; ++ow) {
                        const double g = dyc[static_cast<int64_t>(oh) * Wo + ow];
                        dbc += g;
                        for (int di = 0; di < k; ++di) {
                            const int ih = oh * stride - pad + di;
                            if (ih < 0 || ih >= H) continue;
                            for (int dj = 0; dj < k; ++dj) {
                                const int iw = ow * stride - pad + dj;
                                if (iw < 0 || iw >= W) continue;
                                if (dwc) dwc[di * k + dj] += g * xc[static_cast<int64_t>(ih) * W + iw];
                                if (dxc) dxc[static_cast<int64_t>(ih) * W + iw] += g * wc[di * k + dj];
                            }
                        }
                    }
                }
                if (bi_->needs_grad) bi_->ensure_grad()[c] += dbc;
            }
        }
    });
}

namespace {

// tconv index mapping: output(co, ih*s-p+di, iw*s-p+dj) <- cols[(co*k+di)*k+dj, ih*W+iw]
void tconv_scatter(const double* cols, int Co, int k, int s, int p, int H, int W, int Ho,
                   int Wo, double* out) {
    for (int co = 0; co < Co; ++co) {
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                const double* row =
                    cols + (static_cast<int64_t>((co * k + di) * k + dj)) * H * W;
                double* oc = out + static_cast<int64_t>(co) * Ho * Wo;
                for (int ih = 0; ih < H; ++ih) {
                    const int oh = ih * s - p + di;
                    if (oh < 0 || oh >= Ho) continue;
                    for (int iw = 0; iw < W; ++iw) {
                        const int ow = iw * s - p + dj;
                        if (ow >= 0 && ow < Wo)
                            oc[static_cast<int64_t>(oh) * Wo + ow] +=
                                row[static_cast<int64_t>(ih) * W + iw];
                    }
                }
            }
        }
    }
}

void tconv_gather(const double* dy, int Co, int k, int s, int p, int H, int W, int Ho, int Wo,
                  double* dcols) {
    for (int co = 0; co < Co; ++co) {
        for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
                double* row = dcols + (static_cast<int64_t>((co * k + di) * k + dj)) * H * W;
                const double* gc = dy + static_cast<int64_t>(co) * Ho * Wo;
                for (int ih = 0; ih < H; ++ih) {
                    const int oh = ih * s - p + di;
                    for (int iw = 0; iw < W; ++iw) {
                        const int ow = iw * s - p + dj;
                        row[static_cast<int64_t>(ih) * W + iw] =
                            (oh >= 0 && oh < Ho && ow >= 0 && ow < Wo)
                                ? gc[static_cast<int64_t>(oh) * Wo + ow]
                                : 0.0;
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    const int B = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
    const int Co = ws[1], k = ws[2];
    if (ws[0] != Ci) throw std::invalid_argument("conv2d_transpose: channel mismatch");
    const int Ho = (H - 1) * stride - 2 * pad + k;
    const int Wo = (W - 1) * stride - 2 * pad + k;

    const int K = Co * k * k;
    const int64_t P = static_cast<int64_t>(H) * W;
    Tensor out({B, Co, Ho, Wo});
    AlignedDoubles cols(static_cast<size_t>(K) * P);
    CMapM Wm(w->value.data(), Ci, K);
    for (int bi = 0; bi < B; ++bi) {
        CMapM xb(x->value.data() + static_cast<int64_t>(bi) * Ci * P, Ci, P);
        MapM colm(cols.data(), K, P);
        colm.noalias() = Wm.transpose() * xb;
        double* ob = out.data() + static_cast<int64_t>(bi) * Co * Ho * Wo;
        tconv_scatter(cols.data(), Co, k, stride, pad, H, W, Ho, Wo, ob);
        for (int co = 0; co < Co; ++co) {
            double* oc = ob + static_cast<int64_t>(co) * Ho * Wo;
            const double bias = b->value[co];
            for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) oc[i] += bias;
        }
    }

    return make_node(std::move(out), {x, w, b}, [=](Node& n) {
        auto& xi = n.inputs[0];
        auto& wi = n.inputs[1];
        auto& bi_ = n.inputs[2];
        AlignedDoubles dcols(static_cast<size_t>(K) * P);
        CMapM Wmb(wi->value.data(), Ci, K);
        for (int bi = 0; bi < B; ++bi) {
            const double* dyb = n.grad.data() + static_cast<int64_t>(bi) * Co * Ho * Wo;
            tconv_gather(dyb, Co, k, stride, pad, H, W, Ho, Wo, dcols.data());
            CMapM dcolm(dcols.data(), K, P);
            if (xi->needs_grad) {
                MapM dx(xi->ensure_grad().data() + static_cast<int64_t>(bi) * Ci * P, Ci, P);
                dx.noalias() += Wmb * dcolm;
            }
            if (wi->needs_grad) {
                CMapM xb(xi->value.data() + static_cast<int64_t>(bi) * Ci * P, Ci, P);
                MapM dw(wi->ensure_grad().data(), Ci, K);
                dw.noalias() += xb * dcolm.transpose();
            }
            if (bi_->needs_grad) {
                Tensor& db = bi_->ensure_grad();
                for (int co = 0; co < Co; ++co) {
                    const double* gc = dyb + static_cast<int64_t>(co) * Ho * Wo;
                    double s = 0.0;
                    for (int64_t i = 0; i < static_cast<int64_t>(Ho) * Wo; ++i) s += gc[i];
                    db[co] += s;
                }
            }
        }
    });
}

Var maxpool2d(const Var& x, int k, int stride, int pad) {
    const auto& xs = x->value.shape();
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int Ho = conv_out_size(H, k, stride, pad);
    const int Wo = conv_out_size(W, k, stride, pad);

    Tensor out({B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    for (int bi = 0; bi < B; ++bi) {
        for (int c = 0; c < C; ++c) {
            const int64_t xoff = (static_cast<int64_t>(bi) * C + c) * H * W;
            const double* xc = x->value.data() + xoff;
            const int64_t ooff = (static_cast<int64_t>(bi) * C + c) * Ho * Wo;
            for (int oh = 0; oh < Ho; ++oh) {
                for (int ow = 0; ow < Wo; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    int64_t best_idx = -1;
                    for (int di = 0; di < k; ++di) {
                        const int ih = oh * stride - pad + di;
                        if (ih < 0 || ih >= H) continue;
                        for (int dj = 0; dj < k; ++dj) {
                            const int iw = ow * stride - pad + dj;
                            if (iw < 0 || iw >= W) continue;
                            const double v = xc[static_cast<int64_t>(ih) * W + iw];
                            if (v > best) {
                                best = v;
                                best_idx = xoff + static_cast<int64_t>(ih) * W + iw;
                            }
                        }
                    }
                    out[ooff + static_cast<int64_t>(oh) * Wo + ow] = best;
                    (*argmax)[static_cast<size_t>(ooff + static_cast<int64_t>(oh) * Wo + ow)] =
                        best_idx;
                }
            }
        }
    }

    return make_node(std::move(out), {x}, [argmax](Node& n) {
        auto& xi = n.inputs[0];
        if (!xi->needs_grad) return;
        Tensor& dx = xi->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) dx[(*argmax)[static_cast<size_t>(i)]] += n.grad[i];
    });
}

Var relu(const Var& x) {
    Tensor out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    return make_node(std::move(out), {x}, [](Node& n) {
        auto& xi = n.inputs[0];
        if (!xi->needs_grad) return;
        Tensor& dx = xi->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            if (xi->value[i] > 0.0) dx[i] += n.grad[i];
    });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = x->value[i] > 0.0 ? x->value[i] : slope * x->value[i];
    return make_node(std::move(out), {x}, [slope](Node& n) {
        auto& xi = n.inputs[0];
        if (!xi->needs_grad) return;
        Tensor& dx = xi->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            dx[i] += n.grad[i] * (xi->value[i] > 0.0 ? 1.0 : slope);
    });
}

Var sigmoid(const Var& x) {
    Tensor out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
    return make_node(std::move(out), {x}, [](Node& n) {
        auto& xi = n.inputs[0];
        if (!xi->needs_grad) return;
        Tensor& dx = xi->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            const double y = n.value[i];
            dx[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

Var softmax_channels(const Var& x) {
    const auto& xs = x->value.shape();
    const int B = xs[0], C = xs[1];
    const int64_t HW = static_cast<int64_t>(xs[2]) * xs[3];
    Tensor out(xs);
    for (int bi = 0; bi < B; ++bi) {
        const double* xb = x->value.data() + static_cast<int64_t>(bi) * C * HW;
        double* ob = out.data() + static_cast<int64_t>(bi) * C * HW;
        for (int64_t p = 0; p < HW; ++p) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < C; ++c) mx = std::max(mx, xb[c * HW + p]);
            double denom = 0.0;
            for (int c = 0; c < C; ++c) {
                const double e = std::exp(xb[c * HW + p] - mx);
                ob[c * HW + p] = e;
                denom += e;
            }
            for (int c = 0; c < C; ++c) ob[c * HW + p] /= denom;
        }
    }
    return make_node(std::move(out), {x}, [B, C, HW](Node& n) {
        auto& xi = n.inputs[0];
        if (!xi->needs_grad) return;
        Tensor& dx = xi->ensure_grad();
        for (int bi = 0; bi < B; ++bi) {
            const int64_t off = static_cast<int64_t>(bi) * C * HW;
            for (int64_t p = 0; p < HW; ++p) {
                double dot = 0.0;
                for (int c = 0; c < C; ++c)
                    dot += n.grad[off + c * HW + p] * n.value[off + c * HW + p];
                for (int c = 0; c < C; ++c)
                    dx[off + c * HW + p] +=
                        n.value[off + c * HW + p] * (n.grad[off + c * HW + p] - dot);
            }
        }
    });
}

Var upsample_nearest2(const Var& x) {
    const auto& xs = x->value.shape();
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    Tensor out({B, C, 2 * H, 2 * W});
    for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
        const double* xc = x->value.data() + bc * H * W;
        double* oc = out.data() + bc * 4 * H * W;
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                const double v = xc[static_cast<int64_t>(i) * W + j];
                double* o0 = oc + static_cast<int64_t>(2 * i) * 2 * W + 2 * j;
                o0[0] = v;
                o0[1] = v;
                o0[2 * W] = v;
                o0[2 * W + 1] = v;
            }
        }
    }
    return make_node(std::move(out), {x}, [B, C, H, W](Node& n) {
        auto& xi = n.inputs[0];
        if (!xi->needs_grad) return;
        Tensor& dx = xi->ensure_grad();
        for (int64_t bc = 0; bc < static_cast<int64_t>(B) * C; ++bc) {
            double* dxc = dx.data() + bc * H * W;
            const double* gc = n.grad.data() + bc * 4 * H * W;
            for (int i = 0; i < H; ++i) {
                for (int j = 0; j < W; ++j) {
                    const double* g0 = gc + static_cast<int64_t>(2 * i) * 2 * W + 2 * j;
                    dxc[static_cast<int64_t>(i) * W + j] +=
                        g0[0] + g0[1] + g0[2 * W] + g0[2 * W + 1];
                }
            }
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const auto& as = a->value.shape();
    const auto& bs = b->value.shape();
    const int B = as[0], Ca = as[1], Cb = bs[1];
    const int64_t HW = static_cast<int64_t>(as[2]) * as[3];
    if (bs[0] != B || bs[2] != as[2] || bs[3] != as[3])
        throw std::invalid_argument("concat_channels: shape mismatch");
    Tensor out({B, Ca + Cb, as[2], as[3]});
    for (int bi = 0; bi < B; ++bi) {
        std::copy(a->value.data() + static_cast<int64_t>(bi) * Ca * HW,
                  a->value.data() + static_cast<int64_t>(bi + 1) * Ca * HW,
                  out.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW);
        std::copy(b->value.data() + static_cast<int64_t>(bi) * Cb * HW,
                  b->value.data() + static_cast<int64_t>(bi + 1) * Cb * HW,
                  out.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW + Ca * HW);
    }
    return make_node(std::move(out), {a, b}, [B, Ca, Cb, HW](Node& n) {
        auto& ai = n.inputs[0];
        auto& bi_ = n.inputs[1];
        for (int bi = 0; bi < B; ++bi) {
            const double* g = n.grad.data() + static_cast<int64_t>(bi) * (Ca + Cb) * HW;
            if (ai->needs_grad) {
                double* da = ai->ensure_grad().data() + static_cast<int64_t>(bi) * Ca * HW;
                for (int64_t i = 0; i < static_cast<int64_t>(Ca) * HW; ++i) da[i] += g[i];
            }
            if (bi_->needs_grad) {
                double* db = bi_->ensure_grad().data() + static_cast<int64_t>(bi) * Cb * HW;
                for (int64_t i = 0; i < static_cast<int64_t>(Cb) * HW; ++i)
                    db[i] += g[Ca * HW + i];
            }
        }
    });
}

Var add(const Var& a, const Var& b) {
    if (a->value.shape() != b->value.shape())
        throw std::invalid_argument("add: shape mismatch");
    Tensor out(a->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (auto& in : n.inputs)
            if (in->needs_grad) in->accumulate(n.grad);
    });
}

Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& coeffs) {
    double v = 0.0;
    for (size_t i = 0; i < terms.size(); ++i) v += coeffs[i] * terms[i]->value[0];
    return make_node(Tensor::scalar(v), terms, [coeffs](Node& n) {
        for (size_t i = 0; i < n.inputs.size(); ++i)
            if (n.inputs[i]->needs_grad) n.inputs[i]->ensure_grad()[0] += coeffs[i] * n.grad[0];
    });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, bool update_running, double momentum,
               double eps) {
    const auto& xs = x->value.shape();
    const int B = xs[0], C = xs[1];
    const int64_t HW = static_cast<int64_t>(xs[2]) * xs[3];
    const int64_t M = static_cast<int64_t>(B) * HW;

    auto mean = std::make_shared<std::vector<double>>(C);
    auto invstd = std::make_shared<std::vector<double>>(C);
    if (training) {
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int bi = 0; bi < B; ++bi) {
                const double* xc = x->value.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) s += xc[i];
            }
            const double mu = s / static_cast<double>(M);
            double v = 0.0;
            for (int bi = 0; bi < B; ++bi) {
                const double* xc = x->value.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) v += (xc[i] - mu) * (xc[i] - mu);
            }
            v /= static_cast<double>(M);
            (*mean)[c] = mu;
            (*invstd)[c] = 1.0 / std::sqrt(v + eps);
            if (update_running) {
                running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
                running_var[c] = (1.0 - momentum) * running_var[c] + momentum * v;
            }
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean)[c] = running_mean[c];
            (*invstd)[c] = 1.0 / std::sqrt(running_var[c] + eps);
        }
    }

    Tensor out(xs);
    for (int bi = 0; bi < B; ++bi) {
        for (int c = 0; c < C; ++c) {
            const double* xc = x->value.data() + (static_cast<int64_t>(bi) * C + c) * HW;
            double* oc = out.data() + (static_cast<int64_t>(bi) * C + c) * HW;
            const double mu = (*mean)[c], is = (*invstd)[c];
            const double g = gamma->value[c], be = beta->value[c];
            for (int64_t i = 0; i < HW; ++i) oc[i] = g * (xc[i] - mu) * is + be;
        }
    }

    return make_node(std::move(out), {x, gamma, beta},
                     [B, C, HW, M, training, mean, invstd](Node& n) {
        auto& xi = n.inputs[0];
        auto& gi = n.inputs[1];
        auto& bi_ = n.inputs[2];
        for (int c = 0; c < C; ++c) {
            const double mu = (*mean)[c], is = (*invstd)[c];
            const double g = gi->value[c];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int bi = 0; bi < B; ++bi) {
                const double* xc = xi->value.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                const double* gy = n.grad.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    sum_dy += gy[i];
                    sum_dy_xhat += gy[i] * (xc[i] - mu) * is;
                }
            }
            if (gi->needs_grad) gi->ensure_grad()[c] += sum_dy_xhat;
            if (bi_->needs_grad) bi_->ensure_grad()[c] += sum_dy;
            if (!xi->needs_grad) continue;
            Tensor& dx = xi->ensure_grad();
            if (training) {
                const double inv_m = 1.0 / static_cast<double>(M);
                for (int bi = 0; bi < B; ++bi) {
                    const double* xc =
                        xi->value.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                    const double* gy = n.grad.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                    double* dxc = dx.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) {
                        const double xhat = (xc[i] - mu) * is;
                        dxc[i] += g * is * (gy[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                    }
                }
            } else {
                for (int bi = 0; bi < B; ++bi) {
                    const double* gy = n.grad.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                    double* dxc = dx.data() + (static_cast<int64_t>(bi) * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) dxc[i] += gy[i] * g * is;
                }
            }
        }
    });
}

namespace {

double normalize_inplace(AlignedDoubles& x) {
    double n = 0.0;
    for (double v : x) n += v * v;
    n = std::sqrt(n);
    if (n > 1e-24)
        for (double& v : x) v /= n;
    return n;
}

}  // namespace

Tensor spectral_normalize(const Tensor& w2d, Tensor& u, Tensor& v, bool update) {
    const int rows = w2d.dim(0);
    const int64_t cols = w2d.size() / rows;
    CMapM W(w2d.data(), rows, cols);
    if (update) {
        AlignedDoubles vn(static_cast<size_t>(cols)), un(static_cast<size_t>(rows));
        Eigen::Map<Eigen::VectorXd> vm(vn.data(), cols), um(un.data(), rows);
        vm.noalias() = W.transpose() * Eigen::Map<const Eigen::VectorXd>(u.data(), rows);
        normalize_inplace(vn);
        um.noalias() = W * vm;
        normalize_inplace(un);
        std::copy(un.begin(), un.end(), u.data());
        std::copy(vn.begin(), vn.end(), v.data());
    }
    const double sigma = Eigen::Map<const Eigen::VectorXd>(u.data(), rows).transpose() * W *
                         Eigen::Map<const Eigen::VectorXd>(v.data(), cols);
    Tensor out = w2d;
    if (sigma > 1e-12)
        for (int64_t i = 0; i < out.size(); ++i) out[i] /= sigma;
    return out;
}

Var spectral_norm_apply(const Var& w, Tensor& u, Tensor& v, bool update) {
    const int rows = w->value.dim(0);
    const int64_t cols = w->value.size() / rows;
    Tensor w2d({rows, static_cast<int>(cols)}, w->value.data());
    Tensor normalized = spectral_normalize(w2d, u, v, update);
    normalized.reshape(w->value.shape());

    CMapM W(w->value.data(), rows, cols);
    const double sigma = Eigen::Map<const Eigen::VectorXd>(u.data(), rows).transpose() * W *
                         Eigen::Map<const Eigen::VectorXd>(v.data(), cols);
    if (sigma <= 1e-12) {  // degenerate weights pass through unchanged
        return make_node(std::move(normalized), {w}, [](Node& n) {
            if (n.inputs[0]->needs_grad) n.inputs[0]->accumulate(n.grad);
        });
    }
    // capture the estimates as of this forward; buffers mutate on later passes
    auto uc = std::make_shared<std::vector<double>>(u.data(), u.data() + rows);
    auto vc = std::make_shared<std::vector<double>>(v.data(), v.data() + cols);
    return make_node(std::move(normalized), {w}, [sigma, rows, cols, uc, vc](Node& n) {
        auto& wi = n.inputs[0];
        if (!wi->needs_grad) return;
        double gdot = 0.0;  // <G, W/sigma>
        for (int64_t i = 0; i < n.grad.size(); ++i) gdot += n.grad[i] * n.value[i];
        Tensor& dw = wi->ensure_grad();
        for (int r = 0; r < rows; ++r)
            for (int64_t cidx = 0; cidx < cols; ++cidx) {
                const int64_t i = r * cols + cidx;
                dw[i] += n.grad[i] / sigma -
                         (gdot / sigma) * (*uc)[static_cast<size_t>(r)] *
                             (*vc)[static_cast<size_t>(cidx)];
            }
    });
}

}  // namespace aada::nn
