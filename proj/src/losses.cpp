#include "aada/losses.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "aada/errors.hpp"
#include "aada/ops.hpp"

namespace aada {

ClassWeights ace_weights(const std::vector<double>& ious, const std::vector<bool>& present,
                         double kappa) {
    const size_t l = ious.size();
    double mean = 0.0;
    int n_present = 0;
    for (size_t c = 0; c < l; ++c) {
        if (present[c]) {
            mean += ious[c];
            ++n_present;
        }
    }
    if (n_present > 0) mean /= n_present;

    ClassWeights cw;
    cw.kappa = kappa;
    cw.w.assign(l, 1.0);
    for (size_t c = 0; c < l; ++c)
        if (present[c]) cw.w[c] = std::pow(1.0 - (ious[c] - mean), kappa);
    return cw;
}

namespace losses {

namespace {

struct PixelRef {
    int64_t score_index;  // flat index of the reference-class score
    int label;
};

// Collects (score index, label) for non-IGNORE pixels of a {B,l,H,W} batch.
std::shared_ptr<std::vector<PixelRef>> gather_refs(const Tensor& scores,
                                                   const std::vector<LabelMap>& labels) {
    const int B = scores.dim(0), l = scores.dim(1), H = scores.dim(2), W = scores.dim(3);
    if (static_cast<int>(labels.size()) != B)
        throw std::invalid_argument("loss: batch/label count mismatch");
    auto refs = std::make_shared<std::vector<PixelRef>>();
    refs->reserve(static_cast<size_t>(B) * H * W);
    const int64_t HW = static_cast<int64_t>(H) * W;
    for (int b = 0; b < B; ++b) {
        if (labels[b].h != H || labels[b].w != W)
            throw std::invalid_argument("loss: label map shape mismatch");
        for (int64_t p = 0; p < HW; ++p) {
            const int y = labels[b].v[static_cast<size_t>(p)];
            if (y == kIgnoreLabel) continue;
            if (y < 0 || y >= l) throw std::invalid_argument("loss: label out of range");
            refs->push_back({(static_cast<int64_t>(b) * l + y) * HW + p, y});
        }
    }
    return refs;
}

}  // namespace

nn::Var weighted_ce(const nn::Var& scores, const std::vector<LabelMap>& labels,
                    const ClassWeights& weights) {
    auto refs = gather_refs(scores->value, labels);
    const auto n_p = static_cast<double>(refs->size());
    auto w = std::make_shared<std::vector<double>>(weights.w);

    double loss = 0.0;
    for (const auto& r : *refs)
        loss -= (*w)[static_cast<size_t>(r.label)] *
                std::log(std::max(scores->value[r.score_index], kProbFloor));
    if (!refs->empty()) loss /= n_p;

    return nn::make_node(Tensor::scalar(loss), {scores}, [refs, w, n_p](nn::Node& n) {
        auto& si = n.inputs[0];
        if (!si->needs_grad || refs->empty()) return;
        Tensor& ds = si->ensure_grad();
        const double g = n.grad[0] / n_p;
        for (const auto& r : *refs) {
            const double p = si->value[r.score_index];
            if (p > kProbFloor) ds[r.score_index] -= g * (*w)[static_cast<size_t>(r.label)] / p;
        }
    });
}

nn::Var focal_loss(const nn::Var& scores, const std::vector<LabelMap>& labels, double gamma) {
    if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    auto refs = gather_refs(scores->value, labels);
    const auto n_p = static_cast<double>(refs->size());

    double loss = 0.0;
    for (const auto& r : *refs) {
        const double p = scores->value[r.score_index];
        const double mod = gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma);
        loss -= mod * std::log(std::max(p, kProbFloor));
    }
    if (!refs->empty()) loss /= n_p;

    return nn::make_node(Tensor::scalar(loss), {scores}, [refs, gamma, n_p](nn::Node& n) {
        auto& si = n.inputs[0];
        if (!si->needs_grad || refs->empty()) return;
        Tensor& ds = si->ensure_grad();
        const double g = n.grad[0] / n_p;
        for (const auto& r : *refs) {
            const double p = si->value[r.score_index];
            const double logp = std::log(std::max(p, kProbFloor));
            double d = 0.0;
            if (gamma > 0.0) d += gamma * std::pow(1.0 - p, gamma - 1.0) * logp;
            if (p > kProbFloor) d -= (gamma == 0.0 ? 1.0 : std::pow(1.0 - p, gamma)) / p;
            ds[r.score_index] += g * d;
        }
    });
}

nn::Var adv_gen_loss(const nn::Var& p_maps) {
    const auto n_p = static_cast<double>(p_maps->value.size());
    double loss = 0.0;
    for (int64_t i = 0; i < p_maps->value.size(); ++i)
        loss -= std::log(std::max(p_maps->value[i], kProbFloor));
    loss /= n_p;

    return nn::make_node(Tensor::scalar(loss), {p_maps}, [n_p](nn::Node& n) {
        auto& pi = n.inputs[0];
        if (!pi->needs_grad) return;
        Tensor& dp = pi->ensure_grad();
        const double g = n.grad[0] / n_p;
        for (int64_t i = 0; i < dp.size(); ++i) {
            const double p = pi->value[i];
            if (p > kProbFloor) dp[i] -= g / p;
        }
    });
}

nn::Var adv_disc_loss(const nn::Var& p_target, const nn::Var& p_transformed) {
    if (p_target->value.shape() != p_transformed->value.shape())
        throw std::invalid_argument("adv_disc_loss: map shape mismatch");
    const auto n_p = static_cast<double>(p_target->value.size());

    double loss = 0.0;
    for (int64_t i = 0; i < p_target->value.size(); ++i) {
        loss -= std::log(std::max(p_target->value[i], kProbFloor));
        loss -= std::log(std::max(1.0 - p_transformed->value[i], kProbFloor));
    }
    loss /= n_p;

    return nn::make_node(Tensor::scalar(loss), {p_target, p_transformed}, [n_p](nn::Node& n) {
        auto& pt = n.inputs[0];
        auto& ps = n.inputs[1];
        const double g = n.grad[0] / n_p;
        if (pt->needs_grad) {
            Tensor& d = pt->ensure_grad();
            for (int64_t i = 0; i < d.size(); ++i)
                if (pt->value[i] > kProbFloor) d[i] -= g / pt->value[i];
        }
        if (ps->needs_grad) {
            Tensor& d = ps->ensure_grad();
            for (int64_t i = 0; i < d.size(); ++i)
                if (1.0 - ps->value[i] > kProbFloor) d[i] += g / (1.0 - ps->value[i]);
        }
    });
}

namespace {

double set_std(const Tensor& x, double& mean_out) {
    const auto n = static_cast<double>(x.size());
    double mean = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) mean += x[i];
    mean /= n;
    double ss = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) ss += (x[i] - mean) * (x[i] - mean);
    mean_out = mean;
    return std::sqrt(ss / (n - 1.0));
}

}  // namespace

nn::Var disc_reg_loss(const nn::Var& p_target, const nn::Var& p_transformed) {
    if (p_target->value.size() < 2 || p_transformed->value.size() < 2)
        throw std::invalid_argument("disc_reg_loss: needs at least 2 cells per set");

    double mean_t = 0.0, mean_s = 0.0;
    const double std_t = set_std(p_target->value, mean_t);
    const double std_s = set_std(p_transformed->value, mean_s);

    return nn::make_node(Tensor::scalar(std_t + std_s), {p_target, p_transformed},
                         [mean_t, mean_s, std_t, std_s](nn::Node& n) {
        const nn::Var sets[2] = {n.inputs[0], n.inputs[1]};
        const double means[2] = {mean_t, mean_s};
        const double stds[2] = {std_t, std_s};
        for (int q = 0; q < 2; ++q) {
            const auto& s = sets[q];
            if (!s->needs_grad || stds[q] <= 0.0) continue;
            Tensor& d = s->ensure_grad();
            const double scale =
                n.grad[0] / ((static_cast<double>(s->value.size()) - 1.0) * stds[q]);
            for (int64_t i = 0; i < d.size(); ++i)
                d[i] += scale * (s->value[i] - means[q]);
        }
    });
}

namespace {

void require_finite(const nn::Var& v, const char* what) {
    if (!std::isfinite(v->value[0]))
        throw DivergenceError(std::string("non-finite loss component: ") + what);
}

}  // namespace

nn::Var joint_loss(const nn::Var& sup_transformed, const nn::Var& sup_source,
                   const nn::Var& adv_gen, const LossWeights& lw) {
    require_finite(sup_transformed, "L_sup_ST");
    require_finite(sup_source, "L_sup");
    require_finite(adv_gen, "L_advA");
    return nn::weighted_sum({sup_transformed, sup_source, adv_gen},
                            {lw.omega_t, 1.0, lw.omega_g});
}

nn::Var disc_total_loss(const nn::Var& adv_disc, const nn::Var& reg, double rho) {
    require_finite(adv_disc, "L_advD");
    require_finite(reg, "L_reg");
    return nn::weighted_sum({adv_disc, reg}, {1.0, rho});
}

}  // namespace losses

void EntropyAccumulator::add(const Tensor& scores) {
    const int nd = scores.ndim();
    const int l = nd == 4 ? scores.dim(1) : scores.dim(0);
    const int64_t hw = nd == 4 ? static_cast<int64_t>(scores.dim(2)) * scores.dim(3)
                               : static_cast<int64_t>(scores.dim(1)) * scores.dim(2);
    const int b = nd == 4 ? scores.dim(0) : 1;
    const double inv_log_l = 1.0 / std::log(static_cast<double>(l));
    for (int bi = 0; bi < b; ++bi) {
        const double* base = scores.data() + static_cast<int64_t>(bi) * l * hw;
        for (int64_t p = 0; p < hw; ++p) {
            double e = 0.0;
            for (int c = 0; c < l; ++c) {
                const double r = base[c * hw + p];
                if (r > 0.0) e -= r * std::log(r);
            }
            sum += e * inv_log_l;
        }
        pixels += hw;
    }
}

double mean_entropy(const Tensor& scores) {
    EntropyAccumulator acc;
    acc.add(scores);
    return acc.mean();
}

}  // namespace aada
