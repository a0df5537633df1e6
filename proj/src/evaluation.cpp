#include "aada/evaluation.hpp"

#include <cmath>
#include <stdexcept>

namespace aada {

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& ref) {
    if (pred.h != ref.h || pred.w != ref.w)
        throw std::invalid_argument("ConfusionMatrix::accumulate: shape mismatch");
    for (size_t i = 0; i < ref.v.size(); ++i) {
        const int r = ref.v[i];
        if (r == kIgnoreLabel) {
            ++ignored_pixels;
            continue;
        }
        const int p = pred.v[i];
        if (r < 0 || r >= l || p < 0 || p >= l)
            throw std::invalid_argument("ConfusionMatrix::accumulate: label out of range");
        ++at(r, p);
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.l != l) throw std::invalid_argument("ConfusionMatrix::merge: class count mismatch");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    ignored_pixels += other.ignored_pixels;
}

int64_t ConfusionMatrix::fp(int c) const {
    int64_t s = 0;
    for (int r = 0; r < l; ++r)
        if (r != c) s += at(r, c);
    return s;
}

int64_t ConfusionMatrix::fn(int c) const {
    int64_t s = 0;
    for (int p = 0; p < l; ++p)
        if (p != c) s += at(c, p);
    return s;
}

std::vector<double> iou_per_class(const ConfusionMatrix& cm, std::vector<bool>* present) {
    std::vector<double> iou(static_cast<size_t>(cm.l), 0.0);
    if (present) present->assign(static_cast<size_t>(cm.l), false);
    for (int c = 0; c < cm.l; ++c) {
        const int64_t denom = cm.tp(c) + cm.fp(c) + cm.fn(c);
        if (denom == 0) continue;
        iou[static_cast<size_t>(c)] = static_cast<double>(cm.tp(c)) / static_cast<double>(denom);
        if (present) (*present)[static_cast<size_t>(c)] = true;
    }
    return iou;
}

Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.l == 0 || cm.total() == 0)
        throw std::invalid_argument("metrics: empty confusion matrix");
    Metrics m;
    m.iou = iou_per_class(cm, &m.present);
    m.f1.assign(static_cast<size_t>(cm.l), 0.0);

    int64_t diag = 0;
    int n_present = 0;
    for (int c = 0; c < cm.l; ++c) {
        diag += cm.tp(c);
        if (!m.present[static_cast<size_t>(c)]) continue;
        ++n_present;
        const double tp = static_cast<double>(cm.tp(c));
        const double fpfn = static_cast<double>(cm.fp(c) + cm.fn(c));
        m.f1[static_cast<size_t>(c)] = tp / (tp + 0.5 * fpfn);
        m.mean_iou += m.iou[static_cast<size_t>(c)];
        m.mean_f1 += m.f1[static_cast<size_t>(c)];
    }
    m.oa = static_cast<double>(diag) / static_cast<double>(cm.total());
    if (n_present > 0) {
        m.mean_iou /= n_present;
        m.mean_f1 /= n_present;
    }
    return m;
}

double positive_transfer_rate(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("positive_transfer_rate: empty input");
    int n_pt = 0;
    for (const auto& [before, after] : pairs)
        if (after > before) ++n_pt;
    return static_cast<double>(n_pt) / static_cast<double>(pairs.size());
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("js_divergence: length mismatch");
    double sp = 0.0, sq = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0)
            throw std::invalid_argument("js_divergence: negative probability");
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6)
        throw std::invalid_argument("js_divergence: inputs must sum to 1");

    double d = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (p[i] > 0.0) d += 0.5 * p[i] * std::log(p[i] / m);
        if (q[i] > 0.0) d += 0.5 * q[i] * std::log(q[i] / m);
    }
    return d;
}

}  // namespace aada
