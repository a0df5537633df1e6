#pragma once

#include <cstdint>
#include <vector>

#include "aada/tensor.hpp"

namespace aada {

/// l x l count accumulator; rows index the reference class, columns the
/// prediction. IGNORE pixels are tallied separately and never enter counts.
struct ConfusionMatrix {
    int l = 0;
    std::vector<int64_t> counts;  // row-major l*l
    int64_t ignored_pixels = 0;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int class_count)
        : l(class_count), counts(static_cast<size_t>(class_count) * class_count, 0) {}

    int64_t& at(int ref, int pred) { return counts[static_cast<size_t>(ref) * l + pred]; }
    int64_t at(int ref, int pred) const { return counts[static_cast<size_t>(ref) * l + pred]; }

    int64_t total() const {
        int64_t t = 0;
        for (int64_t c : counts) t += c;
        return t;
    }

    void accumulate(const LabelMap& pred, const LabelMap& ref);
    void merge(const ConfusionMatrix& other);

    int64_t tp(int c) const { return at(c, c); }
    int64_t fp(int c) const;
    int64_t fn(int c) const;
    /// a class participates in metrics if it occurs in reference or prediction
    bool present(int c) const { return tp(c) + fp(c) + fn(c) > 0; }
};

/// IoU_c = TP/(TP+FP+FN); absent classes get 0 with present=false.
std::vector<double> iou_per_class(const ConfusionMatrix& cm, std::vector<bool>* present = nullptr);

struct Metrics {
    std::vector<double> iou;      // per class; 0 where absent
    std::vector<double> f1;       // per class; 0 where absent
    std::vector<bool> present;
    double oa = 0.0;
    double mean_iou = 0.0;        // over present classes
    double mean_f1 = 0.0;
};

Metrics metrics(const ConfusionMatrix& cm);

/// fraction of (before, after) pairs with after strictly greater
double positive_transfer_rate(const std::vector<std::pair<double, double>>& pairs);

/// Jensen-Shannon divergence, natural log, in [0, log 2]
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace aada
