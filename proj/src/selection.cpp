#include "aada/selection.hpp"

#include <cmath>
#include <json.hpp>

#include "aada/errors.hpp"
#include "aada/evaluation.hpp"
#include "aada/inference.hpp"
#include "aada/losses.hpp"

using nlohmann::json;

namespace aada {

TargetEpochEval evaluate_target(nets::Classifier& classifier, const DomainDataset& target,
                                double tile_fraction, bool eval_f1) {
    if (target.empty()) throw DataError("evaluate_target: empty target dataset");
    const auto n_tiles = static_cast<size_t>(std::max(
        1.0, std::ceil(tile_fraction * static_cast<double>(target.samples.size()))));

    nn::FwdCtx eval_ctx{false, false};
    EntropyAccumulator entropy;
    ConfusionMatrix cm(target.class_count);
    bool any_labels = false;

    for (size_t t = 0; t < std::min(n_tiles, target.samples.size()); ++t) {
        const auto& tile = target.samples[t];
        // crop to the largest stride-aligned region for the plain forward
        const int h = tile.height() / 32 * 32;
        const int w = tile.width() / 32 * 32;
        if (h == 0 || w == 0) throw DataError("evaluate_target: tile smaller than stride");
        Tensor in({1, tile.channel_count(), h, w});
        for (int c = 0; c < tile.channel_count(); ++c)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    in[(static_cast<int64_t>(c) * h + i) * w + j] =
                        tile.channels[(static_cast<int64_t>(c) * tile.height() + i) *
                                          tile.width() + j];
        auto scores = classifier.forward(nn::constant(std::move(in)), eval_ctx);
        entropy.add(scores->value);
        if (eval_f1 && !tile.labels.empty()) {
            Tensor s = scores->value;
            s.reshape({target.class_count, h, w});
            LabelMap pred = argmax_labels(s);
            LabelMap ref(h, w);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) ref.at(i, j) = tile.labels.at(i, j);
            cm.accumulate(pred, ref);
            any_labels = true;
        }
    }

    TargetEpochEval out;
    out.mean_entropy = entropy.mean();
    if (any_labels && cm.total() > 0) out.mean_f1 = metrics(cm).mean_f1;
    return out;
}

double evaluate_checkpoint_entropy(nets::Classifier& classifier, const DomainDataset& target,
                                   double tile_fraction) {
    return evaluate_target(classifier, target, tile_fraction, false).mean_entropy;
}

const CheckpointRecord& select_parameters(const std::vector<CheckpointRecord>& history) {
    const CheckpointRecord* best = nullptr;
    for (const auto& rec : history) {
        if (!rec.mean_entropy) continue;
        if (!best || *rec.mean_entropy < *best->mean_entropy ||
            (*rec.mean_entropy == *best->mean_entropy && rec.epoch > best->epoch))
            best = &rec;
    }
    if (!best) throw DataError("select_parameters: no record carries a mean entropy");
    return *best;
}

std::string selection_report_json(const std::vector<CheckpointRecord>& history,
                                  const CheckpointRecord& selected) {
    json per_epoch = json::array();
    for (const auto& rec : history) {
        json row{{"epoch", rec.epoch}, {"checkpoint", rec.checkpoint_path}};
        if (rec.mean_entropy) row["mean_entropy"] = *rec.mean_entropy;
        if (rec.target_mean_f1) row["target_mean_f1"] = *rec.target_mean_f1;
        per_epoch.push_back(row);
    }
    json report{{"selected_epoch", selected.epoch},
                {"mean_entropy", selected.mean_entropy ? json(*selected.mean_entropy) : json()},
                {"per_epoch", per_epoch}};
    return report.dump(2) + "\n";
}

}  // namespace aada
