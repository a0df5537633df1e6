#include "aada/pipeline.hpp"

#include "aada/errors.hpp"

namespace aada::pipeline {

PreparedData prepare(DomainDataset source_raw, DomainDataset target_raw,
                     const NormalizationStats* frozen_source_stats) {
    PreparedData prep;
    for (const auto& s : target_raw.samples) {
        prep.target_native_labels.push_back(s.labels);
        prep.target_native_dims.emplace_back(s.height(), s.width());
    }

    auto res = resample_to_common_gsd(std::move(source_raw), std::move(target_raw));
    prep.working_gsd = res.working_gsd;

    if (frozen_source_stats) {
        prep.source = std::move(res.source);
        for (auto& s : prep.source.samples) apply_normalization(s, *frozen_source_stats);
        prep.source.stats = *frozen_source_stats;
        prep.source.normalized = true;
    } else {
        prep.source = normalize_dataset(std::move(res.source));
    }

    // the resampled target copy may be unlabelled; dataset validation of the
    // label range still runs against retained labels when present
    prep.target = normalize_dataset(std::move(res.target));
    return prep;
}

ForwardFn classifier_forward(nets::Classifier& classifier) {
    return [&classifier](const Tensor& x) {
        nn::FwdCtx ctx{false, false};
        return classifier.forward(nn::constant(x), ctx)->value;
    };
}

LabelMap predict_tile_labels(nets::Classifier& classifier, const RasterSample& tile,
                             int class_count, const TilingPlan& plan, int out_h, int out_w) {
    auto pred = sliding_window_predict(classifier_forward(classifier), tile, class_count, plan);
    return upsample_scores_to(pred.scores, out_h, out_w);
}

EvalResult evaluate_on_target(nets::Classifier& classifier, const PreparedData& prep,
                              const TilingPlan& plan) {
    EvalResult out;
    out.cm = ConfusionMatrix(prep.target.class_count);
    bool any = false;
    for (size_t t = 0; t < prep.target.samples.size(); ++t) {
        const auto& ref = prep.target_native_labels[t];
        if (ref.empty()) continue;
        any = true;
        const auto [h, w] = prep.target_native_dims[t];
        LabelMap pred = predict_tile_labels(classifier, prep.target.samples[t],
                                            prep.target.class_count, plan, h, w);
        out.cm.accumulate(pred, ref);
    }
    if (!any) throw DataError("evaluate_on_target: no target labels available");
    out.m = metrics(out.cm);
    return out;
}

}  // namespace aada::pipeline
