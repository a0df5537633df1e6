#pragma once

#include <utility>
#include <vector>

#include "aada/data.hpp"
#include "aada/evaluation.hpp"
#include "aada/inference.hpp"
#include "aada/networks.hpp"

namespace aada::pipeline {

/// Both domains brought to the working resolution and normalized with
/// per-domain frozen statistics. Target labels are kept aside at their
/// native resolution for evaluation only.
struct PreparedData {
    DomainDataset source;
    DomainDataset target;
    std::vector<LabelMap> target_native_labels;
    std::vector<std::pair<int, int>> target_native_dims;  // per tile H,W
    double working_gsd = 0.0;
};

/// resample to the common grid, then standardize each domain on its own
/// statistics (source stats may be supplied pre-frozen from source training)
PreparedData prepare(DomainDataset source_raw, DomainDataset target_raw,
                     const NormalizationStats* frozen_source_stats = nullptr);

ForwardFn classifier_forward(nets::Classifier& classifier);

/// Sliding-window prediction of one working-resolution tile, emitted at the
/// requested native size via bilinear score upsampling.
LabelMap predict_tile_labels(nets::Classifier& classifier, const RasterSample& tile,
                             int class_count, const TilingPlan& plan, int out_h, int out_w);

struct EvalResult {
    ConfusionMatrix cm;
    Metrics m;
};

/// Full inference protocol over the target tiles, scored against the
/// native-resolution reference labels.
EvalResult evaluate_on_target(nets::Classifier& classifier, const PreparedData& prep,
                              const TilingPlan& plan);

}  // namespace aada::pipeline
