#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aada/data.hpp"
#include "aada/networks.hpp"

namespace aada {

struct CheckpointRecord {
    int epoch = 0;
    std::optional<double> mean_entropy;    // present from selection_start_epoch on
    std::string checkpoint_path;
    std::optional<double> target_mean_f1;  // evaluation-only extra, never used for selection
};

struct TargetEpochEval {
    double mean_entropy = 0.0;
    std::optional<double> mean_f1;
};

/// Plain forward passes (no TTA, evaluation mode) over the target tiles;
/// per-pixel entropies averaged over all pixels of all evaluated tiles.
/// tile_fraction < 1 evaluates a deterministic prefix of the tiles. When
/// eval_f1 is set and tiles carry labels, the same forwards also produce a
/// mean F1 against those labels.
TargetEpochEval evaluate_target(nets::Classifier& classifier, const DomainDataset& target,
                                double tile_fraction = 1.0, bool eval_f1 = false);

double evaluate_checkpoint_entropy(nets::Classifier& classifier, const DomainDataset& target,
                                   double tile_fraction = 1.0);

/// Record with the minimal mean entropy; ties break toward the later epoch.
const CheckpointRecord& select_parameters(const std::vector<CheckpointRecord>& history);

/// {selected_epoch, mean_entropy, per_epoch: [...]}
std::string selection_report_json(const std::vector<CheckpointRecord>& history,
                                  const CheckpointRecord& selected);

}  // namespace aada
