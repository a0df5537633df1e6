#pragma once

#include <optional>
#include <string>

#include "aada/data.hpp"
#include "aada/networks.hpp"
#include "aada/optim.hpp"

namespace aada {

/// Everything a checkpoint carries besides parameters: the spec echo needed
/// to rebuild the networks, frozen normalization statistics and the working
/// resolution of the training run.
struct CheckpointMeta {
    int format = 1;
    int epoch = 0;
    ClassifierSpec classifier_spec;
    std::optional<AdapterSpec> adapter_spec;
    std::optional<DiscriminatorSpec> discriminator_spec;
    NormalizationStats source_stats;
    std::optional<NormalizationStats> target_stats;
    double working_gsd = 0.0;
    int class_count = 0;
};

struct OptimizerStates {
    SgdMomentum* sgd_c = nullptr;
    Adam* adam_a = nullptr;
    Adam* adam_d = nullptr;
};

/// Single-archive checkpoint: magic, JSON header (format, spec echo, stats,
/// tensor directory), then raw float64 tensors. Writes are atomic
/// (temp-then-rename).
void save_checkpoint(const std::string& path, ModelBundle& bundle, const CheckpointMeta& meta,
                     const OptimizerStates& opt = {});

struct LoadedCheckpoint {
    ModelBundle bundle;
    CheckpointMeta meta;
};

/// Reconstructs the networks from the spec echo and restores parameters,
/// buffers and (when present and requested) optimizer state.
LoadedCheckpoint load_checkpoint(const std::string& path, const OptimizerStates& opt = {});

/// Optional backbone hook: copies encoder tensors from an externally supplied
/// checkpoint into an already constructed classifier, matching by name and
/// shape. A stem trained for a different channel count is skipped and keeps
/// its random initialization. Returns the number of tensors adopted.
int load_backbone_weights(nets::Classifier& classifier, const std::string& path);

}  // namespace aada
