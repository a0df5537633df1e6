#pragma once

#include <array>
#include <string>
#include <vector>

#include "aada/random.hpp"
#include "aada/tensor.hpp"

namespace aada {

/// One multi-channel tile. Channels are {N,H,W}; an optional height channel
/// carries meters above ground. Labels may be empty for unlabelled samples.
struct RasterSample {
    Tensor channels;  // {N,H,W}
    LabelMap labels;
    double gsd = 0.0;  // meters per pixel
    std::string domain_id;

    int channel_count() const { return channels.dim(0); }
    int height() const { return channels.dim(1); }
    int width() const { return channels.dim(2); }
    void validate(int class_count) const;
};

/// Frozen per-domain channel statistics. The height channel is divided by a
/// constant instead of being standardized, expressed here as (mean 0, std 30).
struct NormalizationStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    int height_channel = -1;
};

inline constexpr double kHeightDivisor = 30.0;

struct DomainDataset {
    std::vector<RasterSample> samples;
    int class_count = 0;
    int height_channel = -1;
    NormalizationStats stats;
    bool normalized = false;
    bool labels_eval_only = false;  // target-domain labels: never for training

    bool empty() const { return samples.empty(); }
    int channels() const { return samples.empty() ? 0 : samples[0].channel_count(); }
    double gsd() const { return samples.empty() ? 0.0 : samples[0].gsd; }
    void validate() const;
};

/// Standardizes every non-height channel to zero mean / unit std with
/// statistics computed from the dataset itself; divides the height channel by
/// 30 m. Stats are recorded for reuse on later inputs of the same domain.
/// Zero-variance channels get std 1 with a warning on stderr.
DomainDataset normalize_dataset(DomainDataset dataset, int height_channel = -1);

/// Applies previously frozen statistics (inference-time path).
void apply_normalization(RasterSample& sample, const NormalizationStats& stats);

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);
LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w);

struct ResampleResult {
    DomainDataset source;
    DomainDataset target;
    double working_gsd = 0.0;
};

/// Brings both domains to the coarser of the two resolutions. The finer
/// domain's channels are downsampled (bilinear; labels nearest for the
/// source). Target labels are never resampled; if the target is resampled its
/// labels are dropped from the training copy.
ResampleResult resample_to_common_gsd(DomainDataset source, DomainDataset target);

struct AugmentConfig {
    double sigma = 0.1;    // radiometric jitter std
    int patch_size = 256;  // must be divisible by 32
    bool rotation = true;

    void validate() const;
};

/// Crops a randomly positioned, randomly rotated patch (bilinear channels,
/// nearest labels) and applies per-channel radiometric jitter: multiply by
/// N(1,sigma), add N(0,sigma). Labels are never altered radiometrically.
/// Rotations whose footprint exceeds the tile are retried up to 10 times,
/// then an axis-aligned crop is used. With rotation disabled and sigma 0 the
/// result is an exact crop.
RasterSample augment_patch(const RasterSample& sample, const AugmentConfig& cfg,
                           RngStream& rng);

struct Batch {
    Tensor images;                 // {B,N,h,w}
    std::vector<LabelMap> labels;  // size B; empty maps when unlabelled
};

Batch make_batch(const DomainDataset& dataset, int batch_size, const AugmentConfig& cfg,
                 RngStream& rng);

/// Configuration of the procedural two-domain scene generator. The target
/// domain is rendered with the configured appearance shift; its labels are
/// kept for evaluation only.
struct SynthShiftConfig {
    int class_count = 5;  // ground, building, low veg, high veg, vehicle
    int tiles_per_domain = 8;
    int tile_size = 512;
    double source_gsd = 0.2;
    double target_gsd = 0.2;
    double rare_class_frequency = 0.015;  // vehicle analog, < 2%

    // appearance shift applied to the target domain
    std::array<double, 3> channel_gain{1.0, 1.0, 1.0};
    std::array<double, 3> channel_offset{0.0, 0.0, 0.0};
    double class_color_shift = 0.0;  // strength of per-class palette changes
    double texture_shift = 0.0;      // relative texture amplitude change
    double height_gain = 1.0;

    // per-class multiplier on instance counts in the target (label skew)
    std::vector<double> class_frequency_scale;

    void validate() const;
};

struct SynthPair {
    DomainDataset source;
    DomainDataset target;
    std::vector<double> source_label_hist;
    std::vector<double> target_label_hist;
    double label_jsd = 0.0;
};

SynthPair synth_domain_pair(const SynthShiftConfig& cfg, RngStream& rng);

/// preset shift configurations used by the CLI and the experiment suites
SynthShiftConfig synth_preset(const std::string& name);  // none|radiometric|skewed

}  // namespace aada
