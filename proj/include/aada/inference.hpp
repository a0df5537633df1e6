#pragma once

#include <functional>

#include "aada/data.hpp"
#include "aada/tensor.hpp"

namespace aada {

/// Sliding-window inference plan. TTA averages scores over the four listed
/// variants: identity, horizontal flip, vertical flip, 180-degree rotation.
struct TilingPlan {
    int window = 256;
    int overlap = 128;
    bool tta = true;

    void validate() const;
};

/// Evaluation-mode forward pass: {1,N,h,w} -> probability maps {1,l,h,w}.
using ForwardFn = std::function<Tensor(const Tensor&)>;

struct Prediction {
    Tensor scores;   // {l,H,W}; per-pixel simplex
    LabelMap labels; // argmax, ties to the lowest class index
    Tensor counts;   // {H,W} accumulated contributions per pixel
};

/// Tiles the image with the plan's overlap (edge windows clamp to the
/// boundary), averages per-pixel scores over windows and TTA variants.
/// Images smaller than the window are reflection-padded then cropped back.
Prediction sliding_window_predict(const ForwardFn& forward, const RasterSample& image,
                                  int class_count, const TilingPlan& plan);

/// Bilinear upsampling of the class planes followed by per-pixel argmax.
/// factor <= 1 reduces to the identity path (argmax of the input).
LabelMap upsample_scores(const Tensor& scores, double factor);
LabelMap upsample_scores_to(const Tensor& scores, int out_h, int out_w);

LabelMap argmax_labels(const Tensor& scores);

}  // namespace aada
