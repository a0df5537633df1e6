#include "aada/inference.hpp"

#include <cmath>

#include "aada/errors.hpp"

namespace aada {

void TilingPlan::validate() const {
    if (window <= 0 || overlap < 0 || overlap >= window)
        throw ConfigError("tiling: need 0 <= overlap < window");
}

namespace {

std::vector<int> window_positions(int extent, int window, int step) {
    std::vector<int> pos;
    for (int x = 0; x + window <= extent; x += step) pos.push_back(x);
    if (pos.empty() || pos.back() + window < extent) pos.push_back(extent - window);
    return pos;
}

// variants: 0 identity, 1 hflip, 2 vflip, 3 rot180; all are involutions
Tensor transform(const Tensor& bchw, int variant) {
    if (variant == 0) return bchw;
    const int b = bchw.dim(0), c = bchw.dim(1), h = bchw.dim(2), w = bchw.dim(3);
    Tensor out(bchw.shape());
    const bool fh = variant == 2 || variant == 3;
    const bool fw = variant == 1 || variant == 3;
    for (int64_t bc = 0; bc < static_cast<int64_t>(b) * c; ++bc) {
        const double* src = bchw.data() + bc * h * w;
        double* dst = out.data() + bc * h * w;
        for (int i = 0; i < h; ++i) {
            const int si = fh ? h - 1 - i : i;
            for (int j = 0; j < w; ++j) {
                const int sj = fw ? w - 1 - j : j;
                dst[static_cast<int64_t>(i) * w + j] = src[static_cast<int64_t>(si) * w + sj];
            }
        }
    }
    return out;
}

Tensor pad_reflect(const Tensor& chw, int target_h, int target_w) {
    const int n = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({n, target_h, target_w});
    auto reflect = [](int i, int extent) {
        if (extent == 1) return 0;
        const int period = 2 * extent - 2;
        i %= period;
        if (i < 0) i += period;
        return i < extent ? i : period - i;
    };
    for (int c = 0; c < n; ++c) {
        const double* src = chw.data() + static_cast<int64_t>(c) * h * w;
        double* dst = out.data() + static_cast<int64_t>(c) * target_h * target_w;
        for (int i = 0; i < target_h; ++i) {
            const int si = reflect(i, h);
            for (int j = 0; j < target_w; ++j)
                dst[static_cast<int64_t>(i) * target_w + j] =
                    src[static_cast<int64_t>(si) * w + reflect(j, w)];
        }
    }
    return out;
}

}  // namespace

LabelMap argmax_labels(const Tensor& scores) {
    const int l = scores.dim(0), h = scores.dim(1), w = scores.dim(2);
    LabelMap out(h, w);
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int64_t p = 0; p < hw; ++p) {
        int best = 0;
        double best_v = scores[p];
        for (int c = 1; c < l; ++c) {
            const double v = scores[c * hw + p];
            if (v > best_v) {  // strict: ties keep the lowest class index
                best_v = v;
                best = c;
            }
        }
        out.v[static_cast<size_t>(p)] = best;
    }
    return out;
}

Prediction sliding_window_predict(const ForwardFn& forward, const RasterSample& image,
                                  int class_count, const TilingPlan& plan) {
    plan.validate();
    const int h = image.height(), w = image.width();
    const bool needs_pad = h < plan.window || w < plan.window;
    const Tensor padded = needs_pad
                              ? pad_reflect(image.channels, std::max(h, plan.window),
                                            std::max(w, plan.window))
                              : Tensor();
    const Tensor& chw = needs_pad ? padded : image.channels;
    const int ph = chw.dim(1), pw = chw.dim(2);
    const int n = chw.dim(0);

    Tensor acc({class_count, ph, pw});
    Tensor counts({ph, pw});
    const int step = plan.window - plan.overlap;
    const auto ys = window_positions(ph, plan.window, step);
    const auto xs = window_positions(pw, plan.window, step);
    const int variants = plan.tta ? 4 : 1;
    const int64_t whw = static_cast<int64_t>(plan.window) * plan.window;

    Tensor win({1, n, plan.window, plan.window});
    for (int y : ys) {
        for (int x : xs) {
            for (int c = 0; c < n; ++c)
                for (int i = 0; i < plan.window; ++i)
                    for (int j = 0; j < plan.window; ++j)
                        win[(static_cast<int64_t>(c) * plan.window + i) * plan.window + j] =
                            chw[(static_cast<int64_t>(c) * ph + y + i) * pw + x + j];
            for (int v = 0; v < variants; ++v) {
                Tensor scores = forward(transform(win, v));
                if (scores.dim(1) != class_count)
                    throw DataError("predict: class count mismatch");
                Tensor back = transform(scores, v);  // involution inverts itself
                for (int c = 0; c < class_count; ++c)
                    for (int i = 0; i < plan.window; ++i)
                        for (int j = 0; j < plan.window; ++j)
                            acc[(static_cast<int64_t>(c) * ph + y + i) * pw + x + j] +=
                                back[static_cast<int64_t>(c) * whw +
                                     static_cast<int64_t>(i) * plan.window + j];
                for (int i = 0; i < plan.window; ++i)
                    for (int j = 0; j < plan.window; ++j)
                        counts[static_cast<int64_t>(y + i) * pw + x + j] +=
                            v == variants - 1 ? 1.0 : 0.0;
            }
        }
    }

    Prediction pred;
    pred.scores = Tensor({class_count, h, w});
    pred.counts = Tensor({h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const double cnt = counts[static_cast<int64_t>(i) * pw + j];
            pred.counts[static_cast<int64_t>(i) * w + j] = cnt;
            for (int c = 0; c < class_count; ++c)
                pred.scores[(static_cast<int64_t>(c) * h + i) * w + j] =
                    acc[(static_cast<int64_t>(c) * ph + i) * pw + j] /
                    (cnt * variants);
        }
    pred.labels = argmax_labels(pred.scores);
    return pred;
}

LabelMap upsample_scores_to(const Tensor& scores, int out_h, int out_w) {
    if (scores.dim(1) == out_h && scores.dim(2) == out_w) return argmax_labels(scores);
    return argmax_labels(resize_bilinear(scores, out_h, out_w));
}

LabelMap upsample_scores(const Tensor& scores, double factor) {
    if (factor <= 1.0) return argmax_labels(scores);
    const int out_h = static_cast<int>(std::lround(scores.dim(1) * factor));
    const int out_w = static_cast<int>(std::lround(scores.dim(2) * factor));
    return upsample_scores_to(scores, out_h, out_w);
}

}  // namespace aada
