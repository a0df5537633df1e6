#include "aada/data.hpp"

#include <cmath>
#include <iostream>

#include "aada/errors.hpp"

namespace aada {

void RasterSample::validate(int class_count) const {
    if (channels.ndim() != 3) throw DataError("raster: channels must be {N,H,W}");
    if (gsd <= 0.0) throw DataError("raster: gsd must be positive");
    if (labels.empty()) return;
    if (labels.h != height() || labels.w != width())
        throw DataError("raster: channel/label size mismatch");
    for (int v : labels.v)
        if (v != kIgnoreLabel && (v < 0 || v >= class_count))
            throw DataError("raster: label out of range");
}

void DomainDataset::validate() const {
    if (samples.empty()) throw DataError("dataset: empty");
    const int n = samples[0].channel_count();
    for (const auto& s : samples) {
        if (s.channel_count() != n) throw DataError("dataset: inconsistent channel count");
        s.validate(class_count);
    }
}

DomainDataset normalize_dataset(DomainDataset dataset, int height_channel) {
    dataset.validate();
    if (dataset.normalized) throw DataError("dataset: already normalized");
    if (height_channel < 0) height_channel = dataset.height_channel;

    const int n = dataset.channels();
    NormalizationStats stats;
    stats.mean.assign(static_cast<size_t>(n), 0.0);
    stats.stddev.assign(static_cast<size_t>(n), 1.0);
    stats.height_channel = height_channel;

    for (int c = 0; c < n; ++c) {
        if (c == height_channel) {
            stats.mean[c] = 0.0;
            stats.stddev[c] = kHeightDivisor;
            continue;
        }
        double sum = 0.0;
        int64_t count = 0;
        for (const auto& s : dataset.samples) {
            const double* p = s.channels.data() + static_cast<int64_t>(c) * s.height() * s.width();
            const int64_t hw = static_cast<int64_t>(s.height()) * s.width();
            for (int64_t i = 0; i < hw; ++i) sum += p[i];
            count += hw;
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (const auto& s : dataset.samples) {
            const double* p = s.channels.data() + static_cast<int64_t>(c) * s.height() * s.width();
            const int64_t hw = static_cast<int64_t>(s.height()) * s.width();
            for (int64_t i = 0; i < hw; ++i) ss += (p[i] - mean) * (p[i] - mean);
        }
        double std = std::sqrt(ss / static_cast<double>(count));
        if (std <= 0.0) {
            std::cerr << "warning: channel " << c << " has zero variance; using std 1\n";
            std = 1.0;
        }
        stats.mean[c] = mean;
        stats.stddev[c] = std;
    }

    for (auto& s : dataset.samples) apply_normalization(s, stats);
    dataset.stats = stats;
    dataset.height_channel = height_channel;
    dataset.normalized = true;
    return dataset;
}

void apply_normalization(RasterSample& sample, const NormalizationStats& stats) {
    const int n = sample.channel_count();
    if (static_cast<int>(stats.mean.size()) != n)
        throw DataError("normalization: channel count mismatch");
    const int64_t hw = static_cast<int64_t>(sample.height()) * sample.width();
    for (int c = 0; c < n; ++c) {
        double* p = sample.channels.data() + static_cast<int64_t>(c) * hw;
        const double mean = stats.mean[c], inv = 1.0 / stats.stddev[c];
        for (int64_t i = 0; i < hw; ++i) p[i] = (p[i] - mean) * inv;
    }
}

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
    const int n = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({n, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int c = 0; c < n; ++c) {
        const double* src = chw.data() + static_cast<int64_t>(c) * h * w;
        double* dst = out.data() + static_cast<int64_t>(c) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            double fy = (i + 0.5) * sy - 0.5;
            fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(y0 + 1, h - 1);
            const double wy = fy - y0;
            for (int j = 0; j < out_w; ++j) {
                double fx = (j + 0.5) * sx - 0.5;
                fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(x0 + 1, w - 1);
                const double wx = fx - x0;
                const double v00 = src[static_cast<int64_t>(y0) * w + x0];
                const double v01 = src[static_cast<int64_t>(y0) * w + x1];
                const double v10 = src[static_cast<int64_t>(y1) * w + x0];
                const double v11 = src[static_cast<int64_t>(y1) * w + x1];
                dst[static_cast<int64_t>(i) * out_w + j] =
                    (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                    wy * ((1.0 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

LabelMap resize_nearest(const LabelMap& labels, int out_h, int out_w) {
    LabelMap out(out_h, out_w);
    const double sy = static_cast<double>(labels.h) / out_h;
    const double sx = static_cast<double>(labels.w) / out_w;
    for (int i = 0; i < out_h; ++i) {
        const int y = std::min(labels.h - 1, static_cast<int>((i + 0.5) * sy));
        for (int j = 0; j < out_w; ++j) {
            const int x = std::min(labels.w - 1, static_cast<int>((j + 0.5) * sx));
            out.at(i, j) = labels.at(y, x);
        }
    }
    return out;
}

ResampleResult resample_to_common_gsd(DomainDataset source, DomainDataset target) {
    if (source.gsd() <= 0.0 || target.gsd() <= 0.0)
        throw DataError("resample: non-positive gsd");
    const double gs = source.gsd(), gt = target.gsd();
    ResampleResult out;
    out.working_gsd = std::max(gs, gt);

    if (gt > gs) {
        // source goes to the target's coarser grid, labels included
        for (auto& s : source.samples) {
            const int oh = std::max(1, static_cast<int>(std::lround(s.height() * gs / gt)));
            const int ow = std::max(1, static_cast<int>(std::lround(s.width() * gs / gt)));
            s.channels = resize_bilinear(s.channels, oh, ow);
            if (!s.labels.empty()) s.labels = resize_nearest(s.labels, oh, ow);
            s.gsd = gt;
        }
    } else if (gt < gs) {
        // target channels to the source grid; target labels stay untouched at
        // the original resolution and are dropped from the training copy
        for (auto& s : target.samples) {
            const int oh = std::max(1, static_cast<int>(std::lround(s.height() * gt / gs)));
            const int ow = std::max(1, static_cast<int>(std::lround(s.width() * gt / gs)));
            s.channels = resize_bilinear(s.channels, oh, ow);
            s.labels = LabelMap();
            s.gsd = gs;
        }
    }
    out.source = std::move(source);
    out.target = std::move(target);
    return out;
}

void AugmentConfig::validate() const {
    if (sigma < 0.0) throw ConfigError("augment: sigma must be >= 0");
    if (patch_size <= 0 || patch_size % 32 != 0)
        throw ConfigError("augment: patch_size must be a positive multiple of 32");
}

namespace {

double sample_bilinear_clamped(const double* src, int h, int w, double fy, double fx) {
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
    const int y0 = static_cast<int>(fy);
    const int x0 = static_cast<int>(fx);
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double wy = fy - y0, wx = fx - x0;
    return (1.0 - wy) * ((1.0 - wx) * src[static_cast<int64_t>(y0) * w + x0] +
                         wx * src[static_cast<int64_t>(y0) * w + x1]) +
           wy * ((1.0 - wx) * src[static_cast<int64_t>(y1) * w + x0] +
                 wx * src[static_cast<int64_t>(y1) * w + x1]);
}

}  // namespace

RasterSample augment_patch(const RasterSample& sample, const AugmentConfig& cfg,
                           RngStream& rng) {
    cfg.validate();
    const int p = cfg.patch_size;
    const int h = sample.height(), w = sample.width();
    if (h < p || w < p) throw DataError("augment: sample smaller than patch");
    const int n = sample.channel_count();
    const bool labelled = !sample.labels.empty();

    RasterSample out;
    out.gsd = sample.gsd;
    out.domain_id = sample.domain_id;
    out.channels = Tensor({n, p, p});
    if (labelled) out.labels = LabelMap(p, p);

    bool rotated = false;
    double theta = 0.0, cy = 0.0, cx = 0.0;
    if (cfg.rotation) {
        for (int attempt = 0; attempt < 10; ++attempt) {
            const double t = rng.uniform(0.0, 2.0 * M_PI);
            const double half =
                0.5 * p * (std::abs(std::cos(t)) + std::abs(std::sin(t)));
            if (2.0 * half > h || 2.0 * half > w) continue;
            theta = t;
            cy = rng.uniform(half, h - half);
            cx = rng.uniform(half, w - half);
            rotated = true;
            break;
        }
    }

    if (rotated) {
        const double ct = std::cos(theta), st = std::sin(theta);
        const double off = 0.5 * (p - 1);
        for (int c = 0; c < n; ++c) {
            const double* src = sample.channels.data() + static_cast<int64_t>(c) * h * w;
            double* dst = out.channels.data() + static_cast<int64_t>(c) * p * p;
            for (int i = 0; i < p; ++i) {
                const double ry = i - off;
                for (int j = 0; j < p; ++j) {
                    const double rx = j - off;
                    const double fy = cy + ct * ry - st * rx;
                    const double fx = cx + st * ry + ct * rx;
                    dst[static_cast<int64_t>(i) * p + j] =
                        sample_bilinear_clamped(src, h, w, fy, fx);
                }
            }
        }
        if (labelled) {
            for (int i = 0; i < p; ++i) {
                const double ry = i - off;
                for (int j = 0; j < p; ++j) {
                    const double rx = j - off;
                    const int fy = std::clamp(
                        static_cast<int>(std::lround(cy + ct * ry - st * rx)), 0, h - 1);
                    const int fx = std::clamp(
                        static_cast<int>(std::lround(cx + st * ry + ct * rx)), 0, w - 1);
                    out.labels.at(i, j) = sample.labels.at(fy, fx);
                }
            }
        }
    } else {
        // axis-aligned exact crop (also the rotation-disabled path)
        const int oy = rng.uniform_int(0, h - p);
        const int ox = rng.uniform_int(0, w - p);
        for (int c = 0; c < n; ++c) {
            const double* src = sample.channels.data() + static_cast<int64_t>(c) * h * w;
            double* dst = out.channels.data() + static_cast<int64_t>(c) * p * p;
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j)
                    dst[static_cast<int64_t>(i) * p + j] =
                        src[static_cast<int64_t>(oy + i) * w + ox + j];
        }
        if (labelled)
            for (int i = 0; i < p; ++i)
                for (int j = 0; j < p; ++j) out.labels.at(i, j) = sample.labels.at(oy + i, ox + j);
    }

    if (cfg.sigma > 0.0) {
        for (int c = 0; c < n; ++c) {
            const double gain = rng.normal(1.0, cfg.sigma);
            const double offset = rng.normal(0.0, cfg.sigma);
            double* dst = out.channels.data() + static_cast<int64_t>(c) * p * p;
            for (int64_t i = 0; i < static_cast<int64_t>(p) * p; ++i)
                dst[i] = dst[i] * gain + offset;
        }
    }
    return out;
}

Batch make_batch(const DomainDataset& dataset, int batch_size, const AugmentConfig& cfg,
                 RngStream& rng) {
    if (batch_size < 1) throw ConfigError("make_batch: batch size must be >= 1");
    dataset.validate();

    Batch batch;
    batch.labels.reserve(static_cast<size_t>(batch_size));
    const int n = dataset.channels();
    const int p = cfg.patch_size;
    batch.images = Tensor({batch_size, n, p, p});
    for (int b = 0; b < batch_size; ++b) {
        const int idx = rng.uniform_int(0, static_cast<int>(dataset.samples.size()) - 1);
        RasterSample patch = augment_patch(dataset.samples[static_cast<size_t>(idx)], cfg, rng);
        std::copy(patch.channels.data(), patch.channels.data() + patch.channels.size(),
                  batch.images.data() + static_cast<int64_t>(b) * n * p * p);
        batch.labels.push_back(std::move(patch.labels));
    }
    return batch;
}

}  // namespace aada
