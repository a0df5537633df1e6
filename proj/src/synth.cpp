#include <algorithm>
#include <cmath>

#include "aada/data.hpp"
#include "aada/errors.hpp"
#include "aada/evaluation.hpp"

namespace aada {

// Scene classes, in label order: sealed ground (with road stripes), building
// (rotated rectangles, tall), low vegetation (soft blobs, near-ground), high
// vegetation (textured crown clusters, mid height), vehicle (small rare
// rectangles on ground). class_count in [3,5] keeps a prefix of this scheme.

namespace {

struct ClassStyle {
    std::array<double, 3> color;
    double tex_amp;
    std::array<double, 3> shift_dir;  // palette drift under class_color_shift
};

const ClassStyle kStyles[5] = {
    {{0.45, 0.44, 0.42}, 0.06, {0.02, 0.02, 0.06}},    // ground
    {{0.56, 0.27, 0.22}, 0.08, {-0.12, 0.05, 0.10}},   // building
    {{0.34, 0.55, 0.24}, 0.10, {0.20, 0.02, -0.10}},   // low vegetation
    {{0.12, 0.36, 0.15}, 0.20, {0.26, -0.06, -0.07}},  // high vegetation
    {{0.70, 0.70, 0.75}, 0.05, {-0.05, -0.05, 0.02}},  // vehicle
};

struct TileBuf {
    int size;
    std::vector<int> label;
    std::vector<double> color;  // 3 planes
    std::vector<double> height;

    explicit TileBuf(int s)
        : size(s),
          label(static_cast<size_t>(s) * s, 0),
          color(static_cast<size_t>(s) * s * 3, 0.0),
          height(static_cast<size_t>(s) * s, 0.0) {}

    void set(int y, int x, int cls, const std::array<double, 3>& col, double h) {
        const int64_t i = static_cast<int64_t>(y) * size + x;
        label[static_cast<size_t>(i)] = cls;
        for (int c = 0; c < 3; ++c)
            color[static_cast<size_t>(c * size) * size + i] = col[static_cast<size_t>(c)];
        height[static_cast<size_t>(i)] = h;
    }
};

void paint_rot_rect(TileBuf& buf, double cy, double cx, double hh, double hw, double angle,
                    int cls, const std::array<double, 3>& col, double h) {
    const double ct = std::cos(angle), st = std::sin(angle);
    const double ext = std::hypot(hh, hw);
    const int y0 = std::max(0, static_cast<int>(cy - ext)), y1 = std::min(buf.size - 1, static_cast<int>(cy + ext));
    const int x0 = std::max(0, static_cast<int>(cx - ext)), x1 = std::min(buf.size - 1, static_cast<int>(cx + ext));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            const double ry = ct * dy + st * dx;
            const double rx = -st * dy + ct * dx;
            if (std::abs(ry) <= hh && std::abs(rx) <= hw) buf.set(y, x, cls, col, h);
        }
}

void paint_disc(TileBuf& buf, double cy, double cx, double r, int cls,
                const std::array<double, 3>& col, double h, bool dome) {
    const int y0 = std::max(0, static_cast<int>(cy - r)), y1 = std::min(buf.size - 1, static_cast<int>(cy + r));
    const int x0 = std::max(0, static_cast<int>(cx - r)), x1 = std::min(buf.size - 1, static_cast<int>(cx + r));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            if (d > r) continue;
            const double hh = dome ? h * std::sqrt(std::max(0.0, 1.0 - (d / r) * (d / r))) : h;
            buf.set(y, x, cls, col, hh);
        }
}

struct DomainAppearance {
    std::array<std::array<double, 3>, 5> palette;
    std::array<double, 5> tex_amp;
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
    double height_gain = 1.0;
};

DomainAppearance source_appearance() {
    DomainAppearance ap;
    for (int c = 0; c < 5; ++c) {
        ap.palette[c] = kStyles[c].color;
        ap.tex_amp[c] = kStyles[c].tex_amp;
    }
    return ap;
}

DomainAppearance target_appearance(const SynthShiftConfig& cfg) {
    DomainAppearance ap = source_appearance();
    for (int c = 0; c < 5; ++c) {
        for (int k = 0; k < 3; ++k)
            ap.palette[c][k] += cfg.class_color_shift * kStyles[c].shift_dir[k];
        ap.tex_amp[c] *= 1.0 + cfg.texture_shift;
    }
    ap.gain = cfg.channel_gain;
    ap.offset = cfg.channel_offset;
    ap.height_gain = cfg.height_gain;
    return ap;
}

double freq_scale(const SynthShiftConfig& cfg, bool shifted, int cls) {
    if (!shifted || cfg.class_frequency_scale.empty()) return 1.0;
    if (cls >= static_cast<int>(cfg.class_frequency_scale.size())) return 1.0;
    return cfg.class_frequency_scale[static_cast<size_t>(cls)];
}

RasterSample render_tile(const SynthShiftConfig& cfg, const DomainAppearance& ap,
                         bool shifted, const std::string& domain_id, double gsd,
                         RngStream& rng) {
    const int s = cfg.tile_size;
    TileBuf buf(s);

    // ground with road stripes (still class 0, different tone)
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) buf.set(y, x, 0, ap.palette[0], 0.0);
    const int roads = rng.uniform_int(1, 2);
    for (int r = 0; r < roads; ++r) {
        const double angle = rng.uniform(0.0, M_PI);
        const double off = rng.uniform(0.2, 0.8) * s;
        const double halfw = rng.uniform(5.0, 10.0);
        auto col = ap.palette[0];
        for (auto& v : col) v *= 0.75;
        const double nx = std::cos(angle), ny = std::sin(angle);
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x)
                if (std::abs(nx * x + ny * y - off) <= halfw) buf.set(y, x, 0, col, 0.0);
    }

    // low vegetation blobs
    if (cfg.class_count >= 3) {
        const int blobs = static_cast<int>(std::lround(9 * freq_scale(cfg, shifted, 2)));
        for (int b = 0; b < blobs; ++b) {
            const double cy = rng.uniform(0.0, s), cx = rng.uniform(0.0, s);
            const int parts = rng.uniform_int(3, 6);
            auto col = ap.palette[2];
            const double jitter = rng.uniform(-0.04, 0.04);
            for (auto& v : col) v += jitter;
            for (int q = 0; q < parts; ++q) {
                const double r = rng.uniform(14.0, 38.0);
                const double py = cy + rng.uniform(-25.0, 25.0);
                const double px = cx + rng.uniform(-25.0, 25.0);
                paint_disc(buf, py, px, r, 2, col, rng.uniform(0.1, 0.8), false);
            }
        }
    }

    // buildings
    {
        const int count = static_cast<int>(std::lround(13 * freq_scale(cfg, shifted, 1)));
        for (int b = 0; b < count; ++b) {
            const double cy = rng.uniform(0.05, 0.95) * s, cx = rng.uniform(0.05, 0.95) * s;
            const double hh = rng.uniform(8.0, 24.0), hw = rng.uniform(10.0, 32.0);
            const double angle = rng.uniform(0.0, M_PI);
            auto col = ap.palette[1];
            const double jitter = rng.uniform(-0.05, 0.05);
            for (auto& v : col) v += jitter;
            paint_rot_rect(buf, cy, cx, hh, hw, angle, 1, col, rng.uniform(6.0, 25.0));
        }
    }

    // high vegetation crown clusters
    if (cfg.class_count >= 4) {
        const int clusters = static_cast<int>(std::lround(11 * freq_scale(cfg, shifted, 3)));
        for (int b = 0; b < clusters; ++b) {
            const double cy = rng.uniform(0.0, s), cx = rng.uniform(0.0, s);
            const int crowns = rng.uniform_int(3, 8);
            for (int q = 0; q < crowns; ++q) {
                const double r = rng.uniform(6.0, 14.0);
                const double py = cy + rng.uniform(-22.0, 22.0);
                const double px = cx + rng.uniform(-22.0, 22.0);
                paint_disc(buf, py, px, r, 3, ap.palette[3], rng.uniform(5.0, 18.0), true);
            }
        }
    }

    // vehicles, kept rare; placed on ground so they are not buried
    if (cfg.class_count >= 5) {
        const double veh_area = 20.0 * 9.0;
        const int count = static_cast<int>(std::lround(
            cfg.rare_class_frequency * s * s / veh_area * freq_scale(cfg, shifted, 4)));
        for (int b = 0; b < count; ++b) {
            double cy = 0.0, cx = 0.0;
            for (int attempt = 0; attempt < 20; ++attempt) {
                cy = rng.uniform(0.03, 0.97) * s;
                cx = rng.uniform(0.03, 0.97) * s;
                if (buf.label[static_cast<size_t>(static_cast<int64_t>(cy) * s +
                                                  static_cast<int64_t>(cx))] == 0)
                    break;
            }
            std::array<double, 3> col{rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9),
                                      rng.uniform(0.3, 0.9)};
            for (int k = 0; k < 3; ++k)
                col[k] = 0.5 * col[k] + 0.5 * ap.palette[4][k];
            paint_rot_rect(buf, cy, cx, 4.5, 10.0, rng.uniform(0.0, M_PI), 4, col, 1.6);
        }
    }

    // low-frequency illumination + texture + radiometric transform
    const double ill_angle = rng.uniform(0.0, 2.0 * M_PI);
    const double ill_freq = rng.uniform(0.5, 2.0) * 2.0 * M_PI / s;
    const double ill_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double ny = std::sin(ill_angle), nx = std::cos(ill_angle);

    RasterSample out;
    out.gsd = gsd;
    out.domain_id = domain_id;
    out.channels = Tensor({4, s, s});
    out.labels = LabelMap(s, s);
    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            const int64_t i = static_cast<int64_t>(y) * s + x;
            const int cls = buf.label[static_cast<size_t>(i)];
            out.labels.v[static_cast<size_t>(i)] = cls;
            const double ill = 1.0 + 0.08 * std::sin(ill_freq * (nx * x + ny * y) + ill_phase);
            const double shared = rng.uniform(-1.0, 1.0);
            const double amp = ap.tex_amp[cls];
            for (int c = 0; c < 3; ++c) {
                const double own = rng.uniform(-1.0, 1.0);
                double v = buf.color[static_cast<size_t>(c * s) * s + i];
                v *= ill * (1.0 + amp * (0.7 * shared + 0.3 * own));
                v = ap.gain[c] * v + ap.offset[c];
                out.channels[static_cast<int64_t>(c) * s * s + i] = std::max(0.0, v);
            }
            const double hnoise = rng.uniform(-0.05, 0.05);
            out.channels[static_cast<int64_t>(3) * s * s + i] =
                std::max(0.0, buf.height[static_cast<size_t>(i)] * ap.height_gain + hnoise);
        }
    }
    return out;
}

std::vector<double> label_histogram(const DomainDataset& ds) {
    std::vector<double> hist(static_cast<size_t>(ds.class_count), 0.0);
    double total = 0.0;
    for (const auto& s : ds.samples)
        for (int v : s.labels.v)
            if (v != kIgnoreLabel) {
                hist[static_cast<size_t>(v)] += 1.0;
                total += 1.0;
            }
    for (auto& h : hist) h /= total;
    return hist;
}

}  // namespace

void SynthShiftConfig::validate() const {
    if (class_count < 3 || class_count > 5)
        throw ConfigError("synth: class_count must be in [3,5]");
    if (tile_size < 64) throw ConfigError("synth: tile_size too small");
    if (tiles_per_domain < 1) throw ConfigError("synth: tiles_per_domain must be >= 1");
    if (source_gsd <= 0.0 || target_gsd <= 0.0) throw ConfigError("synth: gsd must be positive");
}

SynthPair synth_domain_pair(const SynthShiftConfig& cfg, RngStream& rng) {
    cfg.validate();
    auto rng_src = rng.fork(1);
    auto rng_tgt = rng.fork(2);

    SynthPair pair;
    pair.source.class_count = cfg.class_count;
    pair.source.height_channel = 3;
    pair.target.class_count = cfg.class_count;
    pair.target.height_channel = 3;
    pair.target.labels_eval_only = true;

    const auto src_ap = source_appearance();
    const auto tgt_ap = target_appearance(cfg);
    for (int t = 0; t < cfg.tiles_per_domain; ++t) {
        pair.source.samples.push_back(
            render_tile(cfg, src_ap, false, "source", cfg.source_gsd, rng_src));
        pair.target.samples.push_back(
            render_tile(cfg, tgt_ap, true, "target", cfg.target_gsd, rng_tgt));
    }

    pair.source_label_hist = label_histogram(pair.source);
    pair.target_label_hist = label_histogram(pair.target);
    pair.label_jsd = js_divergence(pair.source_label_hist, pair.target_label_hist);
    return pair;
}

SynthShiftConfig synth_preset(const std::string& name) {
    SynthShiftConfig cfg;
    if (name == "none") return cfg;
    if (name == "radiometric") {
        cfg.channel_gain = {0.75, 1.2, 0.9};
        cfg.channel_offset = {0.05, -0.04, 0.06};
        cfg.class_color_shift = 0.85;
        cfg.texture_shift = 0.9;
        cfg.height_gain = 1.3;
        return cfg;
    }
    if (name == "skewed") {
        cfg = synth_preset("radiometric");
        cfg.class_frequency_scale = {1.0, 0.3, 2.6, 2.2, 1.0};
        return cfg;
    }
    throw ConfigError("synth: unknown shift preset '" + name + "'");
}

}  // namespace aada
