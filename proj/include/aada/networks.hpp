#pragma once

#include <memory>
#include <vector>

#include "aada/layers.hpp"

namespace aada {

struct ClassifierSpec {
    int input_channels = 4;
    int class_count = 5;
    double width_multiplier = 1.0;  // scales every channel width, floor of 8
    int mid_blocks = 10;            // repeated encoder blocks at 1/16 resolution
    bool pretrained_backbone = false;
};

struct AdapterSpec {
    int input_channels = 4;
    int residual_blocks = 16;
    int base_width = 256;  // block output width; the bottleneck is a quarter of it
};

struct DiscriminatorSpec {
    int input_channels = 4;
    int width = 64;  // first-layer filter count; deeper layers double it
};

namespace nets {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::DepthwiseConv2d;
using nn::FwdCtx;
using nn::ParamSet;
using nn::SpectralConv2d;
using nn::Var;

/// depthwise 3x3 followed by pointwise 1x1, the separable unit of the encoder
struct SepConv {
    DepthwiseConv2d dw;
    Conv2d pw;

    SepConv() = default;
    SepConv(int cin, int cout, RngStream& rng)
        : dw(cin, 3, 1, 1, rng), pw(cin, cout, 1, 1, 0, rng) {}
    Var forward(const Var& x) const { return pw.forward(dw.forward(x)); }
    void collect(ParamSet& ps, const std::string& p) const {
        dw.collect(ps, p + ".dw");
        pw.collect(ps, p + ".pw");
    }
};

/// downsampling encoder block: two separable convolutions, max-pooling, and
/// a strided 1x1 projection shortcut
struct XceptionDown {
    SepConv sep1, sep2;
    BatchNorm2d bn1, bn2;
    Conv2d skip;
    BatchNorm2d skip_bn;

    XceptionDown() = default;
    XceptionDown(int cin, int cout, RngStream& rng)
        : sep1(cin, cout, rng),
          sep2(cout, cout, rng),
          bn1(cout),
          bn2(cout),
          skip(cin, cout, 1, 2, 0, rng),
          skip_bn(cout) {}
    Var forward(const Var& x, const FwdCtx& ctx);
    void collect(ParamSet& ps, const std::string& p);
};

/// resolution-preserving encoder block with identity shortcut
struct XceptionMid {
    SepConv sep1, sep2, sep3;
    BatchNorm2d bn1, bn2, bn3;

    XceptionMid() = default;
    XceptionMid(int c, RngStream& rng)
        : sep1(c, c, rng), sep2(c, c, rng), sep3(c, c, rng), bn1(c), bn2(c), bn3(c) {}
    Var forward(const Var& x, const FwdCtx& ctx);
    void collect(ParamSet& ps, const std::string& p);
};

/// Encoder-decoder pixel classifier. The encoder downsamples to 1/32 through
/// separable-convolution blocks; the decoder upsamples with nearest-neighbour
/// interpolation and concatenates the encoder skips. Output is a softmax
/// probability map of the input's spatial size.
class Classifier {
public:
    Classifier(const ClassifierSpec& spec, RngStream& rng);

    /// input {B,N,H,W} with H,W divisible by 32 -> probabilities {B,l,H,W}
    Var forward(const Var& x, const FwdCtx& ctx);

    void collect(ParamSet& ps, const std::string& p = "C");
    const ClassifierSpec& spec() const { return spec_; }

private:
    ClassifierSpec spec_;
    Conv2d stem_a_, stem_b_;
    BatchNorm2d stem_a_bn_, stem_b_bn_;
    XceptionDown down4_, down5_, mid_entry_, down16_;
    std::vector<XceptionMid> mid_;
    SepConv exit17_, exit18_;
    BatchNorm2d exit17_bn_, exit18_bn_;
    Conv2d dec1a_, dec1b_, dec2a_, dec2b_, dec3a_, dec3b_, dec4a_, dec4b_, dec5a_, dec5b_;
    Conv2d head_;
};

/// Residual appearance adapter: stride-4 stem, bottlenecked residual blocks
/// at quarter resolution, two stride-2 transposed convolutions back to full
/// resolution, linear output of the input's shape.
class Adapter {
public:
    Adapter(const AdapterSpec& spec, RngStream& rng);

    /// input {B,N,H,W} with H,W divisible by 4 -> same shape, unbounded values
    Var forward(const Var& x, const FwdCtx& ctx);

    void collect(ParamSet& ps, const std::string& p = "A");
    const AdapterSpec& spec() const { return spec_; }

private:
    AdapterSpec spec_;
    Conv2d stem_;
    BatchNorm2d stem_bn_;
    struct Block {
        Conv2d reduce, expand;
    };
    std::vector<Block> blocks_;
    ConvTranspose2d up1_, up2_;
    BatchNorm2d up1_bn_;
};

/// Patch discriminator: five valid-padded strided convolutions with spectral
/// normalization from the second layer on; every sigmoid output cell judges a
/// 70x70 window of the input.
class Discriminator {
public:
    Discriminator(const DiscriminatorSpec& spec, RngStream& rng);

    /// input {B,N,H,W}, H,W >= 70 -> probabilities {B,1,H',W'} in (0,1)
    Var forward(const Var& x, const FwdCtx& ctx);

    void collect(ParamSet& ps, const std::string& p = "D");
    const DiscriminatorSpec& spec() const { return spec_; }

    static constexpr int kReceptiveField = 70;
    static constexpr int kOutputStride = 8;

private:
    DiscriminatorSpec spec_;
    Conv2d in_;
    SpectralConv2d sn3_, sn4_, sn5_, sn6_;
};

int scaled_width(int base, double multiplier);

}  // namespace nets

/// The three trainable networks plus the epoch counter; the unit of
/// checkpointing together with optimizer state and normalization statistics.
struct ModelBundle {
    std::unique_ptr<nets::Classifier> classifier;
    std::unique_ptr<nets::Adapter> adapter;
    std::unique_ptr<nets::Discriminator> discriminator;
    int epoch = 0;
};

nets::Classifier build_classifier(const ClassifierSpec& spec, RngStream& rng);
nets::Adapter build_adapter(const AdapterSpec& spec, RngStream& rng);
nets::Discriminator build_discriminator(const DiscriminatorSpec& spec, RngStream& rng);

}  // namespace aada
