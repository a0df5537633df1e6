#include "aada/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace aada {
namespace nets {

int scaled_width(int base, double multiplier) {
    if (multiplier >= 1.0) return base;
    return std::max(8, static_cast<int>(std::lround(base * multiplier)));
}

Var XceptionDown::forward(const Var& x, const FwdCtx& ctx) {
    auto h = nn::relu(bn1.forward(sep1.forward(x), ctx));
    h = bn2.forward(sep2.forward(h), ctx);
    h = nn::maxpool2d(h, 3, 2, 1);
    auto s = skip_bn.forward(skip.forward(x), ctx);
    return nn::add(h, s);
}

void XceptionDown::collect(ParamSet& ps, const std::string& p) {
    sep1.collect(ps, p + ".sep1");
    sep2.collect(ps, p + ".sep2");
    bn1.collect(ps, p + ".bn1");
    bn2.collect(ps, p + ".bn2");
    skip.collect(ps, p + ".skip");
    skip_bn.collect(ps, p + ".skip_bn");
}

Var XceptionMid::forward(const Var& x, const FwdCtx& ctx) {
    auto h = bn1.forward(sep1.forward(nn::relu(x)), ctx);
    h = bn2.forward(sep2.forward(nn::relu(h)), ctx);
    h = bn3.forward(sep3.forward(nn::relu(h)), ctx);
    return nn::add(x, h);
}

void XceptionMid::collect(ParamSet& ps, const std::string& p) {
    sep1.collect(ps, p + ".sep1");
    sep2.collect(ps, p + ".sep2");
    sep3.collect(ps, p + ".sep3");
    bn1.collect(ps, p + ".bn1");
    bn2.collect(ps, p + ".bn2");
    bn3.collect(ps, p + ".bn3");
}

Classifier::Classifier(const ClassifierSpec& spec, RngStream& rng) : spec_(spec) {
    if (spec.class_count < 2) throw std::invalid_argument("classifier: class_count < 2");
    if (spec.width_multiplier <= 0.0 || spec.width_multiplier > 1.0)
        throw std::invalid_argument("classifier: width_multiplier outside (0,1]");
    const double m = spec.width_multiplier;
    const int c32 = scaled_width(32, m), c64 = scaled_width(64, m);
    const int c128 = scaled_width(128, m), c256 = scaled_width(256, m);
    const int c728 = scaled_width(728, m), c1024 = scaled_width(1024, m);
    const int c1536 = scaled_width(1536, m), c2048 = scaled_width(2048, m);
    const int d256 = scaled_width(256, m), d128 = scaled_width(128, m);
    const int d64 = scaled_width(64, m), d32 = scaled_width(32, m), d16 = scaled_width(16, m);

    stem_a_ = Conv2d(spec.input_channels, c32, 3, 2, 1, rng);
    stem_a_bn_ = BatchNorm2d(c32);
    stem_b_ = Conv2d(c32, c64, 3, 1, 1, rng);
    stem_b_bn_ = BatchNorm2d(c64);
    down4_ = XceptionDown(c64, c128, rng);
    down5_ = XceptionDown(c128, c256, rng);
    mid_entry_ = XceptionDown(c256, c728, rng);
    for (int i = 1; i < spec.mid_blocks; ++i) mid_.emplace_back(c728, rng);
    down16_ = XceptionDown(c728, c1024, rng);
    exit17_ = SepConv(c1024, c1536, rng);
    exit17_bn_ = BatchNorm2d(c1536);
    exit18_ = SepConv(c1536, c2048, rng);
    exit18_bn_ = BatchNorm2d(c2048);

    dec1a_ = Conv2d(c2048 + c728, d256, 3, 1, 1, rng);
    dec1b_ = Conv2d(d256, d256, 3, 1, 1, rng);
    dec2a_ = Conv2d(d256 + c256, d128, 3, 1, 1, rng);
    dec2b_ = Conv2d(d128, d128, 3, 1, 1, rng);
    dec3a_ = Conv2d(d128 + c128, d64, 3, 1, 1, rng);
    dec3b_ = Conv2d(d64, d64, 3, 1, 1, rng);
    dec4a_ = Conv2d(d64 + c64, d32, 3, 1, 1, rng);
    dec4b_ = Conv2d(d32, d32, 3, 1, 1, rng);
    dec5a_ = Conv2d(d32, d16, 3, 1, 1, rng);
    dec5b_ = Conv2d(d16, d16, 3, 1, 1, rng);
    head_ = Conv2d(d16, spec.class_count, 1, 1, 0, rng);
}

Var Classifier::forward(const Var& x, const FwdCtx& ctx) {
    const auto& s = x->value.shape();
    if (s[2] % 32 != 0 || s[3] % 32 != 0)
        throw std::invalid_argument("classifier: input size must be divisible by 32");
    if (s[1] != spec_.input_channels)
        throw std::invalid_argument("classifier: channel count mismatch");

    auto h = nn::relu(stem_a_bn_.forward(stem_a_.forward(x), ctx));      // 1/2
    auto skip3 = nn::relu(stem_b_bn_.forward(stem_b_.forward(h), ctx));  // 1/2
    auto skip4 = down4_.forward(skip3, ctx);                             // 1/4
    auto skip5 = down5_.forward(skip4, ctx);                             // 1/8
    auto m0 = mid_entry_.forward(skip5, ctx);                            // 1/16
    auto skip15 = m0;
    for (auto& blk : mid_) skip15 = blk.forward(skip15, ctx);
    auto e = down16_.forward(skip15, ctx);                               // 1/32
    e = nn::relu(exit17_bn_.forward(exit17_.forward(e), ctx));
    e = exit18_bn_.forward(exit18_.forward(e), ctx);

    auto d = nn::concat_channels(nn::upsample_nearest2(e), skip15);      // 1/16
    d = nn::relu(dec1a_.forward(d));
    d = nn::relu(dec1b_.forward(d));
    d = nn::concat_channels(nn::upsample_nearest2(d), skip5);            // 1/8
    d = nn::relu(dec2a_.forward(d));
    d = nn::relu(dec2b_.forward(d));
    d = nn::concat_channels(nn::upsample_nearest2(d), skip4);            // 1/4
    d = nn::relu(dec3a_.forward(d));
    d = nn::relu(dec3b_.forward(d));
    d = nn::concat_channels(nn::upsample_nearest2(d), skip3);            // 1/2
    d = nn::relu(dec4a_.forward(d));
    d = nn::relu(dec4b_.forward(d));
    d = nn::upsample_nearest2(d);                                        // 1/1
    d = nn::relu(dec5a_.forward(d));
    d = nn::relu(dec5b_.forward(d));
    return nn::softmax_channels(head_.forward(d));
}

void Classifier::collect(ParamSet& ps, const std::string& p) {
    stem_a_.collect(ps, p + ".stem_a");
    stem_a_bn_.collect(ps, p + ".stem_a_bn");
    stem_b_.collect(ps, p + ".stem_b");
    stem_b_bn_.collect(ps, p + ".stem_b_bn");
    down4_.collect(ps, p + ".down4");
    down5_.collect(ps, p + ".down5");
    mid_entry_.collect(ps, p + ".mid0");
    for (size_t i = 0; i < mid_.size(); ++i)
        mid_[i].collect(ps, p + ".mid" + std::to_string(i + 1));
    down16_.collect(ps, p + ".down16");
    exit17_.collect(ps, p + ".exit17");
    exit17_bn_.collect(ps, p + ".exit17_bn");
    exit18_.collect(ps, p + ".exit18");
    exit18_bn_.collect(ps, p + ".exit18_bn");
    dec1a_.collect(ps, p + ".dec1a");
    dec1b_.collect(ps, p + ".dec1b");
    dec2a_.collect(ps, p + ".dec2a");
    dec2b_.collect(ps, p + ".dec2b");
    dec3a_.collect(ps, p + ".dec3a");
    dec3b_.collect(ps, p + ".dec3b");
    dec4a_.collect(ps, p + ".dec4a");
    dec4b_.collect(ps, p + ".dec4b");
    dec5a_.collect(ps, p + ".dec5a");
    dec5b_.collect(ps, p + ".dec5b");
    head_.collect(ps, p + ".head");
}

Adapter::Adapter(const AdapterSpec& spec, RngStream& rng) : spec_(spec) {
    if (spec.base_width % 4 != 0)
        throw std::invalid_argument("adapter: base_width must be divisible by 4");
    const int w = spec.base_width;
    const int bottleneck = w / 4;
    stem_ = Conv2d(spec.input_channels, w, 6, 4, 1, rng);
    stem_bn_ = BatchNorm2d(w);
    for (int i = 0; i < spec.residual_blocks; ++i)
        blocks_.push_back({Conv2d(w, bottleneck, 3, 1, 1, rng),
                           Conv2d(bottleneck, w, 3, 1, 1, rng)});
    up1_ = ConvTranspose2d(w, w / 2, 4, 2, 1, rng);
    up1_bn_ = BatchNorm2d(w / 2);
    up2_ = ConvTranspose2d(w / 2, spec.input_channels, 4, 2, 1, rng);
}

Var Adapter::forward(const Var& x, const FwdCtx& ctx) {
    const auto& s = x->value.shape();
    if (s[2] % 4 != 0 || s[3] % 4 != 0)
        throw std::invalid_argument("adapter: input size must be divisible by 4");
    auto h = stem_bn_.forward(nn::relu(stem_.forward(x)), ctx);
    for (auto& blk : blocks_) {
        auto r = nn::relu(blk.reduce.forward(h));
        r = nn::relu(blk.expand.forward(r));
        h = nn::add(h, r);
    }
    h = nn::relu(up1_bn_.forward(up1_.forward(h), ctx));
    return up2_.forward(h);  // linear output, range unconstrained
}

void Adapter::collect(ParamSet& ps, const std::string& p) {
    stem_.collect(ps, p + ".stem");
    stem_bn_.collect(ps, p + ".stem_bn");
    for (size_t i = 0; i < blocks_.size(); ++i) {
        blocks_[i].reduce.collect(ps, p + ".block" + std::to_string(i) + ".reduce");
        blocks_[i].expand.collect(ps, p + ".block" + std::to_string(i) + ".expand");
    }
    up1_.collect(ps, p + ".up1");
    up1_bn_.collect(ps, p + ".up1_bn");
    up2_.collect(ps, p + ".up2");
}

Discriminator::Discriminator(const DiscriminatorSpec& spec, RngStream& rng) : spec_(spec) {
    const int w = spec.width;
    in_ = Conv2d(spec.input_channels, w, 4, 2, 0, rng);
    sn3_ = SpectralConv2d(w, 2 * w, 4, 2, 0, rng);
    sn4_ = SpectralConv2d(2 * w, 4 * w, 4, 2, 0, rng);
    sn5_ = SpectralConv2d(4 * w, 8 * w, 4, 1, 0, rng);
    sn6_ = SpectralConv2d(8 * w, 1, 4, 1, 0, rng);
}

Var Discriminator::forward(const Var& x, const FwdCtx& ctx) {
    const auto& s = x->value.shape();
    if (s[2] < kReceptiveField || s[3] < kReceptiveField)
        throw std::invalid_argument("discriminator: input below the 70x70 receptive field");
    const bool update = ctx.training;
    auto h = nn::leaky_relu(in_.forward(x), 0.1);
    h = nn::leaky_relu(sn3_.forward(h, update), 0.1);
    h = nn::leaky_relu(sn4_.forward(h, update), 0.1);
    h = nn::leaky_relu(sn5_.forward(h, update), 0.1);
    return nn::sigmoid(sn6_.forward(h, update));
}

void Discriminator::collect(ParamSet& ps, const std::string& p) {
    in_.collect(ps, p + ".in");
    sn3_.collect(ps, p + ".sn3");
    sn4_.collect(ps, p + ".sn4");
    sn5_.collect(ps, p + ".sn5");
    sn6_.collect(ps, p + ".sn6");
}

}  // namespace nets

nets::Classifier build_classifier(const ClassifierSpec& spec, RngStream& rng) {
    return nets::Classifier(spec, rng);
}
nets::Adapter build_adapter(const AdapterSpec& spec, RngStream& rng) {
    return nets::Adapter(spec, rng);
}
nets::Discriminator build_discriminator(const DiscriminatorSpec& spec, RngStream& rng) {
    return nets::Discriminator(spec, rng);
}

}  // namespace aada
