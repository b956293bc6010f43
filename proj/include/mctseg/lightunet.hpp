#pragma once

// Channel-compressed U-Net emitting three per-pixel logits, the per-channel
// sigmoid cross entropy on those logits, and label decoding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/image.hpp"
#include "mctseg/nn.hpp"

namespace mctseg {

struct UNetConfig {
    int in_channels = 1;
    int depth = 4;
    int base_width = 16;
    int max_width = 128;

    int width_at(int level) const { return std::min(base_width << level, max_width); }

    void validate() const {
        if (in_channels < 1) throw config_error("unet: in_channels must be >= 1");
        if (depth < 1 || depth > 8) throw config_error("unet: depth must lie in [1, 8]");
        if (base_width < 1 || max_width < base_width) {
            throw config_error("unet: need 1 <= base_width <= max_width");
        }
    }
};

/// 3x3 conv -> batch norm -> ReLU, keeping the activations needed for backward.
template <typename Scalar>
class ConvUnit {
public:
    ConvUnit() = default;
    ConvUnit(const std::string& name, int cin, int cout)
        : conv_(name + ".conv", cin, cout, 3, false), bn_(name + ".bn", cout) {}

    const nn::Tensor<Scalar>& forward(const nn::Tensor<Scalar>& x, bool training) {
        conv_.forward(x, z_);
        bn_.forward(z_, a_, training);
        nn::relu_inplace(a_);
        return a_;
    }

    /// `da` is consumed (overwritten).
    void backward(const nn::Tensor<Scalar>& x, nn::Tensor<Scalar>& da, nn::Tensor<Scalar>* dx) {
        nn::relu_backward_inplace(a_, da);
        bn_.backward(z_, da, dz_);
        conv_.backward(x, dz_, dx);
    }

    const nn::Tensor<Scalar>& output() const noexcept { return a_; }

    void init(std::uint64_t seed, std::uint64_t stream) {
        const double fan_in = conv_.in_channels() * 9.0;
        nn::init_uniform(conv_.weight(), std::sqrt(6.0 / fan_in), seed, stream);
    }

    void collect(std::vector<nn::Param<Scalar>*>& out) {
        for (auto* p : conv_.params()) out.push_back(p);
        for (auto* p : bn_.params()) out.push_back(p);
    }

private:
    nn::Conv2d<Scalar> conv_;
    nn::BatchNorm2d<Scalar> bn_;
    nn::Tensor<Scalar> z_, a_, dz_;
};

template <typename Scalar>
class DoubleConv {
public:
    DoubleConv() = default;
    DoubleConv(const std::string& name, int cin, int cout)
        : first_(name + ".0", cin, cout), second_(name + ".1", cout, cout) {}

    const nn::Tensor<Scalar>& forward(const nn::Tensor<Scalar>& x, bool training) {
        return second_.forward(first_.forward(x, training), training);
    }

    void backward(const nn::Tensor<Scalar>& x, nn::Tensor<Scalar>& dout, nn::Tensor<Scalar>* dx) {
        second_.backward(first_.output(), dout, &mid_);
        first_.backward(x, mid_, dx);
    }

    const nn::Tensor<Scalar>& output() const noexcept { return second_.output(); }

    void init(std::uint64_t seed, std::uint64_t stream) {
        first_.init(seed, stream);
        second_.init(seed, stream + 1);
    }

    void collect(std::vector<nn::Param<Scalar>*>& out) {
        first_.collect(out);
        second_.collect(out);
    }

private:
    ConvUnit<Scalar> first_, second_;
    nn::Tensor<Scalar> mid_;
};

/// Encoder level l: DoubleConv -> 2x2 max-pool. Decoder level l: nearest 2x
/// upsample -> ConvUnit -> concat with encoder level l -> DoubleConv. Head: 1x1
/// conv to three logits.
template <typename Scalar>
class LightUNet {
public:
    LightUNet() : LightUNet(UNetConfig{}) {}

    explicit LightUNet(const UNetConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        const int d = cfg_.depth;
        for (int l = 0; l < d; ++l) {
            const int cin = l == 0 ? cfg_.in_channels : cfg_.width_at(l - 1);
            enc_.emplace_back("unet.enc" + std::to_string(l), cin, cfg_.width_at(l));
        }
        bottleneck_ = DoubleConv<Scalar>("unet.bottleneck", cfg_.width_at(d - 1), cfg_.width_at(d));
        for (int l = 0; l < d; ++l) {
            up_.emplace_back("unet.up" + std::to_string(l), cfg_.width_at(l + 1), cfg_.width_at(l));
            dec_.emplace_back("unet.dec" + std::to_string(l), 2 * cfg_.width_at(l), cfg_.width_at(l));
        }
        head_ = nn::Conv2d<Scalar>("unet.head", cfg_.width_at(0), kNumClasses, 1, true);
        pooled_.resize(d);
        argmax_.resize(d);
        upsampled_.resize(d);
        cat_.resize(d);
        dskip_.resize(d);
    }

    const UNetConfig& config() const noexcept { return cfg_; }

    /// He-uniform hidden convolutions, 1/sqrt(fan_in) head, zero head bias.
    void initialize(std::uint64_t seed) {
        std::uint64_t stream = 0x2000;
        for (auto& b : enc_) b.init(seed, stream += 2);
        bottleneck_.init(seed, stream += 2);
        for (auto& u : up_) u.init(seed, ++stream);
        for (auto& b : dec_) b.init(seed, stream += 2);
        nn::init_uniform(head_.weight(), 1.0 / std::sqrt(static_cast<double>(cfg_.width_at(0))),
                         seed, ++stream);
        std::fill(head_.bias().value.begin(), head_.bias().value.end(), Scalar(0));
    }

    /// Spatial dims must be divisible by 2^depth.
    const nn::Tensor<Scalar>& forward(const nn::Tensor<Scalar>& x, bool training) {
        if (x.c != cfg_.in_channels) {
            throw config_error("unet: expected " + std::to_string(cfg_.in_channels) +
                               " input channels, got " + std::to_string(x.c));
        }
        const int m = 1 << cfg_.depth;
        if (x.h % m || x.w % m) {
            throw config_error("unet: input " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                               " not divisible by " + std::to_string(m));
        }
        const int d = cfg_.depth;
        const nn::Tensor<Scalar>* cur = &x;
        for (int l = 0; l < d; ++l) {
            const auto& e = enc_[l].forward(*cur, training);
            nn::maxpool2_forward(e, pooled_[l], argmax_[l]);
            cur = &pooled_[l];
        }
        cur = &bottleneck_.forward(*cur, training);
        for (int l = d - 1; l >= 0; --l) {
            nn::upsample2_forward(*cur, upsampled_[l]);
            const auto& u = up_[l].forward(upsampled_[l], training);
            nn::concat_channels(enc_[l].output(), u, cat_[l]);
            cur = &dec_[l].forward(cat_[l], training);
        }
        head_.forward(*cur, logits_);
        return logits_;
    }

    /// Backward through the last training-mode forward on `x`. Accumulates
    /// parameter gradients; writes the input gradient when `dx` is set.
    void backward(const nn::Tensor<Scalar>& x, const nn::Tensor<Scalar>& dlogits, nn::Tensor<Scalar>* dx) {
        const int d = cfg_.depth;
        head_.backward(dec_[0].output(), dlogits, &g_a_);
        for (int l = 0; l < d; ++l) {
            dec_[l].backward(cat_[l], g_a_, &g_b_);
            const int skip_c = cfg_.width_at(l);
            dskip_[l].resize(g_b_.n, skip_c, g_b_.h, g_b_.w, true);
            nn::split_channels_grad(g_b_, skip_c, dskip_[l], g_a_);
            up_[l].backward(upsampled_[l], g_a_, &g_b_);
            nn::upsample2_backward(g_b_, g_a_);
        }
        bottleneck_.backward(pooled_[d - 1], g_a_, &g_b_);
        for (int l = d - 1; l >= 0; --l) {
            nn::maxpool2_backward(g_b_, argmax_[l], g_a_);
            for (std::size_t i = 0; i < g_a_.data.size(); ++i) g_a_.data[i] += dskip_[l].data[i];
            const nn::Tensor<Scalar>& in = l == 0 ? x : pooled_[l - 1];
            if (l == 0) {
                enc_[0].backward(in, g_a_, dx);
            } else {
                enc_[l].backward(in, g_a_, &g_b_);
            }
        }
    }

    std::vector<nn::Param<Scalar>*> params() {
        std::vector<nn::Param<Scalar>*> out;
        for (auto& b : enc_) b.collect(out);
        bottleneck_.collect(out);
        for (int l = 0; l < cfg_.depth; ++l) {
            up_[l].collect(out);
            dec_[l].collect(out);
        }
        for (auto* p : head_.params()) out.push_back(p);
        return out;
    }

private:
    UNetConfig cfg_;
    std::vector<DoubleConv<Scalar>> enc_;
    DoubleConv<Scalar> bottleneck_;
    std::vector<ConvUnit<Scalar>> up_;
    std::vector<DoubleConv<Scalar>> dec_;
    nn::Conv2d<Scalar> head_;
    std::vector<nn::Tensor<Scalar>> pooled_, upsampled_, cat_, dskip_;
    std::vector<std::vector<std::uint8_t>> argmax_;
    nn::Tensor<Scalar> logits_, g_a_, g_b_;
};

// --- loss and decoding ----------------------------------------------------------

/// log(1 + e^x) without overflow.
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Mean over pixels of -sum_i y_i log(sigmoid(z_i)), evaluated as
/// softplus(-z_true). Only the true channel contributes. `labels` holds N*H*W
/// class codes; the gradient with respect to the logits is written to `dlogits`
/// when given.
template <typename Scalar>
double cross_entropy(const nn::Tensor<Scalar>& logits, const std::vector<std::uint8_t>& labels,
                     nn::Tensor<Scalar>* dlogits = nullptr) {
    if (logits.c != kNumClasses) throw config_error("cross_entropy: logits must have 3 channels");
    const std::size_t plane = logits.plane();
    if (labels.size() != plane * logits.n) throw data_error("cross_entropy: label count mismatch");
    const double count = static_cast<double>(labels.size());
    if (dlogits) dlogits->resize(logits.n, logits.c, logits.h, logits.w, true);
    double total = 0.0;
    for (int i = 0; i < logits.n; ++i) {
        for (std::size_t p = 0; p < plane; ++p) {
            const int cls = labels[i * plane + p];
            const double z = logits.channel(i, cls)[p];
            total += softplus(-z);
            if (dlogits) dlogits->channel(i, cls)[p] = static_cast<Scalar>(-sigmoid(-z) / count);
        }
    }
    return total / count;
}

/// Per-channel binary cross-entropy summed over the three channels, mean over
/// pixels: the true channel contributes softplus(-z), every other channel
/// softplus(z).
template <typename Scalar>
double binary_cross_entropy(const nn::Tensor<Scalar>& logits, const std::vector<std::uint8_t>& labels,
                            nn::Tensor<Scalar>* dlogits = nullptr) {
    if (logits.c != kNumClasses) throw config_error("binary_cross_entropy: logits must have 3 channels");
    const std::size_t plane = logits.plane();
    if (labels.size() != plane * logits.n) throw data_error("binary_cross_entropy: label count mismatch");
    const double count = static_cast<double>(labels.size());
    if (dlogits) dlogits->resize(logits.n, logits.c, logits.h, logits.w, true);
    double total = 0.0;
    for (int i = 0; i < logits.n; ++i) {
        for (int c = 0; c < kNumClasses; ++c) {
            const Scalar* z = logits.channel(i, c);
            Scalar* dz = dlogits ? dlogits->channel(i, c) : nullptr;
            for (std::size_t p = 0; p < plane; ++p) {
                const bool on = labels[i * plane + p] == c;
                const double zp = z[p];
                total += on ? softplus(-zp) : softplus(zp);
                if (dz) dz[p] = static_cast<Scalar>((sigmoid(zp) - (on ? 1.0 : 0.0)) / count);
            }
        }
    }
    return total / count;
}

/// Network output for one image: logits and per-channel sigmoid probabilities,
/// each 3 x H x W channel-major.
struct Prediction {
    int width = 0;
    int height = 0;
    std::vector<double> logits;
    std::vector<double> probabilities;

    double probability(int channel, int row, int col) const {
        return probabilities[(static_cast<std::size_t>(channel) * height + row) * width + col];
    }
};

template <typename Scalar>
Prediction make_prediction(const nn::Tensor<Scalar>& logits, int sample = 0) {
    Prediction p;
    p.width = logits.w;
    p.height = logits.h;
    const Scalar* src = logits.sample(sample);
    p.logits.assign(src, src + logits.sample_size());
    p.probabilities.resize(p.logits.size());
    for (std::size_t i = 0; i < p.logits.size(); ++i) p.probabilities[i] = sigmoid(p.logits[i]);
    return p;
}

/// Per-pixel argmax over the three probabilities; ties go to the lowest class index.
/// Logits are compared when present (same order, no saturation of sigmoid near 1).
inline LabelMap predict_labels(const Prediction& pred) {
    const std::size_t plane = static_cast<std::size_t>(pred.width) * pred.height;
    const auto& score = pred.logits.size() == kNumClasses * plane ? pred.logits : pred.probabilities;
    std::vector<std::uint8_t> out(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        int best = 0;
        for (int c = 1; c < kNumClasses; ++c) {
            if (score[c * plane + p] > score[best * plane + p]) best = c;
        }
        out[p] = static_cast<std::uint8_t>(best);
    }
    return LabelMap(pred.width, pred.height, std::move(out));
}

} // namespace mctseg
