#pragma once

// Full segmentation model Y = F(f(X)): the representation layer (dsrdn mode
// only) feeding the Light-UNet.

#include <cstdint>
#include <optional>
#include <vector>

#include "mctseg/config.hpp"
#include "mctseg/lightunet.hpp"
#include "mctseg/nn.hpp"
#include "mctseg/reprlayer.hpp"

namespace mctseg {

template <typename Scalar>
class SegmentationModel {
public:
    SegmentationModel(NetMode mode, const ModelConfig& cfg)
        : mode_(mode), cfg_(cfg), unet_(unet_config(mode, cfg)) {
        if (mode == NetMode::dsrdn) repr_.emplace(cfg.filters, cfg.filter_size);
    }

    NetMode mode() const noexcept { return mode_; }
    const ModelConfig& config() const noexcept { return cfg_; }

    bool has_repr() const noexcept { return repr_.has_value(); }
    RepresentationLayer<Scalar>& repr() { return repr_.value(); }
    const RepresentationLayer<Scalar>& repr() const { return repr_.value(); }
    LightUNet<Scalar>& unet() noexcept { return unet_; }

    static UNetConfig unet_config(NetMode mode, const ModelConfig& cfg) {
        UNetConfig u;
        u.in_channels = mode == NetMode::dsrdn ? 2 * cfg.filters + (cfg.include_raw_input ? 1 : 0) : 1;
        u.depth = cfg.depth;
        u.base_width = cfg.base_width;
        u.max_width = cfg.max_width;
        return u;
    }

    void initialize(std::uint64_t seed) {
        if (repr_) repr_->initialize(seed);
        unet_.initialize(seed);
    }

    /// x: N x 1 x H x W slices.
    const nn::Tensor<Scalar>& forward(const nn::Tensor<Scalar>& x, bool training) {
        if (!repr_) return unet_.forward(x, training);
        repr_->forward(x, features_, cfg_.include_raw_input);
        return unet_.forward(features_, training);
    }

    /// Backward through the last training-mode forward on `x`.
    void backward(const nn::Tensor<Scalar>& x, const nn::Tensor<Scalar>& dlogits) {
        if (!repr_) {
            unet_.backward(x, dlogits, nullptr);
            return;
        }
        unet_.backward(features_, dlogits, &dfeatures_);
        repr_->backward(x, dfeatures_);
    }

    /// Parameters in a fixed order: representation banks first.
    std::vector<nn::Param<Scalar>*> params() {
        std::vector<nn::Param<Scalar>*> out;
        if (repr_) {
            for (auto* p : repr_->params()) out.push_back(p);
        }
        for (auto* p : unet_.params()) out.push_back(p);
        return out;
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    /// Inference-mode prediction for one slice.
    Prediction predict(const GrayImage& image) {
        const auto x = stack_images<Scalar>({image});
        return make_prediction(forward(x, false));
    }

private:
    NetMode mode_;
    ModelConfig cfg_;
    std::optional<RepresentationLayer<Scalar>> repr_;
    LightUNet<Scalar> unet_;
    nn::Tensor<Scalar> features_, dfeatures_;
};

} // namespace mctseg
