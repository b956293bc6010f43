#pragma once

// Domain representation layer: a bone filter bank and a dirt filter bank applied
// to the raw slice (linear, no bias), plus the discriminative bank losses
//
//   L_bone = sum_n sum_i  alpha*||Wb_n * I_d^i||^2 - beta *||Wb_n * I_b^i||^2
//   L_dirt = sum_n sum_i  gamma*||Wd_n * I_b^i||^2 - sigma*||Wd_n * I_d^i||^2
//                         + zeta*||Wd_n * I_d^i||_1
//
// where * is the same-padded convolution used in the forward pass and the
// norms run over every entry of the response map.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/image.hpp"
#include "mctseg/nn.hpp"

namespace mctseg {

/// Both losses are indefinite quadratics in the filters, so large own-class
/// weights (beta, sigma) make SGD diverge. The defaults stay stable at the
/// default learning rate on 128x128 phantoms and still separate the two classes.
struct ReprLossCoefficients {
    double alpha = 5e-6;
    double beta = 5e-6;
    double gamma = 3e-4;
    double sigma = 3e-4;
    double zeta = 5e-6;

    void validate() const {
        for (double v : {alpha, beta, gamma, sigma, zeta}) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw config_error("representation loss coefficients must be finite and >= 0");
            }
        }
    }
};

/// Per-bank loss values of one evaluation.
struct ReprLosses {
    double bone = 0.0;
    double dirt = 0.0;
};

/// Mean squared response of a bank over a patch list, per filter and patch:
/// mean_{n,i} ||W_n * I^i||^2.
struct BankResponse {
    double on_bone = 0.0;
    double on_dirt = 0.0;
};

/// Stacks equally sized images into an N x 1 x H x W tensor.
template <typename Scalar>
nn::Tensor<Scalar> stack_images(const std::vector<GrayImage>& images) {
    if (images.empty()) throw data_error("stack_images: empty image list");
    const int h = images.front().height();
    const int w = images.front().width();
    nn::Tensor<Scalar> t(static_cast<int>(images.size()), 1, h, w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height() != h || images[i].width() != w) {
            throw data_error("stack_images: images differ in size");
        }
        const auto& v = images[i].values();
        Scalar* dst = t.sample(static_cast<int>(i));
        for (std::size_t j = 0; j < v.size(); ++j) dst[j] = static_cast<Scalar>(v[j]);
    }
    return t;
}

template <typename Scalar>
class RepresentationLayer {
public:
    RepresentationLayer() : RepresentationLayer(16, 3) {}

    RepresentationLayer(int filters, int filter_size)
        : bone_("repr.bone", 1, filters, filter_size, false),
          dirt_("repr.dirt", 1, filters, filter_size, false) {
        if (filters < 1) throw config_error("representation layer needs K >= 1 filters");
    }

    int filters() const noexcept { return bone_.out_channels(); }
    int filter_size() const noexcept { return bone_.kernel(); }
    int output_channels() const noexcept { return 2 * filters(); }

    /// Weights laid out K x 1 x m x n.
    nn::Param<Scalar>& bone_filters() noexcept { return bone_.weight(); }
    nn::Param<Scalar>& dirt_filters() noexcept { return dirt_.weight(); }
    const nn::Param<Scalar>& bone_filters() const noexcept { return bone_.weight(); }
    const nn::Param<Scalar>& dirt_filters() const noexcept { return dirt_.weight(); }

    /// Uniform in [-u, u], u = 1/sqrt(m*n).
    void initialize(std::uint64_t seed) {
        const double u = 1.0 / filter_size();
        nn::init_uniform(bone_.weight(), u, seed, 0x1001);
        nn::init_uniform(dirt_.weight(), u, seed, 0x1002);
    }

    /// Feature stack: channels [0,K) bone responses, [K,2K) dirt responses, then
    /// the raw input as one extra channel when `append_raw` is set.
    void forward(const nn::Tensor<Scalar>& x, nn::Tensor<Scalar>& features, bool append_raw = false) const {
        if (x.c != 1) throw config_error("representation layer expects single-channel input");
        bone_.forward(x, bone_out_);
        dirt_.forward(x, dirt_out_);
        const int k = filters();
        features.resize(x.n, 2 * k + (append_raw ? 1 : 0), x.h, x.w);
        for (int i = 0; i < x.n; ++i) {
            Scalar* dst = features.sample(i);
            dst = std::copy_n(bone_out_.sample(i), bone_out_.sample_size(), dst);
            dst = std::copy_n(dirt_out_.sample(i), dirt_out_.sample_size(), dst);
            if (append_raw) std::copy_n(x.sample(i), x.sample_size(), dst);
        }
    }

    /// Accumulates filter gradients from a feature-stack gradient.
    void backward(const nn::Tensor<Scalar>& x, const nn::Tensor<Scalar>& dfeatures) {
        const int k = filters();
        grad_part_.resize(x.n, k, x.h, x.w);
        for (int part = 0; part < 2; ++part) {
            for (int i = 0; i < x.n; ++i) {
                std::copy_n(dfeatures.sample(i) + part * grad_part_.sample_size(),
                            grad_part_.sample_size(), grad_part_.sample(i));
            }
            (part == 0 ? bone_ : dirt_).backward(x, grad_part_, nullptr);
        }
    }

    /// Evaluates both bank losses; when `accumulate` is set, adds
    /// bone_weight * dL_bone/dW and dirt_weight * dL_dirt/dW to the filter gradients.
    ReprLosses losses(const nn::Tensor<Scalar>& bone_patches, const nn::Tensor<Scalar>& dirt_patches,
                      const ReprLossCoefficients& c, bool accumulate = false,
                      double bone_weight = 1.0, double dirt_weight = 1.0) {
        if (bone_patches.n < 1 || dirt_patches.n < 1) {
            throw data_error("representation loss needs at least one bone and one dirt patch");
        }
        ReprLosses out;
        // Bone bank: suppress dirt response, amplify bone response.
        out.bone = quadratic_term(bone_, dirt_patches, c.alpha, 0.0, accumulate, bone_weight) +
                   quadratic_term(bone_, bone_patches, -c.beta, 0.0, accumulate, bone_weight);
        // Dirt bank: suppress bone response, amplify (sparse) dirt response.
        out.dirt = quadratic_term(dirt_, bone_patches, c.gamma, 0.0, accumulate, dirt_weight) +
                   quadratic_term(dirt_, dirt_patches, -c.sigma, c.zeta, accumulate, dirt_weight);
        return out;
    }

    /// Mean squared response per (filter, patch) of each bank on both pools.
    std::pair<BankResponse, BankResponse> responses(const nn::Tensor<Scalar>& bone_patches,
                                                    const nn::Tensor<Scalar>& dirt_patches) const {
        auto mean_energy = [&](const nn::Conv2d<Scalar>& bank, const nn::Tensor<Scalar>& p) {
            nn::Tensor<Scalar> r;
            bank.forward(p, r);
            double e = 0.0;
            for (auto v : r.data) e += static_cast<double>(v) * v;
            return e / (static_cast<double>(p.n) * bank.out_channels());
        };
        return {{mean_energy(bone_, bone_patches), mean_energy(bone_, dirt_patches)},
                {mean_energy(dirt_, bone_patches), mean_energy(dirt_, dirt_patches)}};
    }

    std::vector<nn::Param<Scalar>*> params() { return {&bone_.weight(), &dirt_.weight()}; }

private:
    /// quad * ||W * P||_2^2 + l1 * ||W * P||_1 summed over filters and patches.
    double quadratic_term(nn::Conv2d<Scalar>& bank, const nn::Tensor<Scalar>& patches, double quad,
                          double l1, bool accumulate, double weight) {
        if (quad == 0.0 && l1 == 0.0) return 0.0;
        bank.forward(patches, response_);
        double sq = 0.0, abs_sum = 0.0;
        for (auto v : response_.data) {
            sq += static_cast<double>(v) * v;
            abs_sum += std::abs(static_cast<double>(v));
        }
        if (accumulate && weight != 0.0) {
            // d/dr [quad r^2 + l1 |r|] = 2 quad r + l1 sign(r), with sign(0) = 0.
            for (auto& v : response_.data) {
                const double sign = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
                v = static_cast<Scalar>(weight * (2.0 * quad * v + l1 * sign));
            }
            bank.backward(patches, response_, nullptr);
        }
        return quad * sq + l1 * abs_sum;
    }

    nn::Conv2d<Scalar> bone_;
    nn::Conv2d<Scalar> dirt_;
    mutable nn::Tensor<Scalar> bone_out_, dirt_out_;
    nn::Tensor<Scalar> grad_part_, response_;
};

// --- value-level API ----------------------------------------------------------

/// Channel-major 2K x H x W feature stack of one image.
template <typename Scalar = double>
nn::Tensor<Scalar> repr_forward(const GrayImage& image, const RepresentationLayer<Scalar>& layer) {
    nn::Tensor<Scalar> features;
    layer.forward(stack_images<Scalar>({image}), features);
    return features;
}

template <typename Scalar>
double loss_bone(RepresentationLayer<Scalar>& layer, const std::vector<GrayImage>& bone_patches,
                 const std::vector<GrayImage>& dirt_patches, const ReprLossCoefficients& c) {
    return layer.losses(stack_images<Scalar>(bone_patches), stack_images<Scalar>(dirt_patches), c).bone;
}

template <typename Scalar>
double loss_dirt(RepresentationLayer<Scalar>& layer, const std::vector<GrayImage>& bone_patches,
                 const std::vector<GrayImage>& dirt_patches, const ReprLossCoefficients& c) {
    return layer.losses(stack_images<Scalar>(bone_patches), stack_images<Scalar>(dirt_patches), c).dirt;
}

/// Gradient of L_bone + L_dirt; returns {d/d bone filters, d/d dirt filters}.
template <typename Scalar>
std::pair<std::vector<Scalar>, std::vector<Scalar>>
repr_gradients(RepresentationLayer<Scalar>& layer, const std::vector<GrayImage>& bone_patches,
               const std::vector<GrayImage>& dirt_patches, const ReprLossCoefficients& c) {
    for (auto* p : layer.params()) p->zero_grad();
    layer.losses(stack_images<Scalar>(bone_patches), stack_images<Scalar>(dirt_patches), c, true);
    return {layer.bone_filters().grad, layer.dirt_filters().grad};
}

} // namespace mctseg
