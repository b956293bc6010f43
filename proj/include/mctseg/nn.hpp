#pragma once

// Minimal batched building blocks for the segmentation networks: NCHW tensors,
// same-padded convolution (im2col + GEMM), batch normalization, ReLU, 2x2 max
// pooling and nearest-neighbour upsampling, each with an explicit backward pass.
//
// Every reduction runs in a fixed sequential order, so results are bitwise
// reproducible for a given build.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/rng.hpp"

namespace mctseg::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatrixMap = Eigen::Map<Matrix<Scalar>>;
template <typename Scalar>
using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;

/// Dense N x C x H x W tensor.
template <typename Scalar>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<Scalar> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_) { resize(n_, c_, h_, w_); }

    /// Reshapes; contents are unspecified unless `zero` is set.
    void resize(int n_, int c_, int h_, int w_, bool zero = false) {
        n = n_;
        c = c_;
        h = h_;
        w = w_;
        const std::size_t total = static_cast<std::size_t>(n) * c * h * w;
        if (zero) {
            data.assign(total, Scalar(0));
        } else {
            data.resize(total);
        }
    }

    void zero() { std::fill(data.begin(), data.end(), Scalar(0)); }

    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t sample_size() const noexcept { return plane() * c; }
    std::size_t size() const noexcept { return data.size(); }

    Scalar* sample(int i) noexcept { return data.data() + i * sample_size(); }
    const Scalar* sample(int i) const noexcept { return data.data() + i * sample_size(); }
    Scalar* channel(int i, int ch) noexcept { return sample(i) + ch * plane(); }
    const Scalar* channel(int i, int ch) const noexcept { return sample(i) + ch * plane(); }

    /// C x (H*W) view of one sample.
    MatrixMap<Scalar> mat(int i) { return {sample(i), c, static_cast<Eigen::Index>(plane())}; }
    ConstMatrixMap<Scalar> mat(int i) const {
        return {sample(i), c, static_cast<Eigen::Index>(plane())};
    }

    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// Named parameter block: value, accumulated gradient and optimizer state.
template <typename Scalar>
struct Param {
    std::string name;
    std::vector<int> dims;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;
    std::vector<Scalar> velocity;
    bool trainable = true;

    Param() = default;
    Param(std::string name_, std::vector<int> dims_, bool trainable_ = true)
        : name(std::move(name_)), dims(std::move(dims_)), trainable(trainable_) {
        std::size_t count = 1;
        for (int d : dims) count *= static_cast<std::size_t>(d);
        value.assign(count, Scalar(0));
        grad.assign(count, Scalar(0));
    }

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), Scalar(0)); }
};

/// Uniform initialization in [-bound, bound] from a per-parameter stream.
template <typename Scalar>
void init_uniform(Param<Scalar>& p, double bound, std::uint64_t seed, std::uint64_t stream) {
    Rng rng(derive_seed(seed, stream));
    for (auto& v : p.value) v = static_cast<Scalar>(rng.uniform(-bound, bound));
}

// --- convolution -----------------------------------------------------------

/// Unfolds one C x H x W sample into a (C*k*k) x (H*W) matrix for a same-padded
/// k x k convolution (zero padding, k odd).
template <typename Scalar>
void im2col(const Scalar* x, int c, int h, int w, int k, Scalar* col) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        const Scalar* src = x + ch * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                Scalar* dst = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    Scalar* drow = dst + static_cast<std::size_t>(y) * w;
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h || x1 <= x0) {
                        std::fill(drow, drow + w, Scalar(0));
                        continue;
                    }
                    std::fill(drow, drow + x0, Scalar(0));
                    std::memcpy(drow + x0, src + static_cast<std::size_t>(sy) * w + x0 + dx,
                                sizeof(Scalar) * (x1 - x0));
                    std::fill(drow + x1, drow + w, Scalar(0));
                }
            }
        }
    }
}

/// Adjoint of im2col: accumulates the columns back into a C x H x W sample.
template <typename Scalar>
void col2im_add(const Scalar* col, int c, int h, int w, int k, Scalar* x) {
    const int pad = k / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ch = 0; ch < c; ++ch) {
        Scalar* dst = x + ch * hw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const Scalar* src = col + ((static_cast<std::size_t>(ch) * k + ky) * k + kx) * hw;
                const int dy = ky - pad;
                const int dx = kx - pad;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(w, w - dx);
                for (int y = 0; y < h; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= h) continue;
                    const Scalar* srow = src + static_cast<std::size_t>(y) * w;
                    Scalar* drow = dst + static_cast<std::size_t>(sy) * w + dx;
                    for (int xx = x0; xx < x1; ++xx) drow[xx] += srow[xx];
                }
            }
        }
    }
}

/// Same-padded k x k convolution (cross-correlation, as in every deep-learning
/// framework) with weights laid out cout x (cin*k*k).
template <typename Scalar>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int cin, int cout, int k, bool bias)
        : cin_(cin), cout_(cout), k_(k),
          weight_(name + ".weight", {cout, cin, k, k}),
          bias_(bias ? Param<Scalar>(name + ".bias", {cout}) : Param<Scalar>()),
          has_bias_(bias) {
        if (k % 2 == 0) throw config_error("Conv2d: kernel size must be odd");
    }

    int in_channels() const noexcept { return cin_; }
    int out_channels() const noexcept { return cout_; }
    int kernel() const noexcept { return k_; }
    Param<Scalar>& weight() noexcept { return weight_; }
    const Param<Scalar>& weight() const noexcept { return weight_; }
    Param<Scalar>& bias() noexcept { return bias_; }
    bool has_bias() const noexcept { return has_bias_; }

    void forward(const Tensor<Scalar>& x, Tensor<Scalar>& y) const {
        check_input(x);
        y.resize(x.n, cout_, x.h, x.w);
        const auto wmat = weight_matrix();
        for (int i = 0; i < x.n; ++i) {
            auto out = y.mat(i);
            if (k_ == 1) {
                out.noalias() = wmat * x.mat(i);
            } else {
                unfold(x, i);
                out.noalias() = wmat * col_matrix(x);
            }
            if (has_bias_) {
                for (int o = 0; o < cout_; ++o) out.row(o).array() += bias_.value[o];
            }
        }
    }

    /// Accumulates parameter gradients; writes the input gradient when `dx` is set.
    void backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Tensor<Scalar>* dx) {
        check_input(x);
        MatrixMap<Scalar> wgrad(weight_.grad.data(), cout_, static_cast<Eigen::Index>(cin_) * k_ * k_);
        const auto wmat = weight_matrix();
        if (dx) dx->resize(x.n, x.c, x.h, x.w, true);
        const auto hw = static_cast<Eigen::Index>(x.plane());
        for (int i = 0; i < x.n; ++i) {
            const auto g = dy.mat(i);
            if (has_bias_) {
                // Plain loop: Eigen's vectorized sum peels by address, which would
                // make the result depend on where the buffer was allocated.
                for (int o = 0; o < cout_; ++o) {
                    Scalar acc = 0;
                    const Scalar* row = g.data() + o * hw;
                    for (Eigen::Index p = 0; p < hw; ++p) acc += row[p];
                    bias_.grad[o] += acc;
                }
            }
            if (k_ == 1) {
                wgrad.noalias() += g * x.mat(i).transpose();
                if (dx) dx->mat(i).noalias() = wmat.transpose() * g;
            } else {
                unfold(x, i);
                wgrad.noalias() += g * col_matrix(x).transpose();
                if (dx) {
                    MatrixMap<Scalar> dcol(col_.data(), static_cast<Eigen::Index>(cin_) * k_ * k_, hw);
                    dcol.noalias() = wmat.transpose() * g;
                    col2im_add(col_.data(), x.c, x.h, x.w, k_, dx->sample(i));
                }
            }
        }
    }

    std::vector<Param<Scalar>*> params() {
        std::vector<Param<Scalar>*> p{&weight_};
        if (has_bias_) p.push_back(&bias_);
        return p;
    }

private:
    ConstMatrixMap<Scalar> weight_matrix() const {
        return {weight_.value.data(), cout_, static_cast<Eigen::Index>(cin_) * k_ * k_};
    }

    void check_input(const Tensor<Scalar>& x) const {
        if (x.c != cin_) {
            throw config_error("Conv2d " + weight_.name + ": expected " + std::to_string(cin_) +
                               " input channels, got " + std::to_string(x.c));
        }
    }

    void unfold(const Tensor<Scalar>& x, int i) const {
        col_.resize(static_cast<std::size_t>(cin_) * k_ * k_ * x.plane());
        im2col(x.sample(i), x.c, x.h, x.w, k_, col_.data());
    }

    MatrixMap<Scalar> col_matrix(const Tensor<Scalar>& x) const {
        return {col_.data(), static_cast<Eigen::Index>(cin_) * k_ * k_,
                static_cast<Eigen::Index>(x.plane())};
    }

    int cin_ = 0, cout_ = 0, k_ = 1;
    Param<Scalar> weight_;
    Param<Scalar> bias_;
    bool has_bias_ = false;
    mutable std::vector<Scalar> col_;
};

// --- batch normalization + ReLU ----------------------------------------------

/// Per-channel batch normalization. Training mode normalizes with batch
/// statistics and updates the running estimates; inference uses the stored ones.
template <typename Scalar>
class BatchNorm2d {
public:
    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& name, int channels)
        : gamma_(name + ".gamma", {channels}),
          beta_(name + ".beta", {channels}),
          running_mean_(name + ".running_mean", {channels}, false),
          running_var_(name + ".running_var", {channels}, false),
          mean_(channels), inv_std_(channels) {
        std::fill(gamma_.value.begin(), gamma_.value.end(), Scalar(1));
        std::fill(running_var_.value.begin(), running_var_.value.end(), Scalar(1));
    }

    int channels() const noexcept { return static_cast<int>(gamma_.size()); }

    void forward(const Tensor<Scalar>& x, Tensor<Scalar>& y, bool training) {
        y.resize(x.n, x.c, x.h, x.w);
        const std::size_t plane = x.plane();
        const double count = static_cast<double>(plane) * x.n;
        for (int ch = 0; ch < x.c; ++ch) {
            double mean, var;
            if (training) {
                double sum = 0.0;
                for (int i = 0; i < x.n; ++i) {
                    const Scalar* p = x.channel(i, ch);
                    for (std::size_t j = 0; j < plane; ++j) sum += p[j];
                }
                mean = sum / count;
                double sq = 0.0;
                for (int i = 0; i < x.n; ++i) {
                    const Scalar* p = x.channel(i, ch);
                    for (std::size_t j = 0; j < plane; ++j) {
                        const double d = p[j] - mean;
                        sq += d * d;
                    }
                }
                var = sq / count;
                const double unbiased = count > 1 ? sq / (count - 1) : var;
                running_mean_.value[ch] = static_cast<Scalar>(
                    (1 - kMomentum) * running_mean_.value[ch] + kMomentum * mean);
                running_var_.value[ch] = static_cast<Scalar>(
                    (1 - kMomentum) * running_var_.value[ch] + kMomentum * unbiased);
            } else {
                mean = running_mean_.value[ch];
                var = running_var_.value[ch];
            }
            const double inv_std = 1.0 / std::sqrt(var + kEps);
            mean_[ch] = mean;
            inv_std_[ch] = inv_std;
            const Scalar scale = static_cast<Scalar>(gamma_.value[ch] * inv_std);
            const Scalar shift = static_cast<Scalar>(beta_.value[ch] - gamma_.value[ch] * inv_std * mean);
            for (int i = 0; i < x.n; ++i) {
                const Scalar* p = x.channel(i, ch);
                Scalar* q = y.channel(i, ch);
                for (std::size_t j = 0; j < plane; ++j) q[j] = p[j] * scale + shift;
            }
        }
    }

    /// Backward through a training-mode forward; `x` is that forward's input.
    void backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, Tensor<Scalar>& dx) {
        dx.resize(x.n, x.c, x.h, x.w);
        const std::size_t plane = x.plane();
        const double count = static_cast<double>(plane) * x.n;
        for (int ch = 0; ch < x.c; ++ch) {
            const double mean = mean_[ch];
            const double inv_std = inv_std_[ch];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const Scalar* p = x.channel(i, ch);
                const Scalar* g = dy.channel(i, ch);
                for (std::size_t j = 0; j < plane; ++j) {
                    sum_dy += g[j];
                    sum_dy_xhat += g[j] * ((p[j] - mean) * inv_std);
                }
            }
            gamma_.grad[ch] += static_cast<Scalar>(sum_dy_xhat);
            beta_.grad[ch] += static_cast<Scalar>(sum_dy);
            const double gamma = gamma_.value[ch];
            const double a = gamma * inv_std;
            const double mean_dy = sum_dy / count;
            const double mean_dy_xhat = sum_dy_xhat / count;
            for (int i = 0; i < x.n; ++i) {
                const Scalar* p = x.channel(i, ch);
                const Scalar* g = dy.channel(i, ch);
                Scalar* q = dx.channel(i, ch);
                for (std::size_t j = 0; j < plane; ++j) {
                    const double xhat = (p[j] - mean) * inv_std;
                    q[j] = static_cast<Scalar>(a * (g[j] - mean_dy - xhat * mean_dy_xhat));
                }
            }
        }
    }

    std::vector<Param<Scalar>*> params() { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

private:
    Param<Scalar> gamma_, beta_, running_mean_, running_var_;
    std::vector<double> mean_, inv_std_;
};

template <typename Scalar>
void relu_inplace(Tensor<Scalar>& t) {
    for (auto& v : t.data) v = v > Scalar(0) ? v : Scalar(0);
}

/// Zeroes gradient entries where the ReLU output was not positive.
template <typename Scalar>
void relu_backward_inplace(const Tensor<Scalar>& out, Tensor<Scalar>& grad) {
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (!(out.data[i] > Scalar(0))) grad.data[i] = Scalar(0);
    }
}

// --- resampling --------------------------------------------------------------

/// 2x2 max pooling, stride 2; records the winning offset (first maximum wins).
template <typename Scalar>
void maxpool2_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y, std::vector<std::uint8_t>& arg) {
    if (x.h % 2 || x.w % 2) throw config_error("maxpool: spatial size must be even");
    const int oh = x.h / 2, ow = x.w / 2;
    y.resize(x.n, x.c, oh, ow);
    arg.resize(y.size());
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i) {
        for (int ch = 0; ch < x.c; ++ch) {
            const Scalar* p = x.channel(i, ch);
            Scalar* q = y.channel(i, ch);
            for (int r = 0; r < oh; ++r) {
                for (int c = 0; c < ow; ++c, ++o) {
                    const Scalar* base = p + static_cast<std::size_t>(2 * r) * x.w + 2 * c;
                    const Scalar cand[4] = {base[0], base[1], base[x.w], base[x.w + 1]};
                    std::uint8_t best = 0;
                    for (std::uint8_t k = 1; k < 4; ++k) {
                        if (cand[k] > cand[best]) best = k;
                    }
                    q[static_cast<std::size_t>(r) * ow + c] = cand[best];
                    arg[o] = best;
                }
            }
        }
    }
}

template <typename Scalar>
void maxpool2_backward(const Tensor<Scalar>& dy, const std::vector<std::uint8_t>& arg,
                       Tensor<Scalar>& dx) {
    dx.resize(dy.n, dy.c, dy.h * 2, dy.w * 2, true);
    std::size_t o = 0;
    for (int i = 0; i < dy.n; ++i) {
        for (int ch = 0; ch < dy.c; ++ch) {
            const Scalar* g = dy.channel(i, ch);
            Scalar* q = dx.channel(i, ch);
            for (int r = 0; r < dy.h; ++r) {
                for (int c = 0; c < dy.w; ++c, ++o) {
                    const int k = arg[o];
                    q[static_cast<std::size_t>(2 * r + k / 2) * dx.w + 2 * c + k % 2] =
                        g[static_cast<std::size_t>(r) * dy.w + c];
                }
            }
        }
    }
}

template <typename Scalar>
void upsample2_forward(const Tensor<Scalar>& x, Tensor<Scalar>& y) {
    y.resize(x.n, x.c, x.h * 2, x.w * 2);
    for (int i = 0; i < x.n; ++i) {
        for (int ch = 0; ch < x.c; ++ch) {
            const Scalar* p = x.channel(i, ch);
            Scalar* q = y.channel(i, ch);
            for (int r = 0; r < y.h; ++r) {
                const Scalar* src = p + static_cast<std::size_t>(r / 2) * x.w;
                Scalar* dst = q + static_cast<std::size_t>(r) * y.w;
                for (int c = 0; c < y.w; ++c) dst[c] = src[c / 2];
            }
        }
    }
}

template <typename Scalar>
void upsample2_backward(const Tensor<Scalar>& dy, Tensor<Scalar>& dx) {
    dx.resize(dy.n, dy.c, dy.h / 2, dy.w / 2, true);
    for (int i = 0; i < dy.n; ++i) {
        for (int ch = 0; ch < dy.c; ++ch) {
            const Scalar* g = dy.channel(i, ch);
            Scalar* q = dx.channel(i, ch);
            for (int r = 0; r < dy.h; ++r) {
                const Scalar* src = g + static_cast<std::size_t>(r) * dy.w;
                Scalar* dst = q + static_cast<std::size_t>(r / 2) * dx.w;
                for (int c = 0; c < dy.w; ++c) dst[c / 2] += src[c];
            }
        }
    }
}

/// Channel concatenation [a, b] per sample.
template <typename Scalar>
void concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b, Tensor<Scalar>& y) {
    y.resize(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        std::copy_n(a.sample(i), a.sample_size(), y.sample(i));
        std::copy_n(b.sample(i), b.sample_size(), y.sample(i) + a.sample_size());
    }
}

/// Splits a concatenated gradient; the first part is added to `da`, the second written to `db`.
template <typename Scalar>
void split_channels_grad(const Tensor<Scalar>& dy, int ca, Tensor<Scalar>& da, Tensor<Scalar>& db) {
    const int cb = dy.c - ca;
    db.resize(dy.n, cb, dy.h, dy.w);
    for (int i = 0; i < dy.n; ++i) {
        const Scalar* src = dy.sample(i);
        Scalar* pa = da.sample(i);
        const std::size_t na = static_cast<std::size_t>(ca) * dy.plane();
        for (std::size_t j = 0; j < na; ++j) pa[j] += src[j];
        std::copy_n(src + na, db.sample_size(), db.sample(i));
    }
}

} // namespace mctseg::nn
