#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mctseg/error.hpp"

namespace mctseg {

/// Tissue classes; the numeric values are the on-disk label codes.
enum class Tissue : std::uint8_t { air = 0, dirt = 1, bone = 2 };

inline constexpr int kNumClasses = 3;

inline constexpr std::array<const char*, kNumClasses> kClassNames = {"air", "dirt", "bone"};

/// Single-channel slice with intensities normalized to [0, 1], stored row-major.
class GrayImage {
public:
    GrayImage() = default;

    GrayImage(int width, int height, double fill = 0.0)
        : width_(width), height_(height) {
        check_dims(width, height);
        if (!(fill >= 0.0 && fill <= 1.0)) {
            throw data_error("GrayImage: fill value outside [0,1]");
        }
        values_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    GrayImage(int width, int height, std::vector<double> values)
        : width_(width), height_(height), values_(std::move(values)) {
        check_dims(width, height);
        if (values_.size() != static_cast<std::size_t>(width) * height) {
            throw data_error("GrayImage: value count does not match dimensions");
        }
        for (double v : values_) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw data_error("GrayImage: intensity outside [0,1]");
            }
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }

    double operator()(int row, int col) const { return values_[index(row, col)]; }

    /// Caller is responsible for keeping written values inside [0, 1].
    double& at(int row, int col) { return values_[index(row, col)]; }

    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const GrayImage&) const = default;

private:
    static void check_dims(int width, int height) {
        if (width < 1 || height < 1) {
            throw data_error("GrayImage: dimensions must be positive");
        }
    }

    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * width_ + col;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// Per-pixel class map with values in {0, 1, 2}.
class LabelMap {
public:
    LabelMap() = default;

    LabelMap(int width, int height, Tissue fill = Tissue::air)
        : width_(width), height_(height),
          values_(static_cast<std::size_t>(width) * height, static_cast<std::uint8_t>(fill)) {
        if (width < 1 || height < 1) {
            throw data_error("LabelMap: dimensions must be positive");
        }
    }

    LabelMap(int width, int height, std::vector<std::uint8_t> values)
        : width_(width), height_(height), values_(std::move(values)) {
        if (width < 1 || height < 1) {
            throw data_error("LabelMap: dimensions must be positive");
        }
        if (values_.size() != static_cast<std::size_t>(width) * height) {
            throw data_error("LabelMap: value count does not match dimensions");
        }
        for (auto v : values_) {
            if (v >= kNumClasses) {
                throw data_error("label out of range: " + std::to_string(v));
            }
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::uint8_t operator()(int row, int col) const { return values_[index(row, col)]; }

    void set(int row, int col, Tissue t) { values_[index(row, col)] = static_cast<std::uint8_t>(t); }

    const std::vector<std::uint8_t>& values() const noexcept { return values_; }

    /// Pixel count per class.
    std::array<std::size_t, kNumClasses> counts() const {
        std::array<std::size_t, kNumClasses> c{};
        for (auto v : values_) {
            ++c[v];
        }
        return c;
    }

    double fraction(Tissue t) const {
        return static_cast<double>(counts()[static_cast<int>(t)]) / static_cast<double>(size());
    }

    bool operator==(const LabelMap&) const = default;

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * width_ + col;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> values_;
};

/// Three-channel indicator map, channel-major: value(c, row, col).
class OneHotMap {
public:
    OneHotMap(int width, int height, std::vector<std::uint8_t> values)
        : width_(width), height_(height), values_(std::move(values)) {
        if (width < 1 || height < 1 ||
            values_.size() != static_cast<std::size_t>(kNumClasses) * width * height) {
            throw data_error("OneHotMap: value count does not match dimensions");
        }
        for (auto v : values_) {
            if (v > 1) {
                throw data_error("not one-hot: channel value outside {0,1}");
            }
        }
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }

    std::uint8_t operator()(int channel, int row, int col) const {
        return values_[(static_cast<std::size_t>(channel) * height_ + row) * width_ + col];
    }

    const std::vector<std::uint8_t>& values() const noexcept { return values_; }

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> values_;
};

inline OneHotMap one_hot_encode(const LabelMap& labels) {
    const std::size_t plane = labels.size();
    std::vector<std::uint8_t> out(plane * kNumClasses, 0);
    const auto& v = labels.values();
    for (std::size_t p = 0; p < plane; ++p) {
        out[v[p] * plane + p] = 1;
    }
    return OneHotMap(labels.width(), labels.height(), std::move(out));
}

inline LabelMap one_hot_decode(const OneHotMap& onehot) {
    const std::size_t plane = static_cast<std::size_t>(onehot.width()) * onehot.height();
    const auto& v = onehot.values();
    std::vector<std::uint8_t> out(plane);
    for (std::size_t p = 0; p < plane; ++p) {
        int sum = 0;
        int hot = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            if (v[c * plane + p]) {
                ++sum;
                hot = c;
            }
        }
        if (sum != 1) {
            throw data_error("not one-hot: pixel " + std::to_string(p) + " has channel sum " +
                             std::to_string(sum));
        }
        out[p] = static_cast<std::uint8_t>(hot);
    }
    return LabelMap(onehot.width(), onehot.height(), std::move(out));
}

/// 8-bit RGB raster used for error maps.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels; // interleaved RGB, row-major
};

} // namespace mctseg
