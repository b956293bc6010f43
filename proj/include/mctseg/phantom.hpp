#pragma once

// Synthetic micro-CT-like slices: trabecular bone struts, sparse dirt pockets in
// the cavities next to bone, and a tunable overlap of dirt/bone intensities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mctseg/dataset.hpp"
#include "mctseg/error.hpp"
#include "mctseg/image.hpp"
#include "mctseg/imageio.hpp"
#include "mctseg/rng.hpp"

namespace mctseg {

struct PhantomConfig {
    int width = 128;
    int height = 128;
    double bone_fraction_target = 0.30;
    double dirt_fraction_target = 0.05;
    /// 0: dirt intensities well below bone; 1: identical intensity distributions.
    double intensity_overlap = 0.7;
    double noise_sigma = 0.03;
    /// Gaussian scale (pixels) of the band-pass noise that shapes the struts.
    double structure_scale = 5.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (width < 8 || height < 8) throw config_error("phantom: width/height must be >= 8");
        auto in_open_unit = [](double v) { return v > 0.0 && v < 1.0; };
        if (!in_open_unit(bone_fraction_target) || !in_open_unit(dirt_fraction_target)) {
            throw config_error("phantom: class fractions must lie in (0,1)");
        }
        if (dirt_fraction_target >= bone_fraction_target) {
            throw config_error("phantom: dirt fraction must be below bone fraction");
        }
        if (bone_fraction_target + dirt_fraction_target >= 1.0) {
            throw config_error("phantom: class fractions must sum below 1");
        }
        if (!(intensity_overlap >= 0.0 && intensity_overlap <= 1.0)) {
            throw config_error("phantom: intensity_overlap must lie in [0,1]");
        }
        if (!(noise_sigma >= 0.0)) throw config_error("phantom: noise_sigma must be >= 0");
        if (!(structure_scale > 0.0)) throw config_error("phantom: structure_scale must be > 0");
    }
};

/// Absolute tolerance allowed on a generated class fraction.
inline double fraction_tolerance(double target) { return target < 0.1 ? 0.015 : 0.05; }

inline constexpr double kAirIntensity = 0.08;
inline constexpr double kBoneIntensity = 0.75;
inline constexpr double kTissueSpread = 0.08;
inline constexpr double kDirtOffsetAtZeroOverlap = 0.35;

inline double dirt_mean_intensity(double overlap) {
    return kBoneIntensity - (1.0 - overlap) * kDirtOffsetAtZeroOverlap;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

/// Separable Gaussian blur with mirrored borders.
inline std::vector<double> gaussian_blur(const std::vector<double>& in, int width, int height,
                                         double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(in.size()), out(in.size());
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                acc += k[d + radius] * in[static_cast<std::size_t>(r) * width + reflect(c + d, width)];
            }
            tmp[static_cast<std::size_t>(r) * width + c] = acc;
        }
    }
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d) {
                acc += k[d + radius] * tmp[static_cast<std::size_t>(reflect(r + d, height)) * width + c];
            }
            out[static_cast<std::size_t>(r) * width + c] = acc;
        }
    }
    return out;
}

/// Chessboard distance from every pixel to the nearest pixel with `source[p]` set.
inline std::vector<int> chessboard_distance(const std::vector<bool>& source, int width, int height) {
    const int inf = std::numeric_limits<int>::max();
    std::vector<int> dist(source.size(), inf);
    std::deque<int> queue;
    for (std::size_t p = 0; p < source.size(); ++p) {
        if (source[p]) {
            dist[p] = 0;
            queue.push_back(static_cast<int>(p));
        }
    }
    while (!queue.empty()) {
        const int p = queue.front();
        queue.pop_front();
        const int r = p / width;
        const int c = p % width;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr;
                const int cc = c + dc;
                if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
                const int q = rr * width + cc;
                if (dist[q] == inf) {
                    dist[q] = dist[p] + 1;
                    queue.push_back(q);
                }
            }
        }
    }
    return dist;
}

/// Places dirt pockets (clusters of small disks) in air pixels near bone until
/// the dirt count reaches `target`. Returns the number of dirt pixels painted.
inline std::size_t place_dirt(std::vector<std::uint8_t>& labels, int width, int height,
                              std::size_t target, Rng& rng) {
    std::vector<bool> is_bone(labels.size());
    for (std::size_t p = 0; p < labels.size(); ++p) {
        is_bone[p] = labels[p] == static_cast<std::uint8_t>(Tissue::bone);
    }
    const auto dist = chessboard_distance(is_bone, width, height);
    // Pocket centres sit in cavities, a few pixels away from the nearest strut.
    std::vector<int> centres;
    for (std::size_t p = 0; p < dist.size(); ++p) {
        if (dist[p] >= 5 && dist[p] <= 12) centres.push_back(static_cast<int>(p));
    }
    if (centres.empty()) return 0;

    std::size_t painted = 0;
    const int max_insertions = 4000;
    for (int attempt = 0; attempt < max_insertions && painted < target; ++attempt) {
        const int centre = centres[rng.below(centres.size())];
        const int cr = centre / width;
        const int cc = centre % width;
        const int lobes = 1 + static_cast<int>(rng.below(3));
        for (int l = 0; l < lobes && painted < target; ++l) {
            const int radius = 2 + static_cast<int>(rng.below(3));
            const int orr = cr + static_cast<int>(rng.below(5)) - 2;
            const int occ = cc + static_cast<int>(rng.below(5)) - 2;
            for (int dr = -radius; dr <= radius; ++dr) {
                for (int dc = -radius; dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > radius * radius) continue;
                    const int rr = orr + dr;
                    const int c2 = occ + dc;
                    if (rr < 0 || rr >= height || c2 < 0 || c2 >= width) continue;
                    auto& v = labels[static_cast<std::size_t>(rr) * width + c2];
                    if (v == static_cast<std::uint8_t>(Tissue::air)) {
                        v = static_cast<std::uint8_t>(Tissue::dirt);
                        ++painted;
                    }
                }
            }
        }
    }
    return painted;
}

} // namespace detail

/// Generates one slice and its ground-truth labels; fully determined by `config`.
inline LabeledImage generate_slice(const PhantomConfig& config) {
    config.validate();
    const int w = config.width;
    const int h = config.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const auto bone_target = static_cast<std::size_t>(std::llround(config.bone_fraction_target * n));
    const auto dirt_target = static_cast<std::size_t>(std::llround(config.dirt_fraction_target * n));
    const double dirt_tol = fraction_tolerance(config.dirt_fraction_target);
    const double bone_tol = fraction_tolerance(config.bone_fraction_target);

    constexpr int kMaxAttempts = 100;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng(derive_seed(config.seed, 0x9a17, static_cast<std::uint64_t>(attempt)));

        // Struts: band around the zero level set of difference-of-Gaussians noise.
        std::vector<double> white(n);
        for (auto& v : white) v = rng.normal();
        const auto fine = detail::gaussian_blur(white, w, h, config.structure_scale);
        const auto coarse = detail::gaussian_blur(white, w, h, 2.0 * config.structure_scale);
        std::vector<double> band(n);
        for (std::size_t p = 0; p < n; ++p) band[p] = std::abs(fine[p] - coarse[p]);
        std::vector<double> sorted = band;
        std::nth_element(sorted.begin(), sorted.begin() + bone_target, sorted.end());
        const double threshold = sorted[bone_target];

        std::vector<std::uint8_t> labels(n, static_cast<std::uint8_t>(Tissue::air));
        std::size_t bone_count = 0;
        for (std::size_t p = 0; p < n; ++p) {
            if (band[p] < threshold) {
                labels[p] = static_cast<std::uint8_t>(Tissue::bone);
                ++bone_count;
            }
        }
        const std::size_t dirt_count = detail::place_dirt(labels, w, h, dirt_target, rng);

        const double bone_frac = static_cast<double>(bone_count) / n;
        const double dirt_frac = static_cast<double>(dirt_count) / n;
        if (std::abs(bone_frac - config.bone_fraction_target) > bone_tol ||
            std::abs(dirt_frac - config.dirt_fraction_target) > dirt_tol ||
            dirt_count >= bone_count) {
            continue;
        }

        const double dirt_mean = dirt_mean_intensity(config.intensity_overlap);
        std::vector<double> values(n);
        for (std::size_t p = 0; p < n; ++p) {
            double v = kAirIntensity;
            if (labels[p] == static_cast<std::uint8_t>(Tissue::bone)) {
                v = rng.normal(kBoneIntensity, kTissueSpread);
            } else if (labels[p] == static_cast<std::uint8_t>(Tissue::dirt)) {
                v = rng.normal(dirt_mean, kTissueSpread);
            }
            if (config.noise_sigma > 0.0) v += rng.normal(0.0, config.noise_sigma);
            values[p] = std::clamp(v, 0.0, 1.0);
        }
        return {GrayImage(w, h, std::move(values)), LabelMap(w, h, std::move(labels))};
    }
    throw config_error("phantom: fraction targets infeasible (bone " +
                       std::to_string(config.bone_fraction_target) + ", dirt " +
                       std::to_string(config.dirt_fraction_target) + ") after " +
                       std::to_string(kMaxAttempts) + " attempts");
}

/// Writes `count` slices (seed + index per slice) as 16-bit image PNGs and 8-bit
/// label PNGs plus `manifest.tsv` under `out_dir`.
inline DatasetManifest generate_dataset(const PhantomConfig& config, int count,
                                        const std::filesystem::path& out_dir) {
    if (count < 1) throw config_error("phantom: count must be >= 1");
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    std::filesystem::create_directories(out_dir / "labels", ec);
    if (ec) throw data_error("cannot create directory under " + out_dir.string());

    DatasetManifest manifest;
    for (int i = 0; i < count; ++i) {
        PhantomConfig slice_cfg = config;
        slice_cfg.seed = config.seed + static_cast<std::uint64_t>(i);
        const auto slice = generate_slice(slice_cfg);
        char name[32];
        std::snprintf(name, sizeof name, "slice_%03d", i);
        const auto image_path = out_dir / "images" / (std::string(name) + ".png");
        const auto label_path = out_dir / "labels" / (std::string(name) + ".png");
        write_gray16_png(image_path, slice.image.width(), slice.image.height(),
                         quantize16(slice.image));
        write_gray8_png(label_path, slice.labels.width(), slice.labels.height(),
                        slice.labels.values());
        manifest.entries.push_back({name, image_path, label_path});
    }
    write_manifest(out_dir / "manifest.tsv", manifest);
    return manifest;
}

} // namespace mctseg
