#pragma once

// Sliding-window patches, representative bone/dirt patch sets, and the
// class-balanced draw used by the representation losses.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/image.hpp"
#include "mctseg/imageio.hpp"
#include "mctseg/rng.hpp"

namespace mctseg {

struct PatchSpec {
    int window = 64;
    int stride = 16;

    void validate() const {
        if (window < 1) throw config_error("patch window must be >= 1");
        if (stride < 1 || stride > window) throw config_error("patch stride must lie in [1, window]");
    }
};

struct LabeledPatch {
    GrayImage image;
    LabelMap labels;
    std::string source_id;
    int row = 0; // top-left offset in the source
    int col = 0;
};

/// Number of fully in-bounds windows along one axis.
constexpr int windows_along(int extent, int window, int stride) {
    return extent < window ? 0 : (extent - window) / stride + 1;
}

inline GrayImage crop(const GrayImage& image, int row, int col, int height, int width) {
    std::vector<double> v(static_cast<std::size_t>(height) * width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) v[static_cast<std::size_t>(r) * width + c] = image(row + r, col + c);
    }
    return GrayImage(width, height, std::move(v));
}

inline LabelMap crop(const LabelMap& labels, int row, int col, int height, int width) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(height) * width);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) v[static_cast<std::size_t>(r) * width + c] = labels(row + r, col + c);
    }
    return LabelMap(width, height, std::move(v));
}

/// Row-major windows at offsets (r*stride, c*stride) lying fully inside the image.
inline std::vector<LabeledPatch> extract_patches(const GrayImage& image, const LabelMap& labels,
                                                 const PatchSpec& spec,
                                                 const std::string& source_id = {}) {
    spec.validate();
    if (image.width() != labels.width() || image.height() != labels.height()) {
        throw data_error("extract_patches: image and label dimensions differ");
    }
    if (image.width() < spec.window || image.height() < spec.window) {
        throw data_error("extract_patches: image " + std::to_string(image.width()) + "x" +
                         std::to_string(image.height()) + " smaller than window " +
                         std::to_string(spec.window));
    }
    const int rows = windows_along(image.height(), spec.window, spec.stride);
    const int cols = windows_along(image.width(), spec.window, spec.stride);
    std::vector<LabeledPatch> out;
    out.reserve(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int y = r * spec.stride;
            const int x = c * spec.stride;
            out.push_back({crop(image, y, x, spec.window, spec.window),
                           crop(labels, y, x, spec.window, spec.window), source_id, y, x});
        }
    }
    return out;
}

struct RepresentativeCriteria {
    double bone_min_fraction = 0.30;
    double dirt_min_fraction = 0.10;
    double other_max_fraction = 0.02;
    std::size_t max_per_class = 64;
};

/// The I_b / I_d pools and the number P drawn per optimization step.
struct RepresentativePatchSet {
    std::vector<GrayImage> bone_patches;
    std::vector<GrayImage> dirt_patches;
    std::size_t per_step_count = 8;

    void validate() const {
        if (bone_patches.empty() || dirt_patches.empty()) {
            throw data_error("representative set: both bone and dirt pools must be non-empty");
        }
        if (per_step_count < 1 ||
            per_step_count > std::min(bone_patches.size(), dirt_patches.size())) {
            throw config_error("representative set: P=" + std::to_string(per_step_count) +
                               " exceeds pool sizes (bone " +
                               std::to_string(bone_patches.size()) + ", dirt " +
                               std::to_string(dirt_patches.size()) + ")");
        }
    }
};

/// Selects patches dominated by bone (resp. dirt) that contain almost none of the
/// other class; each pool keeps the `max_per_class` highest-fraction patches.
inline RepresentativePatchSet select_representatives(const std::vector<LabeledPatch>& patches,
                                                     const RepresentativeCriteria& criteria,
                                                     std::size_t per_step_count = 8) {
    if (patches.empty()) throw data_error("select_representatives: empty patch list");
    struct Scored {
        double fraction;
        std::size_t index;
    };
    std::vector<Scored> bone, dirt;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const double fb = patches[i].labels.fraction(Tissue::bone);
        const double fd = patches[i].labels.fraction(Tissue::dirt);
        if (fb >= criteria.bone_min_fraction && fd <= criteria.other_max_fraction) bone.push_back({fb, i});
        if (fd >= criteria.dirt_min_fraction && fb <= criteria.other_max_fraction) dirt.push_back({fd, i});
    }
    if (bone.empty()) throw data_error("select_representatives: no qualifying bone patch");
    if (dirt.empty()) throw data_error("select_representatives: no qualifying dirt patch");
    // Highest fraction first; ties keep extraction order.
    auto by_fraction = [](const Scored& a, const Scored& b) {
        return a.fraction != b.fraction ? a.fraction > b.fraction : a.index < b.index;
    };
    std::sort(bone.begin(), bone.end(), by_fraction);
    std::sort(dirt.begin(), dirt.end(), by_fraction);
    if (bone.size() > criteria.max_per_class) bone.resize(criteria.max_per_class);
    if (dirt.size() > criteria.max_per_class) dirt.resize(criteria.max_per_class);
    RepresentativePatchSet set;
    set.per_step_count = per_step_count;
    for (const auto& s : bone) set.bone_patches.push_back(patches[s.index].image);
    for (const auto& s : dirt) set.dirt_patches.push_back(patches[s.index].image);
    return set;
}

struct BalancedDraw {
    std::vector<std::size_t> bone_indices;
    std::vector<std::size_t> dirt_indices;
};

/// P distinct indices per pool, without replacement; a pure function of (seed, step).
inline BalancedDraw balanced_sample_indices(const RepresentativePatchSet& set, std::uint64_t seed,
                                            std::uint64_t step) {
    set.validate();
    auto draw = [&](std::size_t pool, std::uint64_t stream) {
        std::vector<std::size_t> idx(pool);
        for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
        Rng rng(derive_seed(seed, step, stream));
        // Partial Fisher-Yates: the first P slots form the draw.
        for (std::size_t i = 0; i < set.per_step_count; ++i) {
            const auto j = i + rng.below(pool - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(set.per_step_count);
        return idx;
    };
    return {draw(set.bone_patches.size(), 0xb0e), draw(set.dirt_patches.size(), 0xd1a7)};
}

inline std::pair<std::vector<GrayImage>, std::vector<GrayImage>>
balanced_sample(const RepresentativePatchSet& set, std::uint64_t seed, std::uint64_t step) {
    const auto d = balanced_sample_indices(set, seed, step);
    std::vector<GrayImage> bone, dirt;
    for (auto i : d.bone_indices) bone.push_back(set.bone_patches[i]);
    for (auto i : d.dirt_indices) dirt.push_back(set.dirt_patches[i]);
    return {std::move(bone), std::move(dirt)};
}

/// Writes every representative patch as an 8-bit PNG plus `index.tsv`
/// (class, file) for visual inspection.
inline void export_representatives(const RepresentativePatchSet& set,
                                   const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.tsv");
    if (!index) throw data_error("cannot write " + (dir / "index.tsv").string());
    index << "class\tfile\n";
    auto dump = [&](const std::vector<GrayImage>& pool, const char* name) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const std::string file = std::string(name) + "_" + std::to_string(i) + ".png";
            write_gray8_png(dir / file, pool[i].width(), pool[i].height(), quantize8(pool[i]));
            index << name << '\t' << file << '\n';
        }
    };
    dump(set.bone_patches, "bone");
    dump(set.dirt_patches, "dirt");
}

} // namespace mctseg
