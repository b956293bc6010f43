#pragma once

// Image/label pairs on disk, TSV manifests and deterministic train/test splits.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/image.hpp"
#include "mctseg/imageio.hpp"
#include "mctseg/rng.hpp"

namespace mctseg {

struct LabeledImage {
    GrayImage image;
    LabelMap labels;
};

/// Loads an image and its label map. Intensities are divided by the container's
/// maximum representable value (255 or 65535), never by the image content.
inline LabeledImage load_pair(const std::filesystem::path& image_path,
                              const std::filesystem::path& label_path) {
    const RawRaster img = read_raster(image_path);
    const RawRaster lab = read_raster(label_path);
    if (img.width != lab.width || img.height != lab.height) {
        throw data_error("dimension mismatch: " + image_path.string() + " is " +
                         std::to_string(img.width) + "x" + std::to_string(img.height) + ", " +
                         label_path.string() + " is " + std::to_string(lab.width) + "x" +
                         std::to_string(lab.height));
    }
    if (lab.bit_depth != 8) {
        throw data_error("label file must be 8-bit: " + label_path.string());
    }
    const double scale = 1.0 / static_cast<double>(img.max_representable());
    std::vector<double> values(img.samples.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<double>(img.samples[i]) * scale;
    }
    std::vector<std::uint8_t> labels(lab.samples.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (lab.samples[i] >= kNumClasses) {
            throw data_error("label out of range (" + std::to_string(lab.samples[i]) + ") in " +
                             label_path.string());
        }
        labels[i] = static_cast<std::uint8_t>(lab.samples[i]);
    }
    return {GrayImage(img.width, img.height, std::move(values)),
            LabelMap(lab.width, lab.height, std::move(labels))};
}

enum class SplitTag { all, train, test };

inline const char* to_string(SplitTag tag) {
    switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::test: return "test";
    default: return "all";
    }
}

struct ManifestEntry {
    std::string id;
    std::filesystem::path image;
    std::filesystem::path label;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    SplitTag tag = SplitTag::all;

    std::size_t size() const noexcept { return entries.size(); }

    void validate() const {
        std::set<std::string> seen;
        for (const auto& e : entries) {
            if (e.id.empty()) throw data_error("manifest entry with empty identifier");
            if (!seen.insert(e.id).second) {
                throw data_error("duplicate manifest identifier: " + e.id);
            }
        }
    }

    bool operator==(const DatasetManifest&) const = default;
};

/// Writes "# split=<tag>" followed by one `id<TAB>image<TAB>label` row per entry.
/// Paths are written relative to the manifest's directory when possible.
inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    manifest.validate();
    const auto base = std::filesystem::absolute(path).parent_path();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write manifest: " + path.string());
    auto rel = [&](const std::filesystem::path& p) {
        const auto abs = std::filesystem::absolute(p).lexically_normal();
        auto r = abs.lexically_relative(base);
        return r.empty() ? abs.generic_string() : r.generic_string();
    };
    out << "# split=" << to_string(manifest.tag) << '\n';
    for (const auto& e : manifest.entries) {
        out << e.id << '\t' << rel(e.image) << '\t' << rel(e.label) << '\n';
    }
    if (!out) throw data_error("write failed: " + path.string());
}

/// Relative paths in the file are resolved against the manifest's directory.
inline DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path.string());
    const auto base = std::filesystem::absolute(path).parent_path();
    DatasetManifest manifest;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# split=", 0) == 0) {
                const auto tag = line.substr(8);
                manifest.tag = tag == "train" ? SplitTag::train
                               : tag == "test" ? SplitTag::test
                                               : SplitTag::all;
            }
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() != 3) {
            throw data_error(path.string() + ":" + std::to_string(lineno) +
                             ": expected 3 tab-separated fields");
        }
        auto resolve = [&](const std::string& p) {
            std::filesystem::path fp(p);
            return fp.is_absolute() ? fp : (base / fp).lexically_normal();
        };
        manifest.entries.push_back({fields[0], resolve(fields[1]), resolve(fields[2])});
    }
    manifest.validate();
    return manifest;
}

inline LabeledImage load_entry(const ManifestEntry& entry) {
    return load_pair(entry.image, entry.label);
}

inline std::vector<LabeledImage> load_all(const DatasetManifest& manifest) {
    std::vector<LabeledImage> out;
    out.reserve(manifest.size());
    for (const auto& e : manifest.entries) out.push_back(load_entry(e));
    return out;
}

/// Random train/test partition. Both halves keep the input order.
inline std::pair<DatasetManifest, DatasetManifest> make_splits(const DatasetManifest& manifest,
                                                               std::size_t train_count,
                                                               std::uint64_t seed) {
    if (train_count >= manifest.size()) {
        throw config_error("make_splits: train_count (" + std::to_string(train_count) +
                           ") must be smaller than the manifest size (" +
                           std::to_string(manifest.size()) + ")");
    }
    std::vector<std::size_t> order(manifest.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5b117));
    rng.shuffle(order.begin(), order.end());
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + train_count);
    std::vector<std::size_t> test_idx(order.begin() + train_count, order.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    DatasetManifest train{{}, SplitTag::train};
    DatasetManifest test{{}, SplitTag::test};
    for (auto i : train_idx) train.entries.push_back(manifest.entries[i]);
    for (auto i : test_idx) test.entries.push_back(manifest.entries[i]);
    return {std::move(train), std::move(test)};
}

/// Draws `count` entries from a training pool, leaving any test set untouched
/// (reduced-training-size runs evaluate on the original test set).
inline DatasetManifest subsample_train(const DatasetManifest& train, std::size_t count,
                                       std::uint64_t seed) {
    if (count == 0 || count > train.size()) {
        throw config_error("subsample_train: count must be in [1, " +
                           std::to_string(train.size()) + "]");
    }
    if (count == train.size()) return train;
    auto [sub, rest] = make_splits(train, count, derive_seed(seed, 0x10));
    sub.tag = SplitTag::train;
    return sub;
}

} // namespace mctseg
