#pragma once

// Per-class Dice (F1), misclassification maps and split summaries.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "mctseg/config.hpp"
#include "mctseg/error.hpp"
#include "mctseg/image.hpp"

namespace mctseg {

struct ClassCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;

    /// 2TP / (2TP + FP + FN); 1.0 when the class is absent from both maps.
    double f1() const noexcept {
        const auto denom = 2 * tp + fp + fn;
        return denom == 0 ? 1.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
    }

    ClassCounts& operator+=(const ClassCounts& o) noexcept {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    bool operator==(const ClassCounts&) const = default;
};

struct DiceReport {
    std::array<ClassCounts, kNumClasses> classes{};
    std::int64_t pixels = 0;

    const ClassCounts& operator[](Tissue t) const { return classes[static_cast<int>(t)]; }
    double f1(Tissue t) const { return (*this)[t].f1(); }
    double f1(int c) const { return classes.at(static_cast<std::size_t>(c)).f1(); }

    std::int64_t correct() const noexcept {
        std::int64_t s = 0;
        for (const auto& c : classes) s += c.tp;
        return s;
    }

    /// Micro-averaging: pooled counts.
    DiceReport& operator+=(const DiceReport& o) noexcept {
        for (int c = 0; c < kNumClasses; ++c) classes[c] += o.classes[c];
        pixels += o.pixels;
        return *this;
    }
    bool operator==(const DiceReport&) const = default;
};

namespace detail {

inline void require_same_dims(const LabelMap& a, const LabelMap& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw data_error(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                         std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                         std::to_string(b.height()) + ")");
    }
}

} // namespace detail

inline DiceReport dice(const LabelMap& predicted, const LabelMap& truth) {
    detail::require_same_dims(predicted, truth, "dice");
    DiceReport r;
    const auto& p = predicted.values();
    const auto& t = truth.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == t[i]) {
            ++r.classes[p[i]].tp;
        } else {
            ++r.classes[p[i]].fp;
            ++r.classes[t[i]].fn;
        }
    }
    r.pixels = static_cast<std::int64_t>(p.size());
    return r;
}

inline DiceReport pool(const std::vector<DiceReport>& reports) {
    DiceReport total;
    for (const auto& r : reports) total += r;
    return total;
}

struct ErrorMap {
    RgbImage image;
    std::int64_t error_pixels = 0;
};

/// Grayscale source with every mislabeled pixel painted pure red.
inline ErrorMap error_map(const LabelMap& predicted, const LabelMap& truth, const GrayImage& source) {
    detail::require_same_dims(predicted, truth, "error_map");
    if (source.width() != truth.width() || source.height() != truth.height()) {
        throw data_error("error_map: source image size differs from the label maps");
    }
    ErrorMap out;
    out.image.width = source.width();
    out.image.height = source.height();
    out.image.pixels.resize(3 * source.values().size());
    const auto& p = predicted.values();
    const auto& t = truth.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto* px = &out.image.pixels[3 * i];
        if (p[i] != t[i]) {
            px[0] = 255;
            px[1] = 0;
            px[2] = 0;
            ++out.error_pixels;
        } else {
            const auto g = static_cast<std::uint8_t>(std::lround(source.values()[i] * 255.0));
            px[0] = px[1] = px[2] = g;
        }
    }
    return out;
}

struct ClassDistribution {
    double mean = 0.0;
    double variance = 0.0; // unbiased
};

struct SplitDistribution {
    std::array<ClassDistribution, kNumClasses> classes{};
    int runs = 0;
};

inline SplitDistribution summarize_splits(const std::vector<DiceReport>& reports) {
    if (reports.size() < 2) {
        throw data_error("summarize_splits needs at least 2 reports, got " + std::to_string(reports.size()));
    }
    SplitDistribution d;
    d.runs = static_cast<int>(reports.size());
    const double n = static_cast<double>(reports.size());
    for (int c = 0; c < kNumClasses; ++c) {
        double sum = 0.0;
        for (const auto& r : reports) sum += r.f1(c);
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& r : reports) ss += (r.f1(c) - mean) * (r.f1(c) - mean);
        d.classes[c] = {mean, ss / (n - 1.0)};
    }
    return d;
}

inline double gaussian_density(double x, double mean, double variance) {
    if (variance <= 0.0) return x == mean ? std::numeric_limits<double>::infinity() : 0.0;
    const double z = x - mean;
    return std::exp(-0.5 * z * z / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

/// CSV rows: x, then one density column per class, over `samples` points in [0,1].
inline void write_density_table(const std::filesystem::path& path, const SplitDistribution& d,
                                const std::string& label, int samples = 201) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << "x";
    for (int c = 0; c < kNumClasses; ++c) out << ',' << label << '_' << kClassNames[c];
    out << '\n';
    for (int i = 0; i < samples; ++i) {
        const double x = static_cast<double>(i) / (samples - 1);
        out << detail::format_double(x);
        for (int c = 0; c < kNumClasses; ++c) {
            out << ',' << detail::format_double(gaussian_density(x, d.classes[c].mean, d.classes[c].variance));
        }
        out << '\n';
    }
}

/// One evaluated image.
struct ImageReport {
    std::string id;
    DiceReport report;
};

/// CSV columns: image,class,TP,FP,FN,F1. A final block with id "pooled" holds the
/// micro-averaged counts.
inline void write_dice_csv(const std::filesystem::path& path, const std::vector<ImageReport>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << "image,class,TP,FP,FN,F1\n";
    auto emit = [&out](const std::string& id, const DiceReport& r) {
        for (int c = 0; c < kNumClasses; ++c) {
            const auto& k = r.classes[c];
            out << id << ',' << kClassNames[c] << ',' << k.tp << ',' << k.fp << ',' << k.fn << ','
                << detail::format_double(k.f1()) << '\n';
        }
    };
    DiceReport pooled;
    for (const auto& row : rows) {
        emit(row.id, row.report);
        pooled += row.report;
    }
    emit("pooled", pooled);
}

/// Short JSON document with pooled and per-image-mean F1.
inline std::string dice_summary_json(const std::vector<ImageReport>& rows) {
    DiceReport pooled;
    std::array<double, kNumClasses> mean{};
    for (const auto& row : rows) {
        pooled += row.report;
        for (int c = 0; c < kNumClasses; ++c) mean[c] += row.report.f1(c);
    }
    std::string s = "{\n  \"images\": " + std::to_string(rows.size()) + ",\n  \"pooled_f1\": {";
    for (int c = 0; c < kNumClasses; ++c) {
        s += std::string(c ? ", " : "") + "\"" + kClassNames[c] + "\": " + detail::format_double(pooled.f1(c));
    }
    s += "},\n  \"mean_image_f1\": {";
    for (int c = 0; c < kNumClasses; ++c) {
        const double m = rows.empty() ? 0.0 : mean[c] / static_cast<double>(rows.size());
        s += std::string(c ? ", " : "") + "\"" + kClassNames[c] + "\": " + detail::format_double(m);
    }
    s += "}\n}\n";
    return s;
}

} // namespace mctseg
