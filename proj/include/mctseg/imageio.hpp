#pragma once

// Raster file I/O: single-channel PNG (8/16-bit), binary PGM (P5), RGB PNG.

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/image.hpp"

namespace mctseg {

/// Decoded single-channel raster before normalization.
struct RawRaster {
    int width = 0;
    int height = 0;
    int bit_depth = 8; // 8 or 16
    std::vector<std::uint16_t> samples;

    std::uint32_t max_representable() const { return bit_depth == 16 ? 65535u : 255u; }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        throw data_error("cannot open file: " + path.string());
    }
    return f;
}

inline bool has_png_signature(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), 8);
    return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) *what = msg;
    png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

inline RawRaster read_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    std::string message;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn,
                                             png_warning_fn);
    if (!png) throw data_error("libpng init failed: " + path.string());
    png_infop info = png_create_info_struct(png);
    RawRaster raster;
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw data_error("unreadable PNG " + path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw data_error("expected single-channel grayscale PNG: " + path.string());
    }
    if (depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);
    raster.width = static_cast<int>(png_get_image_width(png, info));
    raster.height = static_cast<int>(png_get_image_height(png, info));
    raster.bit_depth = depth == 16 ? 16 : 8;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * raster.height);
    rows.resize(raster.height);
    for (int r = 0; r < raster.height; ++r) rows[r] = buffer.data() + r * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    raster.samples.resize(static_cast<std::size_t>(raster.width) * raster.height);
    for (int r = 0; r < raster.height; ++r) {
        const png_byte* row = rows[r];
        for (int c = 0; c < raster.width; ++c) {
            raster.samples[static_cast<std::size_t>(r) * raster.width + c] =
                raster.bit_depth == 16
                    ? static_cast<std::uint16_t>((row[2 * c] << 8) | row[2 * c + 1])
                    : row[c];
        }
    }
    return raster;
}

inline RawRaster read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file: " + path.string());
    auto next_token = [&]() {
        std::string tok;
        char ch;
        while (in.get(ch)) {
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(ch))) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(ch);
        }
        return tok;
    };
    if (next_token() != "P5") throw data_error("not a binary PGM (P5): " + path.string());
    RawRaster raster;
    long maxval = 0;
    try {
        raster.width = std::stoi(next_token());
        raster.height = std::stoi(next_token());
        maxval = std::stol(next_token());
    } catch (const std::exception&) {
        throw data_error("malformed PGM header: " + path.string());
    }
    if (raster.width < 1 || raster.height < 1 || maxval < 1 || maxval > 65535) {
        throw data_error("malformed PGM header: " + path.string());
    }
    raster.bit_depth = maxval > 255 ? 16 : 8;
    const std::size_t count = static_cast<std::size_t>(raster.width) * raster.height;
    const std::size_t bytes = count * (raster.bit_depth / 8);
    std::vector<unsigned char> data(bytes);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) {
        throw data_error("truncated PGM payload: " + path.string());
    }
    raster.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        raster.samples[i] = raster.bit_depth == 16
                                ? static_cast<std::uint16_t>((data[2 * i] << 8) | data[2 * i + 1])
                                : data[i];
    }
    return raster;
}

inline void write_png(const std::filesystem::path& path, int width, int height, int bit_depth,
                      int color_type, const std::vector<png_byte>& bytes, int bytes_per_row) {
    auto file = open_file(path, "wb");
    std::string message;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_fn,
                                              png_warning_fn);
    if (!png) throw data_error("libpng init failed: " + path.string());
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(height);
    for (int r = 0; r < height; ++r) {
        rows[r] = const_cast<png_bytep>(bytes.data()) + static_cast<std::size_t>(r) * bytes_per_row;
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw data_error("cannot write PNG " + path.string() + ": " + message);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace detail

/// Reads a single-channel PNG or binary PGM; format chosen by file signature.
inline RawRaster read_raster(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw data_error("file not found: " + path.string());
    }
    return detail::has_png_signature(path) ? detail::read_png(path) : detail::read_pgm(path);
}

inline void write_gray8_png(const std::filesystem::path& path, int width, int height,
                            const std::vector<std::uint8_t>& samples) {
    detail::write_png(path, width, height, 8, PNG_COLOR_TYPE_GRAY, samples, width);
}

inline void write_gray16_png(const std::filesystem::path& path, int width, int height,
                             const std::vector<std::uint16_t>& samples) {
    std::vector<png_byte> bytes(samples.size() * 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        bytes[2 * i] = static_cast<png_byte>(samples[i] >> 8);
        bytes[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
    }
    detail::write_png(path, width, height, 16, PNG_COLOR_TYPE_GRAY, bytes, 2 * width);
}

inline void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
    detail::write_png(path, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.pixels,
                      3 * image.width);
}

inline void write_pgm(const std::filesystem::path& path, int width, int height,
                      const std::vector<std::uint8_t>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open file for writing: " + path.string());
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(samples.data()),
              static_cast<std::streamsize>(samples.size()));
    if (!out) throw data_error("write failed: " + path.string());
}

/// Quantizes to 16 bits, rounding to nearest.
inline std::vector<std::uint16_t> quantize16(const GrayImage& image) {
    std::vector<std::uint16_t> out(image.size());
    const auto& v = image.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<std::uint16_t>(std::lround(v[i] * 65535.0));
    }
    return out;
}

inline std::vector<std::uint8_t> quantize8(const GrayImage& image) {
    std::vector<std::uint8_t> out(image.size());
    const auto& v = image.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround(v[i] * 255.0));
    }
    return out;
}

} // namespace mctseg
