#pragma once

// Version-tagged binary checkpoint: an index of named blocks, each with dims,
// a little-endian payload (float64 tensors or UTF-8 text) and a CRC-32.
//
//   "MCTSEGCK" | u32 version | u32 block count | blocks...
//   block: u32 name length | name | u8 kind | u32 ndims | u64 dims[ndims]
//          | u64 payload bytes | payload | u32 crc32(payload)

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mctseg/error.hpp"

namespace mctseg {

inline constexpr char kCheckpointMagic[8] = {'M', 'C', 'T', 'S', 'E', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct WeightBlock {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    bool operator==(const WeightBlock&) const = default;
};

/// One row of the per-step loss history.
struct HistoryRow {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double ce = 0.0;
    double l_bone = 0.0;
    double l_dirt = 0.0;
    double total = 0.0;

    bool operator==(const HistoryRow&) const = default;
};

struct Checkpoint {
    int epoch = 0; // number of completed epochs
    std::string config_echo;
    std::vector<WeightBlock> blocks; // parameters, running statistics, optimizer state
    std::vector<HistoryRow> history;

    const WeightBlock* find(const std::string& name) const {
        for (const auto& b : blocks) {
            if (b.name == name) return &b;
        }
        return nullptr;
    }

    bool operator==(const Checkpoint&) const = default;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes_.insert(bytes_.end(), b, b + n);
    }
    std::size_t size() const noexcept { return bytes_.size(); }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

    void need(std::size_t n, const std::string& what) const {
        if (pos_ + n > bytes_.size()) throw data_error("checkpoint truncated while reading " + what);
    }
    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    const std::uint8_t* take(std::size_t n, const std::string& what) {
        need(n, what);
        const auto* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

enum class BlockKind : std::uint8_t { f64 = 0, text = 1 };

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
    return static_cast<std::uint32_t>(::crc32(0L, p, static_cast<uInt>(n)));
}

inline void write_block(ByteWriter& w, const std::string& name, BlockKind kind,
                        const std::vector<std::uint64_t>& dims, const ByteWriter& payload) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(kind));
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u64(d);
    w.u64(payload.size());
    w.raw(payload.bytes().data(), payload.size());
    w.u32(crc32_of(payload.bytes().data(), payload.size()));
}

constexpr int kHistoryColumns = 7;

} // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    using namespace detail;
    ByteWriter w;
    w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(c.blocks.size() + 3));

    ByteWriter cfg;
    cfg.raw(c.config_echo.data(), c.config_echo.size());
    write_block(w, "meta.config", BlockKind::text, {c.config_echo.size()}, cfg);

    ByteWriter epoch;
    epoch.f64(c.epoch);
    write_block(w, "meta.epoch", BlockKind::f64, {1}, epoch);

    ByteWriter hist;
    for (const auto& r : c.history) {
        hist.f64(static_cast<double>(r.step));
        hist.f64(r.epoch);
        hist.f64(r.lr);
        hist.f64(r.ce);
        hist.f64(r.l_bone);
        hist.f64(r.l_dirt);
        hist.f64(r.total);
    }
    write_block(w, "meta.history", BlockKind::f64, {c.history.size(), kHistoryColumns}, hist);

    for (const auto& b : c.blocks) {
        ByteWriter payload;
        for (double v : b.data) payload.f64(v);
        write_block(w, b.name, BlockKind::f64, b.dims, payload);
    }
    return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::vector<std::uint8_t> bytes) {
    using namespace detail;
    ByteReader r(std::move(bytes));
    const auto* magic = r.take(sizeof kCheckpointMagic, "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
        throw data_error("not a checkpoint file (bad magic)");
    }
    const auto version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw data_error("checkpoint version mismatch: file has " + std::to_string(version) +
                         ", expected " + std::to_string(kCheckpointVersion));
    }
    const auto count = r.u32("block count");
    Checkpoint c;
    bool have_config = false;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.u32("block name length");
        const auto* name_ptr = r.take(name_len, "block name");
        const std::string name(reinterpret_cast<const char*>(name_ptr), name_len);
        const auto kind = static_cast<BlockKind>(r.u8("block kind of " + name));
        const auto ndims = r.u32("dims of " + name);
        std::vector<std::uint64_t> dims(ndims);
        std::uint64_t elements = 1;
        for (auto& d : dims) {
            d = r.u64("dims of " + name);
            elements *= d;
        }
        const auto nbytes = r.u64("payload size of " + name);
        const auto* payload = r.take(nbytes, "payload of block " + name);
        const auto crc = r.u32("checksum of " + name);
        if (crc != crc32_of(payload, nbytes)) {
            throw data_error("checkpoint block '" + name + "' is corrupted (checksum mismatch)");
        }
        if (kind == BlockKind::text) {
            if (name == "meta.config") {
                c.config_echo.assign(reinterpret_cast<const char*>(payload), nbytes);
                have_config = true;
            }
            continue;
        }
        if (kind != BlockKind::f64 || nbytes != elements * 8) {
            throw data_error("checkpoint block '" + name + "' has inconsistent size");
        }
        std::vector<double> data(elements);
        for (std::uint64_t k = 0; k < elements; ++k) {
            std::uint64_t v = 0;
            for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(payload[8 * k + b]) << (8 * b);
            data[k] = std::bit_cast<double>(v);
        }
        if (name == "meta.epoch") {
            c.epoch = static_cast<int>(data.at(0));
        } else if (name == "meta.history") {
            if (dims.size() != 2 || dims[1] != kHistoryColumns) {
                throw data_error("checkpoint block 'meta.history' has unexpected shape");
            }
            for (std::uint64_t row = 0; row < dims[0]; ++row) {
                const double* v = data.data() + row * kHistoryColumns;
                c.history.push_back({static_cast<std::int64_t>(v[0]), static_cast<int>(v[1]), v[2],
                                     v[3], v[4], v[5], v[6]});
            }
        } else {
            c.blocks.push_back({name, std::move(dims), std::move(data)});
        }
    }
    if (!have_config) throw data_error("checkpoint lacks the config block");
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(c);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw data_error("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize_checkpoint(std::move(bytes));
    } catch (const data_error& e) {
        throw data_error(path.string() + ": " + e.what());
    }
}

} // namespace mctseg
