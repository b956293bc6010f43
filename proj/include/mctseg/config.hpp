#pragma once

// Run configuration: every hyperparameter of a run in one flat `key = value`
// namespace. The echo written by each command parses back to the same values.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mctseg/error.hpp"
#include "mctseg/patches.hpp"
#include "mctseg/phantom.hpp"
#include "mctseg/reprlayer.hpp"

namespace mctseg {

enum class NetMode { dsrdn, plain };

inline const char* to_string(NetMode m) { return m == NetMode::dsrdn ? "dsrdn" : "plain"; }

inline NetMode parse_mode(const std::string& s) {
    if (s == "dsrdn") return NetMode::dsrdn;
    if (s == "plain") return NetMode::plain;
    throw config_error("unknown mode '" + s + "' (expected dsrdn or plain)");
}

/// Segmentation loss: `literal` scores only the true channel, -log sigmoid(z_true);
/// `binary` adds -log(1 - sigmoid(z)) for every other channel.
enum class SegLoss { literal, binary };

inline const char* to_string(SegLoss l) { return l == SegLoss::literal ? "literal" : "binary"; }

inline SegLoss parse_seg_loss(const std::string& s) {
    if (s == "literal") return SegLoss::literal;
    if (s == "binary") return SegLoss::binary;
    throw config_error("unknown seg_loss '" + s + "' (expected literal or binary)");
}

struct TrainConfig {
    ReprLossCoefficients coeffs;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    int batch_size = 44;
    int epochs = 25;
    double base_lr = 1.0;
    double lr_drop_factor = 0.1;
    int lr_drop_period = 8;
    double momentum = 0.0;
    std::uint64_t seed = 1;
    int representatives_per_step = 8; // P
    NetMode mode = NetMode::dsrdn;
    SegLoss seg_loss = SegLoss::binary;

    void validate() const {
        coeffs.validate();
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw config_error("lambda1/lambda2 must be >= 0");
        if (batch_size < 1) throw config_error("batch_size must be >= 1");
        if (epochs < 1) throw config_error("epochs must be >= 1");
        if (!(base_lr >= 0.0)) throw config_error("base_lr must be >= 0");
        if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) {
            throw config_error("lr_drop_factor must lie in (0, 1]");
        }
        if (lr_drop_period < 1) throw config_error("lr_drop_period must be >= 1");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw config_error("momentum must lie in [0, 1)");
        if (representatives_per_step < 1) throw config_error("P must be >= 1");
    }
};

struct ModelConfig {
    int filters = 16; // K per bank
    int filter_size = 3;
    int depth = 4;
    int base_width = 16;
    int max_width = 128;
    bool include_raw_input = false;
};

struct DataConfig {
    PatchSpec patch{64, 16};
    PatchSpec repr_patch{12, 4};
    RepresentativeCriteria criteria;
};

struct ExperimentConfig {
    int phantom_count = 33;
    int train_count = 20;
    int reduced_train_count = 10;
    int splits = 10;
    int repeats = 3; // seeds per (mode, size) cell in the reduced-training experiment
};

struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    DataConfig data;
    PhantomConfig phantom;
    ExperimentConfig experiment;

    void validate() const {
        train.validate();
        data.patch.validate();
        data.repr_patch.validate();
        phantom.validate();
        if (model.filters < 1 || model.filter_size < 1 || model.filter_size % 2 == 0) {
            throw config_error("filters must be >= 1 and filter_size odd");
        }
    }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw config_error("config key '" + key + "': cannot parse '" + text + "'");
    }
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw config_error("config key '" + key + "': expected true/false, got '" + text + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline std::vector<std::pair<std::string, Field>> build_fields() {
    std::vector<std::pair<std::string, Field>> f;
    auto dbl = [&f](const std::string& key, auto accessor) {
        f.push_back({key,
                     {[accessor](const RunConfig& c) {
                          return format_double(accessor(c));
                      },
                      [accessor, key](RunConfig& c, const std::string& v) {
                          accessor(c) = parse_number<double>(key, v);
                      }}});
    };
    auto integer = [&f](const std::string& key, auto accessor) {
        f.push_back({key,
                     {[accessor](const RunConfig& c) {
                          return std::to_string(accessor(c));
                      },
                      [accessor, key](RunConfig& c, const std::string& v) {
                          using T = std::remove_reference_t<decltype(accessor(c))>;
                          accessor(c) = parse_number<T>(key, v);
                      }}});
    };
    auto size = [&f](const std::string& key, auto accessor) {
        f.push_back({key,
                     {[accessor](const RunConfig& c) {
                          return std::to_string(accessor(c));
                      },
                      [accessor, key](RunConfig& c, const std::string& v) {
                          accessor(c) = parse_number<std::size_t>(key, v);
                      }}});
    };

    dbl("alpha", [](auto& c) -> auto& { return c.train.coeffs.alpha; });
    dbl("beta", [](auto& c) -> auto& { return c.train.coeffs.beta; });
    dbl("gamma", [](auto& c) -> auto& { return c.train.coeffs.gamma; });
    dbl("sigma", [](auto& c) -> auto& { return c.train.coeffs.sigma; });
    dbl("zeta", [](auto& c) -> auto& { return c.train.coeffs.zeta; });
    dbl("lambda1", [](auto& c) -> auto& { return c.train.lambda1; });
    dbl("lambda2", [](auto& c) -> auto& { return c.train.lambda2; });
    integer("batch_size", [](auto& c) -> auto& { return c.train.batch_size; });
    integer("epochs", [](auto& c) -> auto& { return c.train.epochs; });
    dbl("base_lr", [](auto& c) -> auto& { return c.train.base_lr; });
    dbl("lr_drop_factor", [](auto& c) -> auto& { return c.train.lr_drop_factor; });
    integer("lr_drop_period", [](auto& c) -> auto& { return c.train.lr_drop_period; });
    dbl("momentum", [](auto& c) -> auto& { return c.train.momentum; });
    integer("seed", [](auto& c) -> auto& { return c.train.seed; });
    integer("P", [](auto& c) -> auto& { return c.train.representatives_per_step; });
    f.push_back({"mode",
                 {[](const RunConfig& c) { return std::string(to_string(c.train.mode)); },
                  [](RunConfig& c, const std::string& v) { c.train.mode = parse_mode(v); }}});
    f.push_back({"seg_loss",
                 {[](const RunConfig& c) { return std::string(to_string(c.train.seg_loss)); },
                  [](RunConfig& c, const std::string& v) { c.train.seg_loss = parse_seg_loss(v); }}});

    integer("filters", [](auto& c) -> auto& { return c.model.filters; });
    integer("filter_size", [](auto& c) -> auto& { return c.model.filter_size; });
    integer("depth", [](auto& c) -> auto& { return c.model.depth; });
    integer("base_width", [](auto& c) -> auto& { return c.model.base_width; });
    integer("max_width", [](auto& c) -> auto& { return c.model.max_width; });
    f.push_back({"include_raw_input",
                 {[](const RunConfig& c) { return std::string(c.model.include_raw_input ? "true" : "false"); },
                  [](RunConfig& c, const std::string& v) {
                      c.model.include_raw_input = parse_bool("include_raw_input", v);
                  }}});

    integer("window", [](auto& c) -> auto& { return c.data.patch.window; });
    integer("stride", [](auto& c) -> auto& { return c.data.patch.stride; });
    integer("repr_window", [](auto& c) -> auto& { return c.data.repr_patch.window; });
    integer("repr_stride", [](auto& c) -> auto& { return c.data.repr_patch.stride; });
    dbl("bone_min_fraction", [](auto& c) -> auto& { return c.data.criteria.bone_min_fraction; });
    dbl("dirt_min_fraction", [](auto& c) -> auto& { return c.data.criteria.dirt_min_fraction; });
    dbl("other_max_fraction", [](auto& c) -> auto& { return c.data.criteria.other_max_fraction; });
    size("max_per_class", [](auto& c) -> auto& { return c.data.criteria.max_per_class; });

    integer("phantom_width", [](auto& c) -> auto& { return c.phantom.width; });
    integer("phantom_height", [](auto& c) -> auto& { return c.phantom.height; });
    dbl("bone_fraction", [](auto& c) -> auto& { return c.phantom.bone_fraction_target; });
    dbl("dirt_fraction", [](auto& c) -> auto& { return c.phantom.dirt_fraction_target; });
    dbl("intensity_overlap", [](auto& c) -> auto& { return c.phantom.intensity_overlap; });
    dbl("noise_sigma", [](auto& c) -> auto& { return c.phantom.noise_sigma; });
    dbl("structure_scale", [](auto& c) -> auto& { return c.phantom.structure_scale; });
    integer("phantom_seed", [](auto& c) -> auto& { return c.phantom.seed; });

    integer("phantom_count", [](auto& c) -> auto& { return c.experiment.phantom_count; });
    integer("train_count", [](auto& c) -> auto& { return c.experiment.train_count; });
    integer("reduced_train_count", [](auto& c) -> auto& { return c.experiment.reduced_train_count; });
    integer("splits", [](auto& c) -> auto& { return c.experiment.splits; });
    integer("repeats", [](auto& c) -> auto& { return c.experiment.repeats; });
    return f;
}

inline const std::vector<std::pair<std::string, Field>>& fields() {
    static const auto table = build_fields();
    return table;
}

} // namespace detail

/// Sets one key; unknown keys are an error.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& [name, field] : detail::fields()) {
        if (name == key) {
            field.set(cfg, value);
            return;
        }
    }
    throw config_error("unknown config key '" + key + "'");
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
    for (const auto& [name, field] : detail::fields()) {
        if (name == key) return field.get(cfg);
    }
    throw config_error("unknown config key '" + key + "'");
}

/// Applies `key = value` lines ('#' starts a comment) on top of `cfg`.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config") {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(base, ss.str(), path.string());
    return base;
}

/// Every key in table order, one `key = value` per line.
inline std::string config_echo(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : detail::fields()) {
        out += name + " = " + field.get(cfg) + "\n";
    }
    return out;
}

} // namespace mctseg
