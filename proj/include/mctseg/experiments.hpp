#pragma once

// Multi-run protocols: the reduced-training-size comparison (experiment 1) and
// the repeated random-split comparison (experiment 2). Every run writes its
// checkpoint, loss history and Dice table under the output directory.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mctseg/checkpoint.hpp"
#include "mctseg/config.hpp"
#include "mctseg/dataset.hpp"
#include "mctseg/metrics.hpp"
#include "mctseg/protocol.hpp"

namespace mctseg {

using ProgressSink = std::function<void(const std::string&)>;

/// Standard output layout below a run directory.
struct OutputLayout {
    std::filesystem::path root;

    std::filesystem::path checkpoints() const { return root / "checkpoints"; }
    std::filesystem::path reports() const { return root / "reports"; }
    std::filesystem::path figures() const { return root / "figures"; }
    std::filesystem::path manifests() const { return root / "manifests"; }

    void create() const {
        for (const auto& d : {root, checkpoints(), reports(), figures(), manifests()}) {
            std::error_code ec;
            std::filesystem::create_directories(d, ec);
            if (ec) throw data_error("cannot create directory " + d.string() + ": " + ec.message());
        }
    }

    void write_config_echo(const RunConfig& cfg) const { write_text(root / "config.echo", config_echo(cfg)); }

    static void write_text(const std::filesystem::path& path, const std::string& text) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw data_error("cannot write " + path.string());
        out << text;
    }
};

struct RunRecord {
    std::string tag;
    NetMode mode = NetMode::dsrdn;
    int train_size = 0;
    std::uint64_t seed = 0;
    int split = -1;
    DiceReport pooled;
    std::optional<Discriminability> discriminability; // dsrdn runs, held-out representatives
};

struct Dataset {
    std::vector<LabeledImage> images;
    std::vector<std::string> ids;

    static Dataset load(const DatasetManifest& m) { return {load_all(m), entry_ids(m)}; }
};

/// Trains on `train`, evaluates on `test`, and writes
///   checkpoints/<tag>.ckpt, reports/runs/<tag>_loss.csv, reports/runs/<tag>_dice.csv.
inline RunRecord train_and_evaluate(const RunConfig& cfg, const Dataset& train, const Dataset& test,
                                    const OutputLayout& out, const std::string& tag) {
    auto trainer = train_run(cfg, train.images, train.ids);
    save_checkpoint(trainer.checkpoint(), out.checkpoints() / (tag + ".ckpt"));
    const auto runs = out.reports() / "runs";
    std::filesystem::create_directories(runs);
    write_history_csv(runs / (tag + "_loss.csv"), trainer.history());
    const auto ev = evaluate(trainer.model(), test.images, test.ids);
    write_dice_csv(runs / (tag + "_dice.csv"), ev.images);

    RunRecord r;
    r.tag = tag;
    r.mode = cfg.train.mode;
    r.train_size = static_cast<int>(train.images.size());
    r.seed = cfg.train.seed;
    r.pooled = ev.pooled();
    if (cfg.train.mode == NetMode::dsrdn) {
        const auto held_out = harvest_representatives(test.images, test.ids, cfg);
        r.discriminability = measure_discriminability(trainer.model().repr(), held_out);
    }
    return r;
}

inline void write_run_table(const std::filesystem::path& path, const std::vector<RunRecord>& runs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << "tag,mode,train_size,seed,split,f1_air,f1_dirt,f1_bone,"
           "bone_bank_on_bone,bone_bank_on_dirt,dirt_bank_on_bone,dirt_bank_on_dirt\n";
    using detail::format_double;
    for (const auto& r : runs) {
        out << r.tag << ',' << to_string(r.mode) << ',' << r.train_size << ',' << r.seed << ',' << r.split;
        for (int c = 0; c < kNumClasses; ++c) out << ',' << format_double(r.pooled.f1(c));
        if (r.discriminability) {
            const auto& d = *r.discriminability;
            out << ',' << format_double(d.bone_bank.on_bone) << ',' << format_double(d.bone_bank.on_dirt)
                << ',' << format_double(d.dirt_bank.on_bone) << ',' << format_double(d.dirt_bank.on_dirt);
        } else {
            out << ",,,,";
        }
        out << '\n';
    }
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw data_error("median of an empty list");
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- experiment 1 -------------------------------------------------------------

struct Experiment1Result {
    std::vector<RunRecord> runs; // mode x size x seed
    DatasetManifest train;
    DatasetManifest test;

    /// Pooled F1 of `cls` for every seed of one (mode, size) cell, in seed order.
    std::vector<double> cell(NetMode mode, int size, Tissue cls) const {
        std::vector<double> v;
        for (const auto& r : runs) {
            if (r.mode == mode && r.train_size == size) v.push_back(r.pooled.f1(cls));
        }
        return v;
    }

    /// F1(full) - F1(reduced) per seed.
    std::vector<double> degradation(NetMode mode, int full, int reduced, Tissue cls) const {
        const auto a = cell(mode, full, cls);
        const auto b = cell(mode, reduced, cls);
        std::vector<double> d;
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) d.push_back(a[i] - b[i]);
        return d;
    }
};

inline Experiment1Result experiment1(const RunConfig& cfg, const DatasetManifest& corpus,
                                     const std::filesystem::path& out_dir, const ProgressSink& progress = {}) {
    cfg.validate();
    const OutputLayout out{out_dir};
    out.create();
    out.write_config_echo(cfg);
    const auto& ex = cfg.experiment;
    if (ex.repeats < 1) throw config_error("repeats must be >= 1");
    if (ex.reduced_train_count < 1 || ex.reduced_train_count > ex.train_count) {
        throw config_error("reduced_train_count must lie in [1, train_count]");
    }
    Experiment1Result res;
    std::tie(res.train, res.test) = make_splits(corpus, static_cast<std::size_t>(ex.train_count), cfg.train.seed);
    write_manifest(out.manifests() / "train.tsv", res.train);
    write_manifest(out.manifests() / "test.tsv", res.test);
    const auto test = Dataset::load(res.test);
    const auto full = Dataset::load(res.train);

    const std::array<NetMode, 2> modes{NetMode::dsrdn, NetMode::plain};
    const std::array<int, 2> sizes{ex.train_count, ex.reduced_train_count};
    for (auto mode : modes) {
        for (int size : sizes) {
            for (int r = 0; r < ex.repeats; ++r) {
                RunConfig run = cfg;
                run.train.mode = mode;
                run.train.seed = cfg.train.seed + static_cast<std::uint64_t>(r);
                const auto subset =
                    size == ex.train_count
                        ? res.train
                        : subsample_train(res.train, static_cast<std::size_t>(size), run.train.seed);
                const std::string tag = std::string(to_string(mode)) + "_n" + std::to_string(size) + "_s" +
                                        std::to_string(run.train.seed);
                if (progress) progress("exp1: training " + tag);
                auto rec = train_and_evaluate(run, size == ex.train_count ? full : Dataset::load(subset), test,
                                              out, tag);
                if (progress) {
                    progress("exp1: " + tag + " pooled F1 air=" + detail::format_double(rec.pooled.f1(0)) +
                             " dirt=" + detail::format_double(rec.pooled.f1(1)) +
                             " bone=" + detail::format_double(rec.pooled.f1(2)));
                }
                res.runs.push_back(std::move(rec));
            }
        }
    }
    write_run_table(out.reports() / "exp1_runs.csv", res.runs);

    std::ofstream deltas(out.reports() / "exp1_degradation.csv", std::ios::binary);
    deltas << "mode,seed_index,delta_air,delta_dirt,delta_bone\n";
    std::ofstream fig(out.figures() / "exp1_f1_by_size.csv", std::ios::binary);
    fig << "mode,train_size,class,median_f1,min_f1,max_f1\n";
    for (auto mode : modes) {
        std::array<std::vector<double>, kNumClasses> d;
        for (int c = 0; c < kNumClasses; ++c) {
            d[c] = res.degradation(mode, sizes[0], sizes[1], static_cast<Tissue>(c));
            for (int size : sizes) {
                const auto v = res.cell(mode, size, static_cast<Tissue>(c));
                fig << to_string(mode) << ',' << size << ',' << kClassNames[c] << ','
                    << detail::format_double(median(v)) << ','
                    << detail::format_double(*std::min_element(v.begin(), v.end())) << ','
                    << detail::format_double(*std::max_element(v.begin(), v.end())) << '\n';
            }
        }
        for (std::size_t i = 0; i < d[0].size(); ++i) {
            deltas << to_string(mode) << ',' << i << ',' << detail::format_double(d[0][i]) << ','
                   << detail::format_double(d[1][i]) << ',' << detail::format_double(d[2][i]) << '\n';
        }
    }
    return res;
}

// --- experiment 2 -------------------------------------------------------------

inline constexpr std::uint64_t kSplitStream = 0xE2;

struct Experiment2Result {
    std::vector<RunRecord> runs; // split-major, dsrdn then plain

    std::vector<DiceReport> reports(NetMode mode) const {
        std::vector<DiceReport> v;
        for (const auto& r : runs) {
            if (r.mode == mode) v.push_back(r.pooled);
        }
        return v;
    }
    SplitDistribution distribution(NetMode mode) const { return summarize_splits(reports(mode)); }
};

inline Experiment2Result experiment2(const RunConfig& cfg, const DatasetManifest& corpus,
                                     const std::filesystem::path& out_dir, const ProgressSink& progress = {}) {
    cfg.validate();
    const auto& ex = cfg.experiment;
    if (ex.splits < 2) throw config_error("experiment 2 needs at least 2 splits");
    const OutputLayout out{out_dir};
    out.create();
    out.write_config_echo(cfg);
    Experiment2Result res;
    for (int s = 0; s < ex.splits; ++s) {
        const auto split_seed = derive_seed(cfg.train.seed, kSplitStream, static_cast<std::uint64_t>(s));
        const auto [train_m, test_m] = make_splits(corpus, static_cast<std::size_t>(ex.train_count), split_seed);
        write_manifest(out.manifests() / ("split" + std::to_string(s) + "_train.tsv"), train_m);
        write_manifest(out.manifests() / ("split" + std::to_string(s) + "_test.tsv"), test_m);
        const auto train = Dataset::load(train_m);
        const auto test = Dataset::load(test_m);
        for (auto mode : {NetMode::dsrdn, NetMode::plain}) {
            RunConfig run = cfg;
            run.train.mode = mode;
            run.train.seed = cfg.train.seed + static_cast<std::uint64_t>(s);
            const std::string tag = "split" + std::to_string(s) + "_" + to_string(mode);
            if (progress) progress("exp2: training " + tag);
            auto rec = train_and_evaluate(run, train, test, out, tag);
            rec.split = s;
            if (progress) {
                progress("exp2: " + tag + " pooled F1 air=" + detail::format_double(rec.pooled.f1(0)) +
                         " dirt=" + detail::format_double(rec.pooled.f1(1)) +
                         " bone=" + detail::format_double(rec.pooled.f1(2)));
            }
            res.runs.push_back(std::move(rec));
        }
    }
    write_run_table(out.reports() / "exp2_runs.csv", res.runs);

    std::ofstream summary(out.reports() / "exp2_summary.csv", std::ios::binary);
    summary << "mode,class,mean_f1,variance_f1,runs\n";
    for (auto mode : {NetMode::dsrdn, NetMode::plain}) {
        const auto d = res.distribution(mode);
        for (int c = 0; c < kNumClasses; ++c) {
            summary << to_string(mode) << ',' << kClassNames[c] << ',' << detail::format_double(d.classes[c].mean)
                    << ',' << detail::format_double(d.classes[c].variance) << ',' << d.runs << '\n';
        }
        write_density_table(out.figures() / (std::string("exp2_density_") + to_string(mode) + ".csv"), d,
                            to_string(mode));
    }
    return res;
}

} // namespace mctseg
