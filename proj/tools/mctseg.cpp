// mctseg: phantom generation, patch preparation, training, evaluation and the
// two multi-run experiments.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mctseg/mctseg.hpp"

namespace fs = std::filesystem;
using namespace mctseg;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

/// Flags shared by every subcommand; each overrides the matching config key.
struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode;
    std::optional<int> train_count;
    std::optional<int> splits;
    std::vector<std::string> set;

    void attach(CLI::App* app, bool out_required = true) {
        app->add_option("--config", config, "key = value configuration file")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "master seed");
        auto* o = app->add_option("--out", out, "output directory");
        if (out_required) o->required();
        app->add_option("--mode", mode, "dsrdn or plain")->check(CLI::IsMember({"dsrdn", "plain"}));
        app->add_option("--train-count", train_count, "number of training images");
        app->add_option("--splits", splits, "number of random train/test splits");
        app->add_option("--set", set, "extra key=value overrides")->take_all();
    }

    RunConfig resolve(bool seed_is_phantom = false) const {
        RunConfig cfg;
        if (!config.empty()) cfg = load_config(config, cfg);
        for (const auto& kv : set) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + kv + "'");
            set_config_value(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
        }
        if (seed) (seed_is_phantom ? cfg.phantom.seed : cfg.train.seed) = *seed;
        if (!mode.empty()) cfg.train.mode = parse_mode(mode);
        if (train_count) cfg.experiment.train_count = *train_count;
        if (splits) cfg.experiment.splits = *splits;
        cfg.validate();
        return cfg;
    }
};

void log(const std::string& msg) { std::cerr << msg << std::endl; }

std::string f4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

void print_report(const std::string& title, const DiceReport& r) {
    std::cout << title << ": air " << f4(r.f1(Tissue::air)) << "  dirt " << f4(r.f1(Tissue::dirt)) << "  bone "
              << f4(r.f1(Tissue::bone)) << '\n';
}

int cmd_phantom(const CommonFlags& flags, int count) {
    if (count < 1) throw config_error("--count must be >= 1");
    const auto cfg = flags.resolve(true);
    const OutputLayout out{flags.out};
    out.create();
    out.write_config_echo(cfg);
    const auto manifest = generate_dataset(cfg.phantom, count, flags.out);
    std::array<double, kNumClasses> sum{};
    for (const auto& e : manifest.entries) {
        const auto pair = load_entry(e);
        for (int c = 0; c < kNumClasses; ++c) sum[c] += pair.labels.fraction(static_cast<Tissue>(c));
    }
    std::cout << "wrote " << manifest.size() << " slices to " << flags.out << "/manifest.tsv\n";
    std::cout << "mean class fractions: air " << f4(sum[0] / count) << "  dirt " << f4(sum[1] / count) << "  bone "
              << f4(sum[2] / count) << '\n';
    return kOk;
}

int cmd_extract(const CommonFlags& flags, const std::string& manifest_path) {
    const auto cfg = flags.resolve();
    const OutputLayout out{flags.out};
    out.create();
    out.write_config_echo(cfg);
    const auto manifest = read_manifest(manifest_path);
    write_manifest(out.manifests() / "input.tsv", manifest);
    const auto data = Dataset::load(manifest);
    const auto patches = extract_all(data.images, data.ids, cfg.data.patch);
    {
        std::ofstream idx(out.reports() / "patches.tsv", std::ios::binary);
        idx << "index\tsource\trow\tcol\tair\tdirt\tbone\n";
        for (std::size_t i = 0; i < patches.size(); ++i) {
            const auto& p = patches[i];
            idx << i << '\t' << p.source_id << '\t' << p.row << '\t' << p.col;
            for (int c = 0; c < kNumClasses; ++c) {
                idx << '\t' << detail::format_double(p.labels.fraction(static_cast<Tissue>(c)));
            }
            idx << '\n';
        }
    }
    const auto reps = harvest_representatives(data.images, data.ids, cfg);
    export_representatives(reps, out.figures() / "representatives");
    std::cout << patches.size() << " training patches (" << cfg.data.patch.window << "/" << cfg.data.patch.stride
              << "), representatives: " << reps.bone_patches.size() << " bone, " << reps.dirt_patches.size()
              << " dirt\n";
    return kOk;
}

int cmd_train(const CommonFlags& flags, const std::string& manifest_path) {
    const auto cfg = flags.resolve();
    const OutputLayout out{flags.out};
    out.create();
    out.write_config_echo(cfg);
    auto manifest = read_manifest(manifest_path);
    if (flags.train_count) {
        auto [train, test] = make_splits(manifest, static_cast<std::size_t>(cfg.experiment.train_count),
                                         cfg.train.seed);
        write_manifest(out.manifests() / "test.tsv", test);
        manifest = std::move(train);
    }
    write_manifest(out.manifests() / "train.tsv", manifest);
    const auto data = Dataset::load(manifest);
    int last_epoch = -1;
    auto trainer = train_run(cfg, data.images, data.ids, [&](const HistoryRow& r) {
        if (r.epoch != last_epoch) {
            last_epoch = r.epoch;
            log("epoch " + std::to_string(r.epoch) + " lr " + detail::format_double(r.lr) + " total " +
                detail::format_double(r.total));
        }
    });
    save_checkpoint(trainer.checkpoint(), out.checkpoints() / "final.ckpt");
    write_history_csv(out.reports() / "loss.csv", trainer.history());
    const auto& last = trainer.history().back();
    std::cout << "trained " << to_string(cfg.train.mode) << " for " << cfg.train.epochs << " epochs ("
              << trainer.history().size() << " steps), final total loss " << detail::format_double(last.total)
              << "\ncheckpoint: " << (out.checkpoints() / "final.ckpt").string() << '\n';
    return kOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& checkpoint_path, const std::string& manifest_path) {
    const auto ckpt = load_checkpoint(checkpoint_path);
    std::optional<NetMode> expected;
    if (!flags.mode.empty()) expected = parse_mode(flags.mode);
    auto trainer = Trainer<RunScalar>::restore(ckpt, expected);
    const OutputLayout out{flags.out};
    out.create();
    out.write_config_echo(trainer.config());
    const auto manifest = read_manifest(manifest_path);
    write_manifest(out.manifests() / "test.tsv", manifest);
    const auto data = Dataset::load(manifest);
    const auto ev = evaluate(trainer.model(), data.images, data.ids);
    write_dice_csv(out.reports() / "dice.csv", ev.images);
    OutputLayout::write_text(out.reports() / "summary.json", dice_summary_json(ev.images));
    const auto maps = out.figures() / "error_maps";
    fs::create_directories(maps);
    for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto em = error_map(ev.predictions[i], data.images[i].labels, data.images[i].image);
        write_rgb_png(maps / (data.ids[i] + ".png"), em.image);
    }
    for (const auto& r : ev.images) print_report(r.id, r.report);
    print_report("pooled", ev.pooled());
    return kOk;
}

int cmd_errmap(const CommonFlags& flags, const std::string& checkpoint_path, const std::string& image,
               const std::string& label) {
    const auto ckpt = load_checkpoint(checkpoint_path);
    std::optional<NetMode> expected;
    if (!flags.mode.empty()) expected = parse_mode(flags.mode);
    auto trainer = Trainer<RunScalar>::restore(ckpt, expected);
    const auto pair = load_pair(image, label);
    const auto pred = predict_labels(trainer.model().predict(pair.image));
    const auto em = error_map(pred, pair.labels, pair.image);
    const fs::path out(flags.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_rgb_png(out, em.image);
    std::cout << em.error_pixels << " misclassified pixels written to " << out.string() << '\n';
    return kOk;
}

void print_cells(const Experiment1Result& res, const RunConfig& cfg) {
    const auto& ex = cfg.experiment;
    for (auto mode : {NetMode::dsrdn, NetMode::plain}) {
        for (int size : {ex.train_count, ex.reduced_train_count}) {
            std::cout << to_string(mode) << " n=" << size << " median F1:";
            for (int c = 0; c < kNumClasses; ++c) {
                std::cout << ' ' << kClassNames[c] << ' ' << f4(median(res.cell(mode, size, static_cast<Tissue>(c))));
            }
            std::cout << '\n';
        }
        std::cout << to_string(mode) << " median dirt degradation "
                  << f4(median(res.degradation(mode, ex.train_count, ex.reduced_train_count, Tissue::dirt))) << '\n';
    }
}

int cmd_exp1(const CommonFlags& flags, const std::string& manifest_path) {
    const auto cfg = flags.resolve();
    const auto res = experiment1(cfg, read_manifest(manifest_path), flags.out, log);
    print_cells(res, cfg);
    return kOk;
}

int cmd_exp2(const CommonFlags& flags, const std::string& manifest_path) {
    const auto cfg = flags.resolve();
    const auto res = experiment2(cfg, read_manifest(manifest_path), flags.out, log);
    for (auto mode : {NetMode::dsrdn, NetMode::plain}) {
        const auto d = res.distribution(mode);
        std::cout << to_string(mode) << " over " << d.runs << " splits:";
        for (int c = 0; c < kNumClasses; ++c) {
            std::cout << ' ' << kClassNames[c] << ' ' << f4(d.classes[c].mean) << " (var "
                      << detail::format_double(d.classes[c].variance) << ')';
        }
        std::cout << '\n';
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Micro-CT bone/dirt segmentation with a discriminative representation layer"};
    app.require_subcommand(1);

    CommonFlags phantom_f, extract_f, train_f, eval_f, exp1_f, exp2_f, errmap_f;
    int count = 33;
    std::string manifest, checkpoint, image, label;

    auto* phantom = app.add_subcommand("phantom", "generate synthetic labeled slices");
    phantom_f.attach(phantom);
    phantom->add_option("--count", count, "number of slices");

    auto* extract = app.add_subcommand("extract", "extract training patches and representative sets");
    extract_f.attach(extract);
    extract->add_option("--manifest", manifest, "dataset manifest")->required();

    auto* train = app.add_subcommand("train", "train one model");
    train_f.attach(train);
    train->add_option("--manifest", manifest, "training manifest")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a test manifest");
    eval_f.attach(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--manifest", manifest, "test manifest")->required();

    auto* exp1 = app.add_subcommand("exp1", "full vs reduced training size, both modes, several seeds");
    exp1_f.attach(exp1);
    exp1->add_option("--manifest", manifest, "corpus manifest")->required();

    auto* exp2 = app.add_subcommand("exp2", "repeated random train/test splits, both modes");
    exp2_f.attach(exp2);
    exp2->add_option("--manifest", manifest, "corpus manifest")->required();

    auto* errmap = app.add_subcommand("errmap", "error map of one labeled image");
    errmap_f.attach(errmap);
    errmap->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    errmap->add_option("--image", image, "image file (PNG/PGM)")->required();
    errmap->add_option("--label", label, "label file (PNG/PGM)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*phantom) return cmd_phantom(phantom_f, count);
        if (*extract) return cmd_extract(extract_f, manifest);
        if (*train) return cmd_train(train_f, manifest);
        if (*eval) return cmd_eval(eval_f, checkpoint, manifest);
        if (*exp1) return cmd_exp1(exp1_f, manifest);
        if (*exp2) return cmd_exp2(exp2_f, manifest);
        if (*errmap) return cmd_errmap(errmap_f, checkpoint, image, label);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const divergence_error& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
