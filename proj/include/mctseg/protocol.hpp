#pragma once

// Run-level building blocks shared by the command-line tool and the experiment
// drivers: data preparation, one training run, test-set evaluation.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mctseg/config.hpp"
#include "mctseg/dataset.hpp"
#include "mctseg/metrics.hpp"
#include "mctseg/model.hpp"
#include "mctseg/patches.hpp"
#include "mctseg/trainer.hpp"

namespace mctseg {

/// Floating-point type of training and evaluation runs.
using RunScalar = float;

struct TrainingData {
    std::vector<LabeledPatch> patches;
    std::optional<RepresentativePatchSet> representatives;
};

inline std::vector<LabeledPatch> extract_all(const std::vector<LabeledImage>& images,
                                             const std::vector<std::string>& ids, const PatchSpec& spec) {
    std::vector<LabeledPatch> out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto p = extract_patches(images[i].image, images[i].labels, spec, ids[i]);
        out.insert(out.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
    }
    return out;
}

inline std::vector<std::string> entry_ids(const DatasetManifest& m) {
    std::vector<std::string> ids;
    for (const auto& e : m.entries) ids.push_back(e.id);
    return ids;
}

/// Representative pools harvested from `images` with the representative window.
inline RepresentativePatchSet harvest_representatives(const std::vector<LabeledImage>& images,
                                                      const std::vector<std::string>& ids,
                                                      const RunConfig& cfg) {
    const auto candidates = extract_all(images, ids, cfg.data.repr_patch);
    return select_representatives(candidates, cfg.data.criteria,
                                  static_cast<std::size_t>(cfg.train.representatives_per_step));
}

inline TrainingData prepare_training_data(const std::vector<LabeledImage>& images,
                                          const std::vector<std::string>& ids, const RunConfig& cfg) {
    if (images.empty()) throw data_error("training set is empty");
    TrainingData d;
    d.patches = extract_all(images, ids, cfg.data.patch);
    if (cfg.train.mode == NetMode::dsrdn) d.representatives = harvest_representatives(images, ids, cfg);
    return d;
}

/// Trains one model from scratch on `train`.
inline Trainer<RunScalar> train_run(const RunConfig& cfg, const std::vector<LabeledImage>& train,
                                    const std::vector<std::string>& ids,
                                    typename Trainer<RunScalar>::StepObserver observer = {}) {
    const auto data = prepare_training_data(train, ids, cfg);
    Trainer<RunScalar> trainer(cfg);
    if (observer) trainer.set_observer(std::move(observer));
    trainer.fit(data.patches, data.representatives ? &*data.representatives : nullptr);
    return trainer;
}

struct Evaluation {
    std::vector<ImageReport> images;
    std::vector<LabelMap> predictions;

    DiceReport pooled() const {
        DiceReport r;
        for (const auto& i : images) r += i.report;
        return r;
    }
};

template <typename Scalar>
Evaluation evaluate(SegmentationModel<Scalar>& model, const std::vector<LabeledImage>& test,
                    const std::vector<std::string>& ids) {
    Evaluation ev;
    for (std::size_t i = 0; i < test.size(); ++i) {
        auto pred = predict_labels(model.predict(test[i].image));
        ev.images.push_back({ids[i], dice(pred, test[i].labels)});
        ev.predictions.push_back(std::move(pred));
    }
    return ev;
}

/// Mean squared responses of both banks on a representative set.
struct Discriminability {
    BankResponse bone_bank;
    BankResponse dirt_bank;

    bool holds() const noexcept {
        return bone_bank.on_bone > bone_bank.on_dirt && dirt_bank.on_dirt > dirt_bank.on_bone;
    }
};

template <typename Scalar>
Discriminability measure_discriminability(const RepresentationLayer<Scalar>& layer,
                                          const RepresentativePatchSet& set) {
    const auto [b, d] = layer.responses(stack_images<Scalar>(set.bone_patches),
                                        stack_images<Scalar>(set.dirt_patches));
    return {b, d};
}

} // namespace mctseg
