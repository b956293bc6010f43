#pragma once

// Joint optimization of the representation banks and the segmentation network
// under  L = CE + lambda1 * L_bone + lambda2 * L_dirt  with plain (optionally
// momentum) SGD and a step-decay learning rate.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mctseg/checkpoint.hpp"
#include "mctseg/config.hpp"
#include "mctseg/error.hpp"
#include "mctseg/model.hpp"
#include "mctseg/patches.hpp"
#include "mctseg/rng.hpp"

namespace mctseg {

namespace detail {

inline double round_significant(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
    return std::strtod(buf, nullptr);
}

} // namespace detail

/// base_lr * drop^floor(epoch / period). Rounded to 15 significant digits so the
/// plateaus equal their decimal values (1e-4 * 0.1^3 == 1e-7 exactly).
inline double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) {
        throw config_error("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                           std::to_string(cfg.epochs) + ")");
    }
    const int drops = epoch / cfg.lr_drop_period;
    return detail::round_significant(cfg.base_lr * std::pow(cfg.lr_drop_factor, drops), 15);
}

struct LossComponents {
    double ce = 0.0;
    double l_bone = 0.0;
    double l_dirt = 0.0;
    double total = 0.0;
};

/// CE + lambda1 * L_bone + lambda2 * L_dirt (dsrdn); CE alone in plain mode.
inline LossComponents compose_total(double ce, const ReprLosses& repr, const TrainConfig& cfg) {
    LossComponents c{ce, repr.bone, repr.dirt, ce};
    if (cfg.mode == NetMode::dsrdn) c.total = ce + cfg.lambda1 * repr.bone + cfg.lambda2 * repr.dirt;
    return c;
}

/// Representative patches drawn for one step, already stacked.
template <typename Scalar>
struct RepresentativeBatch {
    nn::Tensor<Scalar> bone;
    nn::Tensor<Scalar> dirt;
};

template <typename Scalar>
RepresentativeBatch<Scalar> draw_representatives(const RepresentativePatchSet& set,
                                                 std::uint64_t seed, std::uint64_t step) {
    const auto d = balanced_sample_indices(set, seed, step);
    std::vector<GrayImage> bone, dirt;
    for (auto i : d.bone_indices) bone.push_back(set.bone_patches[i]);
    for (auto i : d.dirt_indices) dirt.push_back(set.dirt_patches[i]);
    return {stack_images<Scalar>(bone), stack_images<Scalar>(dirt)};
}

/// Evaluates the complete objective in training mode. With `with_grad`, the
/// model's parameter gradients are zeroed and then filled with dL/dtheta.
template <typename Scalar>
LossComponents total_loss(SegmentationModel<Scalar>& model, const nn::Tensor<Scalar>& x,
                          const std::vector<std::uint8_t>& labels,
                          const RepresentativeBatch<Scalar>* reps, const TrainConfig& cfg,
                          bool with_grad) {
    if (model.mode() == NetMode::dsrdn && !reps) {
        throw data_error("dsrdn mode needs representative bone/dirt patches");
    }
    if (with_grad) model.zero_grad();
    const auto& logits = model.forward(x, true);
    nn::Tensor<Scalar> dlogits;
    auto* dl = with_grad ? &dlogits : nullptr;
    const double ce = cfg.seg_loss == SegLoss::literal ? cross_entropy(logits, labels, dl)
                                                       : binary_cross_entropy(logits, labels, dl);
    if (with_grad) model.backward(x, dlogits);
    ReprLosses repr;
    if (model.mode() == NetMode::dsrdn) {
        repr = model.repr().losses(reps->bone, reps->dirt, cfg.coeffs, with_grad, cfg.lambda1,
                                   cfg.lambda2);
    }
    return compose_total(ce, repr, cfg);
}

/// Patch batch in training layout.
template <typename Scalar>
struct PatchBatch {
    nn::Tensor<Scalar> images;
    std::vector<std::uint8_t> labels;
};

template <typename Scalar>
PatchBatch<Scalar> make_batch(const std::vector<LabeledPatch>& patches,
                              const std::vector<std::size_t>& indices) {
    std::vector<GrayImage> images;
    images.reserve(indices.size());
    PatchBatch<Scalar> b;
    for (auto i : indices) {
        images.push_back(patches[i].image);
        const auto& l = patches[i].labels.values();
        b.labels.insert(b.labels.end(), l.begin(), l.end());
    }
    b.images = stack_images<Scalar>(images);
    return b;
}

/// Stream identifiers for seed derivation.
inline constexpr std::uint64_t kShuffleStream = 0xE90C;
inline constexpr std::uint64_t kRepresentativeStream = 0x4E95;

template <typename Scalar>
class Trainer {
public:
    using StepObserver = std::function<void(const HistoryRow&)>;

    explicit Trainer(RunConfig cfg)
        : cfg_(std::move(cfg)), model_(cfg_.train.mode, cfg_.model) {
        cfg_.validate();
        model_.initialize(cfg_.train.seed);
    }

    const RunConfig& config() const noexcept { return cfg_; }
    SegmentationModel<Scalar>& model() noexcept { return model_; }
    const std::vector<HistoryRow>& history() const noexcept { return history_; }
    int epochs_completed() const noexcept { return epochs_done_; }

    void set_observer(StepObserver obs) { observer_ = std::move(obs); }

    /// One SGD step on a batch; returns the loss before the update.
    LossComponents step(const PatchBatch<Scalar>& batch, const RepresentativeBatch<Scalar>* reps,
                        double lr, int epoch) {
        const auto loss = total_loss(model_, batch.images, batch.labels, reps, cfg_.train, true);
        if (!std::isfinite(loss.total)) {
            throw divergence_error("non-finite loss at step " + std::to_string(step_) + " (epoch " +
                                   std::to_string(epoch) + "): ce=" + std::to_string(loss.ce) +
                                   " l_bone=" + std::to_string(loss.l_bone) +
                                   " l_dirt=" + std::to_string(loss.l_dirt));
        }
        apply_sgd(lr);
        HistoryRow row{step_, epoch, lr, loss.ce, loss.l_bone, loss.l_dirt, loss.total};
        history_.push_back(row);
        if (observer_) observer_(row);
        ++step_;
        return loss;
    }

    /// Runs the remaining epochs over `patches`. In dsrdn mode `reps` must be given.
    void fit(const std::vector<LabeledPatch>& patches, const RepresentativePatchSet* reps) {
        if (patches.empty()) throw data_error("training needs at least one patch");
        const bool dsrdn = cfg_.train.mode == NetMode::dsrdn;
        RepresentativePatchSet pool;
        if (dsrdn) {
            if (!reps) throw data_error("dsrdn mode needs representative bone/dirt patches");
            pool = *reps;
            pool.per_step_count = static_cast<std::size_t>(cfg_.train.representatives_per_step);
            pool.validate();
        }
        const auto batch_size = static_cast<std::size_t>(cfg_.train.batch_size);
        for (int epoch = epochs_done_; epoch < cfg_.train.epochs; ++epoch) {
            const double lr = lr_at(epoch, cfg_.train);
            std::vector<std::size_t> order(patches.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            Rng rng(derive_seed(cfg_.train.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
            rng.shuffle(order.begin(), order.end());
            for (std::size_t start = 0; start < order.size(); start += batch_size) {
                const std::vector<std::size_t> idx(
                    order.begin() + static_cast<std::ptrdiff_t>(start),
                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
                const auto batch = make_batch<Scalar>(patches, idx);
                std::optional<RepresentativeBatch<Scalar>> rb;
                if (dsrdn) {
                    rb = draw_representatives<Scalar>(
                        pool, derive_seed(cfg_.train.seed, kRepresentativeStream),
                        static_cast<std::uint64_t>(step_));
                }
                step(batch, rb ? &*rb : nullptr, lr, epoch);
            }
            epochs_done_ = epoch + 1;
        }
    }

    Checkpoint checkpoint() {
        Checkpoint c;
        c.epoch = epochs_done_;
        c.config_echo = config_echo(cfg_);
        c.history = history_;
        for (auto* p : model_.params()) {
            c.blocks.push_back(to_block(p->name, p->dims, p->value));
            if (!p->velocity.empty()) {
                c.blocks.push_back(to_block(p->name + "@velocity", p->dims, p->velocity));
            }
        }
        return c;
    }

    /// Rebuilds a trainer (model, optimizer state, history) from a checkpoint.
    /// `expected_mode`, when given, must match the checkpoint's mode.
    static Trainer restore(const Checkpoint& c, std::optional<NetMode> expected_mode = std::nullopt) {
        RunConfig cfg;
        apply_config_text(cfg, c.config_echo, "checkpoint config");
        if (expected_mode && *expected_mode != cfg.train.mode) {
            throw config_error(std::string("mode mismatch: checkpoint was trained in ") +
                               to_string(cfg.train.mode) + " mode, requested " +
                               to_string(*expected_mode));
        }
        Trainer t(cfg);
        for (auto* p : t.model_.params()) {
            load_block(c, p->name, p->dims, p->value);
            if (const auto* v = c.find(p->name + "@velocity")) {
                p->velocity.resize(p->value.size());
                load_block(c, v->name, p->dims, p->velocity);
            }
        }
        t.history_ = c.history;
        t.epochs_done_ = c.epoch;
        t.step_ = static_cast<std::int64_t>(c.history.size());
        return t;
    }

private:
    void apply_sgd(double lr) {
        const double mu = cfg_.train.momentum;
        for (auto* p : model_.params()) {
            if (!p->trainable) continue;
            if (mu > 0.0) {
                if (p->velocity.empty()) p->velocity.assign(p->value.size(), Scalar(0));
                for (std::size_t i = 0; i < p->value.size(); ++i) {
                    p->velocity[i] = static_cast<Scalar>(mu * p->velocity[i] + p->grad[i]);
                    p->value[i] -= static_cast<Scalar>(lr * p->velocity[i]);
                }
            } else {
                for (std::size_t i = 0; i < p->value.size(); ++i) {
                    p->value[i] -= static_cast<Scalar>(lr * p->grad[i]);
                }
            }
        }
    }

    static WeightBlock to_block(const std::string& name, const std::vector<int>& dims,
                                const std::vector<Scalar>& values) {
        WeightBlock b;
        b.name = name;
        for (int d : dims) b.dims.push_back(static_cast<std::uint64_t>(d));
        b.data.assign(values.begin(), values.end());
        return b;
    }

    static void load_block(const Checkpoint& c, const std::string& name, const std::vector<int>& dims,
                           std::vector<Scalar>& out) {
        const auto* b = c.find(name);
        if (!b) throw data_error("checkpoint lacks block '" + name + "'");
        if (b->dims.size() != dims.size() || b->data.size() != out.size()) {
            throw data_error("checkpoint block '" + name + "' has unexpected shape");
        }
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (b->dims[i] != static_cast<std::uint64_t>(dims[i])) {
                throw data_error("checkpoint block '" + name + "' has unexpected shape");
            }
        }
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(b->data[i]);
    }

    RunConfig cfg_;
    SegmentationModel<Scalar> model_;
    std::vector<HistoryRow> history_;
    std::int64_t step_ = 0;
    int epochs_done_ = 0;
    StepObserver observer_;
};

/// CSV with columns step,epoch,lr,ce,l_bone,l_dirt,total (round-trippable doubles).
inline void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write " + path.string());
    out << "step,epoch,lr,ce,l_bone,l_dirt,total\n";
    using detail::format_double;
    for (const auto& r : rows) {
        out << r.step << ',' << r.epoch << ',' << format_double(r.lr) << ',' << format_double(r.ce)
            << ',' << format_double(r.l_bone) << ',' << format_double(r.l_dirt) << ','
            << format_double(r.total) << '\n';
    }
}

} // namespace mctseg
