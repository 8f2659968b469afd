#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmcl/checkpoint.hpp"
#include "bmcl/corruption.hpp"
#include "bmcl/dataset.hpp"
#include "bmcl/encoders.hpp"
#include "bmcl/error.hpp"
#include "bmcl/image_augment.hpp"
#include "bmcl/impute.hpp"
#include "bmcl/loss.hpp"
#include "bmcl/nn.hpp"
#include "bmcl/rng.hpp"
#include "bmcl/synthetic.hpp"
#include "bmcl/tabular.hpp"

namespace bmcl {

// Linear warmup from 0, then cosine decay to 0 at total_steps.
inline double lr_at(int64_t step, int64_t total_steps, int64_t warmup_steps, double base_lr) {
    if (warmup_steps >= total_steps) throw ConfigError("warmup must be shorter than the schedule");
    if (step < 0 || step > total_steps) throw ContractError("lr_at step out of range");
    if (step < warmup_steps) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

enum class PretrainMode { Multimodal, Simclr, Scarf };

inline const char* pretrain_mode_name(PretrainMode m) {
    switch (m) {
        case PretrainMode::Multimodal: return "multimodal";
        case PretrainMode::Simclr: return "simclr";
        case PretrainMode::Scarf: return "scarf";
    }
    return "?";
}

inline PretrainMode parse_pretrain_mode(const std::string& s) {
    if (s == "multimodal") return PretrainMode::Multimodal;
    if (s == "simclr") return PretrainMode::Simclr;
    if (s == "scarf") return PretrainMode::Scarf;
    throw ConfigError("unknown pretrain mode: " + s);
}

struct TrainConfig {
    int epochs = 50;
    int warmup_epochs = 10;
    int batch_size = 128;
    double base_lr = 3e-4;
    double weight_decay = 1e-4;
    uint64_t seed = 0;
    PretrainMode mode = PretrainMode::Multimodal;
    LossConfig loss;
    bool laaf = false;
    bool laaf_exempt_from_corruption = false;
    std::string image_policy = "cardiac";
    int out_size = 32;  // augmented view edge length
    double corruption_rate = 0.3;
    bool corruption_bernoulli = false;
    int checkpoint_every = 0;  // 0: final checkpoint only
    ModelSpec model;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be positive");
        if (warmup_epochs < 0 || warmup_epochs >= epochs) {
            throw ConfigError("warmup_epochs must satisfy 0 <= warmup < epochs");
        }
        if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
        if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
        if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
        if (corruption_rate < 0.0 || corruption_rate > 1.0) throw ConfigError("corruption_rate in [0,1]");
        if (mode != PretrainMode::Multimodal && loss.supervision != Supervision::None) {
            throw ConfigError("supervised contrastive variants require multimodal mode");
        }
        if (laaf && mode == PretrainMode::Simclr) {
            throw ConfigError("label-as-a-feature needs the tabular branch");
        }
        if (out_size < 4) throw ConfigError("out_size too small");
    }
};

inline const char* supervision_name(Supervision s) {
    switch (s) {
        case Supervision::None: return "none";
        case Supervision::FnElimination: return "fn_elimination";
        case Supervision::Supcon: return "supcon";
    }
    return "?";
}

inline const char* denominator_mode_name(DenominatorMode m) {
    return m == DenominatorMode::ClipInclusive ? "clip_inclusive" : "literal_eq2";
}

// Canonical serialization; its digest is the run's config hash.
inline nlohmann::json train_config_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["epochs"] = cfg.epochs;
    j["warmup_epochs"] = cfg.warmup_epochs;
    j["batch_size"] = cfg.batch_size;
    j["base_lr"] = cfg.base_lr;
    j["weight_decay"] = cfg.weight_decay;
    j["seed"] = cfg.seed;
    j["mode"] = pretrain_mode_name(cfg.mode);
    j["loss"] = {{"temperature", cfg.loss.temperature},
                 {"lambda", cfg.loss.lambda},
                 {"denominator_mode", denominator_mode_name(cfg.loss.denominator_mode)},
                 {"supervision", supervision_name(cfg.loss.supervision)}};
    j["laaf"] = cfg.laaf;
    j["laaf_exempt_from_corruption"] = cfg.laaf_exempt_from_corruption;
    j["image_policy"] = cfg.image_policy;
    j["out_size"] = cfg.out_size;
    j["corruption_rate"] = cfg.corruption_rate;
    j["corruption_bernoulli"] = cfg.corruption_bernoulli;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["model"] = {{"tab_hidden", cfg.model.tab_hidden},
                  {"tab_embed", cfg.model.tab_embed},
                  {"img_channels", cfg.model.img_channels},
                  {"img_embed", cfg.model.img_embed},
                  {"proj_dim", cfg.model.proj_dim},
                  {"tab_head_bias", cfg.model.tab_head_bias}};
    return j;
}

inline uint64_t train_config_hash(const TrainConfig& cfg) { return fnv1a(train_config_json(cfg).dump()); }

// ---------------------------------------------------------------------------
// Data preparation: train-split normalization stats, imputation, corruption
// marginals and the one-hot layout, all reused across epochs.
// ---------------------------------------------------------------------------

struct PreparedData {
    PairedDataset data;           // possibly with the label feature appended
    EncodedLayout layout;
    CorruptionSampler sampler;
    std::vector<int> train_rows, val_rows, test_rows;
    int n_corruptible = 0;  // leading features eligible for corruption
};

inline PreparedData prepare_training_data(const PairedDataset& raw, const TrainConfig& cfg) {
    PreparedData prep;
    prep.data = cfg.laaf ? append_label_feature(raw) : raw;
    prep.train_rows = prep.data.split_indices(Split::Train);
    prep.val_rows = prep.data.split_indices(Split::Val);
    prep.test_rows = prep.data.split_indices(Split::Test);
    if (prep.train_rows.size() < 2) throw ContractError("train split too small to pretrain on");

    TabularMatrix& tab = prep.data.tabular;
    std::vector<uint8_t> train_mask(static_cast<size_t>(prep.data.n()), 0);
    for (int r : prep.train_rows) train_mask[static_cast<size_t>(r)] = 1;
    const NormStats stats = compute_norm_stats(tab, prep.data.schema, &train_mask);
    apply_normalization(tab, prep.data.schema, stats);
    if (tab.missing.any()) {
        tab = impute(tab, prep.data.schema, ImputeOptions{}).matrix;
    }

    prep.layout = encoded_layout(prep.data.schema);
    const auto count_mode =
        cfg.corruption_bernoulli ? CorruptionSampler::Count::Bernoulli : CorruptionSampler::Count::Fixed;
    if (cfg.laaf && cfg.laaf_exempt_from_corruption) {
        // Marginals over the original columns only; the label column is
        // reattached untouched after each corruption draw.
        prep.n_corruptible = static_cast<int>(prep.data.schema.size()) - 1;
        TabularSchema base_schema = prep.data.schema;
        base_schema.features.pop_back();
        TabularMatrix base = prep.data.tabular;
        base.values.conservativeResize(Eigen::NoChange, prep.n_corruptible);
        base.missing.conservativeResize(Eigen::NoChange, prep.n_corruptible);
        prep.sampler = CorruptionSampler(base, base_schema, prep.train_rows, cfg.corruption_rate, count_mode);
    } else {
        prep.n_corruptible = static_cast<int>(prep.data.schema.size());
        prep.sampler =
            CorruptionSampler(prep.data.tabular, prep.data.schema, prep.train_rows, cfg.corruption_rate, count_mode);
    }
    return prep;
}

// Corrupts then one-hot encodes one raw row; the label column, when exempt,
// bypasses the sampler.
inline Vecd corrupt_and_keep_exempt(const PreparedData& prep, const Vecd& row, Rng& rng) {
    const auto F = row.size();
    if (prep.n_corruptible == F) return prep.sampler.corrupt_row(row, rng);
    Vecd out = row;
    out.head(prep.n_corruptible) = prep.sampler.corrupt_row(row.head(prep.n_corruptible), rng);
    return out;
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<double> epoch_losses;
    int skipped_batches = 0;
    std::string run_dir;
};

namespace detail {

inline constexpr uint64_t kInitTag = 0x696e6974;   // model init stream
inline constexpr uint64_t kShuffleTag = 0x73687566; // epoch shuffles
inline constexpr uint64_t kAugTag = 0x617567;       // per-sample views

template <typename S>
inline void batch_stats(const Mat<S>& z, std::string& out) {
    out += " min=" + std::to_string(static_cast<double>(z.minCoeff())) +
           " max=" + std::to_string(static_cast<double>(z.maxCoeff()));
}

}  // namespace detail

inline PretrainResult pretrain(const PairedDataset& dataset, const TrainConfig& cfg,
                               const std::string& run_dir = "", std::ostream* log = nullptr,
                               const nlohmann::json* resolved_config = nullptr) {
    using S = float;
    namespace fs = std::filesystem;
    cfg.validate();
    dataset.validate();

    PreparedData prep = prepare_training_data(dataset, cfg);
    const PairedDataset& ds = prep.data;

    ModelSpec spec = cfg.model;
    spec.tab_in = static_cast<int>(prep.layout.width);
    spec.img_in_c = ds.images.c;
    spec.image_size = cfg.out_size;
    PretrainModel<S> model(spec);
    model.init(derive_seed({cfg.seed, detail::kInitTag}));

    // Only the towers the mode exercises get optimizer steps.
    auto visit_active = [&](const ParamVisitor<S>& f) {
        switch (cfg.mode) {
            case PretrainMode::Multimodal:
                model.visit(f);
                break;
            case PretrainMode::Simclr:
                model.img.visit(f);
                model.img_head.visit(f);
                break;
            case PretrainMode::Scarf:
                model.tab.visit(f);
                model.tab_head.visit(f);
                break;
        }
    };

    const auto n_train = static_cast<int>(prep.train_rows.size());
    int batches_per_epoch = n_train / cfg.batch_size;
    int batch_size = cfg.batch_size;
    if (batches_per_epoch == 0) {
        // Tiny datasets: one batch of everything instead of dropping the run.
        batches_per_epoch = 1;
        batch_size = n_train;
    }
    const int64_t total_steps = static_cast<int64_t>(cfg.epochs) * batches_per_epoch;
    const int64_t warmup_steps = static_cast<int64_t>(cfg.warmup_epochs) * batches_per_epoch;

    std::ofstream metrics_out;
    std::ofstream log_file;
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        fs::create_directories(run_dir + "/checkpoints");
        metrics_out.open(run_dir + "/metrics.csv");
        metrics_out << "epoch,loss,lr\n";
        log_file.open(run_dir + "/train.log");
        const nlohmann::json config_echo = resolved_config ? *resolved_config : train_config_json(cfg);
        std::ofstream cfg_out(run_dir + "/config.json");
        cfg_out << config_echo.dump(2) << "\n";
    }
    auto log_line = [&](const std::string& line) {
        if (log) (*log) << line << "\n";
        if (log_file.is_open()) log_file << line << "\n";
    };

    const ImagePolicy policy = policy_by_name(cfg.image_policy, cfg.out_size);
    AdamW<S> opt;
    PretrainResult result;
    Vecd raw_row;
    Vecd encoded(prep.layout.width);

    auto encode_tab_column = [&](int row, bool corrupted, Rng* rng, Mat<S>& dst, Eigen::Index col) {
        raw_row = ds.tabular.values.row(row).transpose();
        if (corrupted) raw_row = corrupt_and_keep_exempt(prep, raw_row, *rng);
        encode_row_into(raw_row, ds.schema, prep.layout, encoded);
        for (Eigen::Index i = 0; i < dst.rows(); ++i) dst(i, col) = static_cast<S>(encoded(i));
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = prep.train_rows;
        Rng shuffle_rng(derive_seed({cfg.seed, detail::kShuffleTag, static_cast<uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        int processed = 0;
        double lr = 0.0;
        for (int b = 0; b < batches_per_epoch; ++b) {
            const int64_t step = static_cast<int64_t>(epoch) * batches_per_epoch + b;
            lr = lr_at(step, total_steps, warmup_steps, cfg.base_lr);
            const int* rows = order.data() + static_cast<size_t>(b) * batch_size;

            std::vector<int> labels(static_cast<size_t>(batch_size));
            for (int s = 0; s < batch_size; ++s) labels[static_cast<size_t>(s)] = ds.labels[static_cast<size_t>(rows[s])];

            try {
                LossResult<S> res;
                zero_grads<S>(visit_active);
                const Eigen::Index pixels =
                    static_cast<Eigen::Index>(ds.images.c) * cfg.out_size * cfg.out_size;

                if (cfg.mode == PretrainMode::Multimodal) {
                    Mat<S> x_img(pixels, batch_size);
                    Mat<S> x_tab(prep.layout.width, batch_size);
                    for (int s = 0; s < batch_size; ++s) {
                        Rng view_rng(derive_seed({cfg.seed, detail::kAugTag, static_cast<uint64_t>(epoch),
                                                  static_cast<uint64_t>(rows[s])}));
                        const Image view = augment_image(ds.images.image(rows[s]), policy, view_rng);
                        for (Eigen::Index i = 0; i < pixels; ++i) x_img(i, s) = view.v[static_cast<size_t>(i)];
                        encode_tab_column(rows[s], true, &view_rng, x_tab, s);
                    }
                    const Mat<S> zi_cols = model.img_head.forward(model.img.forward(x_img));
                    const Mat<S> zt_cols = model.tab_head.forward(model.tab.forward(x_tab));
                    const Mat<S> zi = zi_cols.transpose();
                    const Mat<S> zt = zt_cols.transpose();
                    if (cfg.loss.supervision == Supervision::Supcon) {
                        res = supcon_loss(zi, zt, labels, cfg.loss.temperature);
                    } else {
                        LossConfig lc = cfg.loss;
                        if (lc.supervision == Supervision::FnElimination) lc.labels = labels;
                        res = clip_loss(zi, zt, lc);
                    }
                    if (!std::isfinite(static_cast<double>(res.total))) {
                        std::string diag = "non-finite multimodal loss at epoch " + std::to_string(epoch + 1) +
                                           " batch " + std::to_string(b);
                        detail::batch_stats(zi, diag);
                        detail::batch_stats(zt, diag);
                        throw NumericError(diag);
                    }
                    model.img.backward(model.img_head.backward(res.d_zi.transpose()));
                    model.tab.backward(model.tab_head.backward(res.d_zt.transpose()));
                } else if (cfg.mode == PretrainMode::Simclr) {
                    // Both views share one forward pass so layer caches stay
                    // valid for the single backward.
                    Mat<S> x(pixels, static_cast<Eigen::Index>(batch_size) * 2);
                    for (int s = 0; s < batch_size; ++s) {
                        Rng view_rng(derive_seed({cfg.seed, detail::kAugTag, static_cast<uint64_t>(epoch),
                                                  static_cast<uint64_t>(rows[s])}));
                        const Image va = augment_image(ds.images.image(rows[s]), policy, view_rng);
                        const Image vb = augment_image(ds.images.image(rows[s]), policy, view_rng);
                        for (Eigen::Index i = 0; i < pixels; ++i) {
                            x(i, s) = va.v[static_cast<size_t>(i)];
                            x(i, batch_size + s) = vb.v[static_cast<size_t>(i)];
                        }
                    }
                    const Mat<S> z_cols = model.img_head.forward(model.img.forward(x));
                    const Mat<S> za = z_cols.leftCols(batch_size).transpose();
                    const Mat<S> zb = z_cols.rightCols(batch_size).transpose();
                    res = ntxent_loss(za, zb, cfg.loss.temperature);
                    if (!std::isfinite(static_cast<double>(res.total))) {
                        std::string diag = "non-finite simclr loss at epoch " + std::to_string(epoch + 1) +
                                           " batch " + std::to_string(b);
                        detail::batch_stats(za, diag);
                        throw NumericError(diag);
                    }
                    Mat<S> dz(z_cols.rows(), z_cols.cols());
                    dz.leftCols(batch_size) = res.d_zi.transpose();
                    dz.rightCols(batch_size) = res.d_zt.transpose();
                    model.img.backward(model.img_head.backward(dz));
                } else {
                    Mat<S> x(prep.layout.width, static_cast<Eigen::Index>(batch_size) * 2);
                    for (int s = 0; s < batch_size; ++s) {
                        Rng view_rng(derive_seed({cfg.seed, detail::kAugTag, static_cast<uint64_t>(epoch),
                                                  static_cast<uint64_t>(rows[s])}));
                        encode_tab_column(rows[s], true, &view_rng, x, s);
                        encode_tab_column(rows[s], false, nullptr, x, batch_size + s);
                    }
                    const Mat<S> z_cols = model.tab_head.forward(model.tab.forward(x));
                    const Mat<S> za = z_cols.leftCols(batch_size).transpose();
                    const Mat<S> zb = z_cols.rightCols(batch_size).transpose();
                    res = ntxent_loss(za, zb, cfg.loss.temperature);
                    if (!std::isfinite(static_cast<double>(res.total))) {
                        std::string diag = "non-finite scarf loss at epoch " + std::to_string(epoch + 1) +
                                           " batch " + std::to_string(b);
                        detail::batch_stats(za, diag);
                        throw NumericError(diag);
                    }
                    Mat<S> dz(z_cols.rows(), z_cols.cols());
                    dz.leftCols(batch_size) = res.d_zi.transpose();
                    dz.rightCols(batch_size) = res.d_zt.transpose();
                    model.tab.backward(model.tab_head.backward(dz));
                }

                opt.step(visit_active, lr, cfg.weight_decay);
                epoch_loss += static_cast<double>(res.total);
                ++processed;
            } catch (const DegenerateBatchError& e) {
                ++result.skipped_batches;
                log_line("warning: skipped batch " + std::to_string(b) + " in epoch " +
                         std::to_string(epoch + 1) + ": " + e.what());
            }
        }
        if (processed == 0) {
            throw DegenerateBatchError("every batch in epoch " + std::to_string(epoch + 1) +
                                       " was degenerate; supervision setup is unusable on this data");
        }
        epoch_loss /= processed;
        result.epoch_losses.push_back(epoch_loss);
        if (metrics_out.is_open()) {
            metrics_out << (epoch + 1) << "," << format_double(epoch_loss) << "," << format_double(lr) << "\n";
            metrics_out.flush();
        }
        const bool want_periodic =
            cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs;
        if (!run_dir.empty() && want_periodic) {
            Checkpoint periodic = make_checkpoint(model);
            save_checkpoint(run_dir + "/checkpoints/epoch_" + std::to_string(epoch + 1), periodic);
        }
    }

    std::vector<std::string> feature_names;
    for (const auto& f : ds.schema.features) feature_names.push_back(f.name);
    nlohmann::json extra;
    extra["schema_hash"] = hex64(schema_hash(ds.schema));
    extra["config_hash"] = hex64(train_config_hash(cfg));
    extra["seed"] = cfg.seed;
    extra["mode"] = pretrain_mode_name(cfg.mode);
    extra["laaf"] = cfg.laaf;
    extra["feature_names"] = feature_names;
    extra["epochs"] = cfg.epochs;
    extra["final_loss"] = result.epoch_losses.back();
    extra["config"] = train_config_json(cfg);
    result.checkpoint = make_checkpoint(model, extra);

    if (!run_dir.empty()) {
        save_checkpoint(run_dir + "/checkpoints/epoch_" + std::to_string(cfg.epochs), result.checkpoint);
        nlohmann::json manifest = extra;
        manifest["param_digest"] = result.checkpoint.manifest.at("param_digest");
        manifest["skipped_batches"] = result.skipped_batches;
        manifest["checkpoint"] = "checkpoints/epoch_" + std::to_string(cfg.epochs);
        std::ofstream mout(run_dir + "/manifest.json");
        mout << manifest.dump(2) << "\n";
        result.run_dir = run_dir;
    }
    return result;
}

}  // namespace bmcl
