#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bmcl/checkpoint.hpp"
#include "bmcl/dataset.hpp"
#include "bmcl/encoders.hpp"
#include "bmcl/error.hpp"
#include "bmcl/image_augment.hpp"
#include "bmcl/metrics.hpp"
#include "bmcl/nn.hpp"
#include "bmcl/train.hpp"

namespace bmcl {

enum class FinetuneMode { Frozen, Trainable };
enum class ProbeTarget { Image, Tabular };

inline const char* finetune_mode_name(FinetuneMode m) { return m == FinetuneMode::Frozen ? "frozen" : "trainable"; }

inline FinetuneMode parse_finetune_mode(const std::string& s) {
    if (s == "frozen") return FinetuneMode::Frozen;
    if (s == "trainable") return FinetuneMode::Trainable;
    throw ConfigError("finetune mode must be frozen or trainable");
}

struct EvalConfig {
    FinetuneMode mode = FinetuneMode::Frozen;
    ProbeTarget target = ProbeTarget::Image;
    std::vector<double> lr_grid = {3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
    double min_delta = 0.0002;
    int patience = 10;
    int max_epochs = 100;
    int batch_size = 512;
    std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};
    double fraction = 1.0;
    uint64_t fraction_seed = 0;  // fixed across probe seeds so subsets stay static
    bool from_scratch = false;   // trainable-only: ignore checkpoint weights

    void validate() const {
        if (lr_grid.empty()) throw ConfigError("lr grid must not be empty");
        if (patience < 1) throw ConfigError("patience must be >= 1");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (seeds.empty()) throw ConfigError("need at least one seed");
        if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fraction must lie in (0, 1]");
        if (from_scratch && mode == FinetuneMode::Frozen) {
            throw ConfigError("a frozen probe of untrained weights is not a supported protocol");
        }
    }
};

struct FinetuneCell {
    double lr = 0.0;
    uint64_t seed = 0;
    double val_metric = 0.0;
    double test_metric = 0.0;
    int best_epoch = -1;
    int epochs_run = 0;
};

struct FinetuneReport {
    std::string metric;  // "auc" or "top1"
    double best_lr = 0.0;
    std::vector<double> per_seed_test;  // at best_lr, in seed order
    double mean = 0.0;
    double stdev = 0.0;
    std::vector<FinetuneCell> cells;
    uint64_t encoder_digest_before = 0;
    uint64_t encoder_digest_after = 0;
    std::vector<int> train_rows;  // original indices the probe trained on
};

namespace detail {

inline constexpr uint64_t kProbeInitTag = 0x70726f62;
inline constexpr uint64_t kProbeShuffleTag = 0x70736866;

// Mean softmax cross-entropy over columns; fills dlogits with the gradient.
template <typename S>
inline S softmax_xent(const Mat<S>& logits, const std::vector<int>& labels, Mat<S>& dlogits) {
    const Eigen::Index n = logits.cols();
    dlogits.resize(logits.rows(), n);
    S loss = S(0);
    for (Eigen::Index j = 0; j < n; ++j) {
        const S mx = logits.col(j).maxCoeff();
        S sum = S(0);
        for (Eigen::Index c = 0; c < logits.rows(); ++c) sum += std::exp(logits(c, j) - mx);
        const S logden = mx + std::log(sum);
        const int y = labels[static_cast<size_t>(j)];
        loss += logden - logits(y, j);
        for (Eigen::Index c = 0; c < logits.rows(); ++c)
            dlogits(c, j) = std::exp(logits(c, j) - logden) / static_cast<S>(n);
        dlogits(y, j) -= S(1) / static_cast<S>(n);
    }
    return loss / static_cast<S>(n);
}

inline bool is_binary_task(const PairedDataset& ds) {
    for (int y : ds.labels)
        if (y != 0 && y != 1) return false;
    return ds.n_classes() == 2;
}

// Metric on logits (samples x classes): AUC of the class-1 margin for binary
// tasks, top-1 accuracy otherwise.
inline double task_metric(const Matd& logits, const std::vector<int>& labels, bool binary) {
    if (!binary) return topk_accuracy(logits, labels, 1);
    std::vector<double> scores(static_cast<size_t>(logits.rows()));
    for (Eigen::Index i = 0; i < logits.rows(); ++i) scores[static_cast<size_t>(i)] = logits(i, 1) - logits(i, 0);
    return auc(scores, labels);
}

}  // namespace detail

// Resize-only image views through the encoder; embeddings come out E x n in
// row order.
template <typename S>
inline Mat<S> embed_images(PretrainModel<S>& model, const PairedDataset& ds, const std::vector<int>& rows,
                           int chunk = 256) {
    const int out_size = model.spec.image_size;
    Mat<S> out(model.spec.img_embed, static_cast<Eigen::Index>(rows.size()));
    const Eigen::Index pixels = static_cast<Eigen::Index>(ds.images.c) * out_size * out_size;
    for (size_t start = 0; start < rows.size(); start += static_cast<size_t>(chunk)) {
        const auto count = static_cast<Eigen::Index>(std::min(rows.size() - start, static_cast<size_t>(chunk)));
        Mat<S> x(pixels, count);
        for (Eigen::Index s = 0; s < count; ++s) {
            const Image view = eval_view(ds.images.image(rows[start + static_cast<size_t>(s)]), out_size);
            for (Eigen::Index i = 0; i < pixels; ++i) x(i, s) = static_cast<S>(view.v[static_cast<size_t>(i)]);
        }
        out.middleCols(static_cast<Eigen::Index>(start), count) = model.img.forward(x);
    }
    return out;
}

// Clean tabular rows (normalized, imputed, one-hot) through the tabular
// encoder.
template <typename S>
inline Mat<S> embed_tabular(PretrainModel<S>& model, const TabularMatrix& prepared, const TabularSchema& schema,
                            const EncodedLayout& layout, const std::vector<int>& rows) {
    Mat<S> x(layout.width, static_cast<Eigen::Index>(rows.size()));
    Vecd encoded(layout.width);
    for (size_t s = 0; s < rows.size(); ++s) {
        const Vecd raw = prepared.values.row(rows[s]).transpose();
        encode_row_into(raw, schema, layout, encoded);
        for (Eigen::Index i = 0; i < layout.width; ++i)
            x(i, static_cast<Eigen::Index>(s)) = static_cast<S>(encoded(i));
    }
    return model.tab.forward(x);
}

namespace detail {

template <typename S>
inline std::vector<Mat<S>> snapshot(const std::function<void(const ParamVisitor<S>&)>& visit) {
    std::vector<Mat<S>> vals;
    visit([&](Param<S>& p) { vals.push_back(p.value); });
    return vals;
}

template <typename S>
inline void restore(const std::function<void(const ParamVisitor<S>&)>& visit, const std::vector<Mat<S>>& vals) {
    size_t i = 0;
    visit([&](Param<S>& p) { p.value = vals.at(i++); });
}

// Trains one linear probe on fixed embeddings; returns (val, test, best_epoch,
// epochs_run) with the classifier restored to its best-validation epoch.
template <typename S>
struct ProbeOutcome {
    double val = 0.0, test = 0.0;
    int best_epoch = -1, epochs_run = 0;
};

template <typename S>
inline ProbeOutcome<S> train_linear_probe(const Mat<S>& emb_train, const std::vector<int>& y_train,
                                          const Mat<S>& emb_val, const std::vector<int>& y_val,
                                          const Mat<S>& emb_test, const std::vector<int>& y_test,
                                          int n_classes, bool binary, double lr, uint64_t seed,
                                          const EvalConfig& cfg) {
    Classifier<S> probe("probe", static_cast<int>(emb_train.rows()), n_classes);
    Rng init_rng(derive_seed({seed, kProbeInitTag}));
    probe.init(init_rng);
    AdamW<S> opt;
    auto visit = [&](const ParamVisitor<S>& f) { probe.visit(f); };

    EarlyStopper stopper(cfg.min_delta, cfg.patience);
    std::vector<Mat<S>> best_params = snapshot<S>(visit);
    ProbeOutcome<S> out;

    const auto n = static_cast<int>(emb_train.cols());
    const int bs = std::min(cfg.batch_size, n);
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    auto eval_metric = [&](const Mat<S>& emb, const std::vector<int>& y) {
        const Matd logits = probe.forward(emb).transpose().template cast<double>();
        return task_metric(logits, y, binary);
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed({seed, kProbeShuffleTag, static_cast<uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n; start += bs) {
            const int count = std::min(bs, n - start);
            Mat<S> xb(emb_train.rows(), count);
            std::vector<int> yb(static_cast<size_t>(count));
            for (int s = 0; s < count; ++s) {
                xb.col(s) = emb_train.col(order[static_cast<size_t>(start + s)]);
                yb[static_cast<size_t>(s)] = y_train[static_cast<size_t>(order[static_cast<size_t>(start + s)])];
            }
            zero_grads<S>(visit);
            Mat<S> dlogits;
            const S loss = softmax_xent(probe.forward(xb), yb, dlogits);
            if (!std::isfinite(static_cast<double>(loss))) throw NumericError("non-finite probe loss");
            probe.backward(dlogits);
            opt.step(visit, lr, 0.0);
        }
        out.epochs_run = epoch + 1;
        const double val = eval_metric(emb_val, y_val);
        const bool improved_best = val - stopper.best() >= cfg.min_delta;
        const bool stop = stopper.observe(val, epoch + 1);  // 1-based, like epochs_run
        if (improved_best) best_params = snapshot<S>(visit);
        if (stop) break;
    }
    restore<S>(visit, best_params);
    out.best_epoch = stopper.best_epoch();
    out.val = stopper.best();
    out.test = eval_metric(emb_test, y_test);
    return out;
}

}  // namespace detail

// Finetunes a pretrained checkpoint on the dataset's task: a learning-rate
// sweep with early stopping per (lr, seed) cell, best lr picked on the mean
// validation metric (ties toward the smaller lr), test metrics reported at
// that lr.
inline FinetuneReport finetune(const Checkpoint& ck, const PairedDataset& dataset, const EvalConfig& cfg) {
    using S = float;
    cfg.validate();
    dataset.validate();

    const bool laaf = ck.manifest.contains("laaf") && ck.manifest.at("laaf").get<bool>();
    if (laaf && cfg.target == ProbeTarget::Tabular) {
        throw DomainError("refusing to probe the tabular encoder of a label-as-a-feature checkpoint: "
                          "its input row contains the class label");
    }
    {
        const PairedDataset* schema_view = &dataset;
        PairedDataset with_label;
        if (laaf) {
            with_label = append_label_feature(dataset);
            schema_view = &with_label;
        }
        require_schema_hash(ck, schema_hash(schema_view->schema));
    }

    const PairedDataset ds = subsample_balanced(dataset, cfg.fraction, cfg.fraction_seed);
    FinetuneReport report;
    report.train_rows = selected_train_rows(dataset, cfg.fraction, cfg.fraction_seed);

    const std::vector<int> train_rows = ds.split_indices(Split::Train);
    const std::vector<int> val_rows = ds.split_indices(Split::Val);
    const std::vector<int> test_rows = ds.split_indices(Split::Test);
    if (train_rows.empty() || val_rows.empty() || test_rows.empty()) {
        throw ContractError("finetune needs non-empty train, val and test splits");
    }
    auto labels_of = [&](const std::vector<int>& rows) {
        std::vector<int> out;
        out.reserve(rows.size());
        for (int r : rows) out.push_back(ds.labels[static_cast<size_t>(r)]);
        return out;
    };
    const std::vector<int> y_train = labels_of(train_rows);
    const std::vector<int> y_val = labels_of(val_rows);
    const std::vector<int> y_test = labels_of(test_rows);
    const int n_classes = std::max(dataset.n_classes(), 2);
    const bool binary = detail::is_binary_task(dataset);
    report.metric = binary ? "auc" : "top1";

    // Tabular preparation happens once (stats from the probe's train rows).
    TabularMatrix prepared;
    EncodedLayout layout;
    if (cfg.target == ProbeTarget::Tabular) {
        prepared = ds.tabular;
        std::vector<uint8_t> train_mask(static_cast<size_t>(ds.n()), 0);
        for (int r : train_rows) train_mask[static_cast<size_t>(r)] = 1;
        const NormStats stats = compute_norm_stats(prepared, ds.schema, &train_mask);
        apply_normalization(prepared, ds.schema, stats);
        if (prepared.any_missing()) prepared = impute(prepared, ds.schema).matrix;
        layout = encoded_layout(ds.schema);
    }

    if (cfg.mode == FinetuneMode::Frozen) {
        PretrainModel<S> model = model_from_checkpoint<S>(ck);
        report.encoder_digest_before = model.digest();

        Mat<S> emb_train, emb_val, emb_test;
        if (cfg.target == ProbeTarget::Image) {
            emb_train = embed_images(model, ds, train_rows);
            emb_val = embed_images(model, ds, val_rows);
            emb_test = embed_images(model, ds, test_rows);
        } else {
            emb_train = embed_tabular(model, prepared, ds.schema, layout, train_rows);
            emb_val = embed_tabular(model, prepared, ds.schema, layout, val_rows);
            emb_test = embed_tabular(model, prepared, ds.schema, layout, test_rows);
        }
        report.encoder_digest_after = model.digest();

        for (double lr : cfg.lr_grid) {
            for (uint64_t seed : cfg.seeds) {
                const auto cell = detail::train_linear_probe<S>(emb_train, y_train, emb_val, y_val, emb_test,
                                                                y_test, n_classes, binary, lr, seed, cfg);
                report.cells.push_back({lr, seed, cell.val, cell.test, cell.best_epoch, cell.epochs_run});
            }
        }
    } else {
        bool digest_recorded = false;
        for (double lr : cfg.lr_grid) {
            for (uint64_t seed : cfg.seeds) {
                PretrainModel<S> model = model_from_checkpoint<S>(ck);
                if (cfg.from_scratch) model.init(derive_seed({seed, 0x736372u}));
                if (!digest_recorded) {
                    report.encoder_digest_before = model.digest();
                    digest_recorded = true;
                }
                Classifier<S> head("head", cfg.target == ProbeTarget::Image ? model.spec.img_embed
                                                                            : model.spec.tab_embed,
                                   n_classes);
                Rng head_rng(derive_seed({seed, detail::kProbeInitTag}));
                head.init(head_rng);
                AdamW<S> opt;
                auto visit = [&](const ParamVisitor<S>& f) {
                    if (cfg.target == ProbeTarget::Image) {
                        model.img.visit(f);
                    } else {
                        model.tab.visit(f);
                    }
                    head.visit(f);
                };

                const Eigen::Index pixels = static_cast<Eigen::Index>(ds.images.c) *
                                            model.spec.image_size * model.spec.image_size;
                auto forward_rows = [&](const std::vector<int>& rows, Eigen::Index start, Eigen::Index count) {
                    if (cfg.target == ProbeTarget::Image) {
                        Mat<S> x(pixels, count);
                        for (Eigen::Index s = 0; s < count; ++s) {
                            const Image view =
                                eval_view(ds.images.image(rows[static_cast<size_t>(start + s)]), model.spec.image_size);
                            for (Eigen::Index i = 0; i < pixels; ++i) x(i, s) = static_cast<S>(view.v[static_cast<size_t>(i)]);
                        }
                        return head.forward(model.img.forward(x));
                    }
                    std::vector<int> slice(rows.begin() + start, rows.begin() + start + count);
                    return head.forward(embed_tabular(model, prepared, ds.schema, layout, slice));
                };
                auto backward_all = [&](const Mat<S>& dlogits) {
                    const Mat<S> demb = head.backward(dlogits);
                    if (cfg.target == ProbeTarget::Image) {
                        model.img.backward(demb);
                    } else {
                        model.tab.backward(demb);
                    }
                };
                auto metric_over = [&](const std::vector<int>& rows, const std::vector<int>& y) {
                    Matd logits(static_cast<Eigen::Index>(rows.size()), n_classes);
                    const Eigen::Index chunk = 256;
                    for (Eigen::Index start = 0; start < static_cast<Eigen::Index>(rows.size()); start += chunk) {
                        const Eigen::Index count =
                            std::min(chunk, static_cast<Eigen::Index>(rows.size()) - start);
                        logits.middleRows(start, count) =
                            forward_rows(rows, start, count).transpose().template cast<double>();
                    }
                    return detail::task_metric(logits, y, binary);
                };

                EarlyStopper stopper(cfg.min_delta, cfg.patience);
                auto snap_visit = std::function<void(const ParamVisitor<S>&)>(visit);
                std::vector<Mat<S>> best_params = detail::snapshot<S>(snap_visit);
                const auto n = static_cast<int>(train_rows.size());
                const int bs = std::min(cfg.batch_size, n);
                std::vector<int> order(train_rows.begin(), train_rows.end());
                FinetuneCell cell{lr, seed, 0.0, 0.0, -1, 0};

                for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
                    Rng shuffle_rng(derive_seed({seed, detail::kProbeShuffleTag, static_cast<uint64_t>(epoch)}));
                    shuffle_rng.shuffle(order);
                    for (int start = 0; start < n; start += bs) {
                        const int count = std::min(bs, n - start);
                        std::vector<int> yb(static_cast<size_t>(count));
                        for (int s = 0; s < count; ++s)
                            yb[static_cast<size_t>(s)] = ds.labels[static_cast<size_t>(order[static_cast<size_t>(start + s)])];
                        zero_grads<S>(visit);
                        Mat<S> dlogits;
                        const S loss = detail::softmax_xent(forward_rows(order, start, count), yb, dlogits);
                        if (!std::isfinite(static_cast<double>(loss))) throw NumericError("non-finite finetune loss");
                        backward_all(dlogits);
                        opt.step(visit, lr, 0.0);
                    }
                    cell.epochs_run = epoch + 1;
                    const double val = metric_over(val_rows, y_val);
                    const bool improved_best = val - stopper.best() >= cfg.min_delta;
                    const bool stop = stopper.observe(val, epoch + 1);  // 1-based, like epochs_run
                    if (improved_best) best_params = detail::snapshot<S>(snap_visit);
                    if (stop) break;
                }
                detail::restore<S>(snap_visit, best_params);
                cell.val_metric = stopper.best();
                cell.best_epoch = stopper.best_epoch();
                cell.test_metric = metric_over(test_rows, y_test);
                report.cells.push_back(cell);
                // The digest after the most recent finetuning run; each cell
                // starts over from the checkpoint (or a fresh init).
                report.encoder_digest_after = model.digest();
            }
        }
    }

    // Best lr on mean validation metric, ties toward the smaller lr.
    double best_lr = 0.0, best_val = -1.0;
    for (double lr : cfg.lr_grid) {
        double mean_val = 0.0;
        int count = 0;
        for (const auto& cell : report.cells) {
            if (cell.lr == lr) {
                mean_val += cell.val_metric;
                ++count;
            }
        }
        mean_val /= count;
        if (mean_val > best_val + 1e-12 || (std::abs(mean_val - best_val) <= 1e-12 && lr < best_lr)) {
            best_val = mean_val;
            best_lr = lr;
        }
    }
    report.best_lr = best_lr;
    for (uint64_t seed : cfg.seeds) {
        for (const auto& cell : report.cells) {
            if (cell.lr == best_lr && cell.seed == seed) report.per_seed_test.push_back(cell.test_metric);
        }
    }
    const MeanStd ms = mean_std(report.per_seed_test);
    report.mean = ms.mean;
    report.stdev = ms.stdev;
    return report;
}

// Report files: one row per sweep cell plus a one-line summary.
inline void write_finetune_report(const std::string& dir, const FinetuneReport& report,
                                  const std::string& mode_name, double fraction) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    CsvTable cells;
    cells.header = {"mode", "fraction", "lr", "seed", "val_metric", "test_metric", "best_epoch", "epochs_run"};
    for (const auto& c : report.cells) {
        cells.rows.push_back({mode_name, format_double(fraction), format_double(c.lr), std::to_string(c.seed),
                              format_double(c.val_metric), format_double(c.test_metric),
                              std::to_string(c.best_epoch), std::to_string(c.epochs_run)});
    }
    write_csv(dir + "/cells.csv", cells.header, cells.rows);

    CsvTable summary;
    summary.header = {"metric", "mode", "fraction", "best_lr", "mean", "std", "per_seed"};
    std::string per_seed;
    for (size_t i = 0; i < report.per_seed_test.size(); ++i) {
        if (i) per_seed += ';';
        per_seed += format_double(report.per_seed_test[i]);
    }
    summary.rows.push_back({report.metric, mode_name, format_double(fraction), format_double(report.best_lr),
                            format_double(report.mean), format_double(report.stdev), per_seed});
    write_csv(dir + "/summary.csv", summary.header, summary.rows);
}

}  // namespace bmcl
