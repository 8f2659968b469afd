#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "bmcl/dataset.hpp"
#include "bmcl/eval.hpp"
#include "bmcl/plot.hpp"
#include "bmcl/train.hpp"

namespace bmcl {

// ---------------------------------------------------------------------------
// Named experiment suites: each orchestrates a pretrain->finetune grid over
// one dataset and writes a long-form report CSV, a grouped summary CSV and a
// chart. Heavy lifting stays in train/eval; this file is plumbing.
// ---------------------------------------------------------------------------

struct ExperimentRow {
    std::string experiment;
    std::string model;  // variant label within the experiment
    std::string mode;   // frozen | trainable
    double fraction = 1.0;
    uint64_t seed = 0;
    double metric = 0.0;
};

struct ExperimentResult {
    std::string name;
    std::string metric_name;
    std::vector<ExperimentRow> rows;
    // Auxiliary per-variant values (e.g. final pretrain losses for ablations).
    std::map<std::string, double> final_pretrain_loss;
    std::string out_dir;
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> kNames = {"baselines", "low_data", "morphometric_ablation",
                                                    "laaf_comparison"};
    return kNames;
}

// Drops features by morphometric flag; images, labels and splits are shared.
inline PairedDataset feature_subset(const PairedDataset& ds, bool keep_morphometric, bool keep_non_morphometric) {
    std::vector<size_t> keep;
    for (size_t j = 0; j < ds.schema.size(); ++j) {
        const bool morph = ds.schema.at(j).morphometric;
        if ((morph && keep_morphometric) || (!morph && keep_non_morphometric)) keep.push_back(j);
    }
    if (keep.empty()) throw DomainError("feature subset would be empty");
    PairedDataset out = ds;
    out.schema.features.clear();
    for (size_t j : keep) out.schema.features.push_back(ds.schema.at(j));
    out.tabular.values.resize(ds.tabular.values.rows(), static_cast<Eigen::Index>(keep.size()));
    out.tabular.missing.resize(ds.tabular.missing.rows(), static_cast<Eigen::Index>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) {
        out.tabular.values.col(static_cast<Eigen::Index>(k)) =
            ds.tabular.values.col(static_cast<Eigen::Index>(keep[k]));
        out.tabular.missing.col(static_cast<Eigen::Index>(k)) =
            ds.tabular.missing.col(static_cast<Eigen::Index>(keep[k]));
    }
    out.tabular.norm_stats.reset();
    return out;
}

namespace detail {

struct SuiteContext {
    const PairedDataset& data;
    TrainConfig base_train;
    EvalConfig base_eval;
    std::string out_dir;
    std::ostream* log = nullptr;
    ExperimentResult result;

    void note(const std::string& line) const {
        if (log) *log << line << "\n";
    }

    // Pretrains one variant (or reuses its run directory's checkpoint if the
    // caller already produced it this run) and returns the checkpoint.
    Checkpoint pretrain_variant(const std::string& label, const TrainConfig& cfg, const PairedDataset& ds) {
        const std::string run_dir = out_dir + "/runs/" + label;
        note("pretraining " + label + " (" + pretrain_mode_name(cfg.mode) + ")");
        PretrainResult res = pretrain(ds, cfg, run_dir, log);
        if (!res.epoch_losses.empty()) result.final_pretrain_loss[label] = res.epoch_losses.back();
        return std::move(res.checkpoint);
    }

    // Supervised-from-scratch anchor: an untrained checkpoint that carries the
    // schema pairing metadata so the finetune contract checks still apply.
    Checkpoint untrained_checkpoint(const PairedDataset& ds, const ModelSpec& spec_template) {
        ModelSpec spec = spec_template;
        spec.tab_in = static_cast<int>(encoded_layout(ds.schema).width);
        spec.img_in_c = ds.images.c;
        spec.image_size = base_train.out_size;
        spec.validate();
        PretrainModel<float> model(spec);
        model.init(derive_seed({base_train.seed, detail_init_tag()}));
        nlohmann::json extra;
        extra["schema_hash"] = hex64(schema_hash(ds.schema));
        extra["laaf"] = false;
        extra["mode"] = "untrained";
        extra["seed"] = base_train.seed;
        return make_checkpoint(model, extra);
    }

    static uint64_t detail_init_tag() { return 0x696e6974; }

    void finetune_variant(const std::string& label, const Checkpoint& ck, const PairedDataset& ds,
                          FinetuneMode mode, ProbeTarget target, double fraction, bool from_scratch = false) {
        EvalConfig cfg = base_eval;
        cfg.mode = mode;
        cfg.target = target;
        cfg.fraction = fraction;
        cfg.from_scratch = from_scratch;
        const std::string mode_name = finetune_mode_name(mode);
        note("finetuning " + label + " (" + mode_name + ", fraction " + format_double(fraction) + ")");
        const FinetuneReport rep = finetune(ck, ds, cfg);
        result.metric_name = rep.metric;
        write_finetune_report(out_dir + "/eval/" + label + "_" + mode_name, rep, mode_name, fraction);
        for (size_t i = 0; i < cfg.seeds.size(); ++i) {
            result.rows.push_back(
                {result.name, label, mode_name, fraction, cfg.seeds[i], rep.per_seed_test[i]});
        }
    }
};

inline void write_suite_reports(const SuiteContext& ctx) {
    const ExperimentResult& r = ctx.result;
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : r.rows) {
        rows.push_back({row.experiment, row.model, row.mode, format_double(row.fraction),
                        std::to_string(row.seed), format_double(row.metric)});
    }
    write_csv(ctx.out_dir + "/report.csv", {"experiment", "model", "mode", "fraction", "seed", "metric"}, rows);

    // Grouped mean/std, preserving first-appearance order.
    std::vector<std::tuple<std::string, std::string, double>> groups;
    std::map<std::tuple<std::string, std::string, double>, std::vector<double>> values;
    for (const auto& row : r.rows) {
        const auto key = std::make_tuple(row.model, row.mode, row.fraction);
        if (!values.count(key)) groups.push_back(key);
        values[key].push_back(row.metric);
    }
    std::vector<std::vector<std::string>> srows;
    for (const auto& key : groups) {
        const MeanStd ms = mean_std(values[key]);
        srows.push_back({r.name, std::get<0>(key), std::get<1>(key), format_double(std::get<2>(key)),
                         format_double(ms.mean), format_double(ms.stdev)});
    }
    write_csv(ctx.out_dir + "/summary.csv", {"experiment", "model", "mode", "fraction", "mean", "std"}, srows);

    if (!r.final_pretrain_loss.empty()) {
        std::vector<std::vector<std::string>> lrows;
        for (const auto& [label, loss] : r.final_pretrain_loss) {
            lrows.push_back({label, format_double(loss)});
        }
        write_csv(ctx.out_dir + "/pretrain_loss.csv", {"model", "final_loss"}, lrows);
    }

    if (r.name == "low_data") {
        LineChart chart;
        chart.title = "Metric vs training fraction";
        chart.x_label = "train fraction";
        chart.y_label = r.metric_name;
        chart.log_x = true;
        std::map<std::string, std::map<double, std::vector<double>>> by_model;
        for (const auto& row : r.rows) by_model[row.model][row.fraction].push_back(row.metric);
        for (const auto& [model, per_frac] : by_model) {
            Series s;
            s.name = model;
            for (const auto& [frac, vals] : per_frac) s.points.push_back({frac, mean_std(vals).mean});
            chart.series.push_back(std::move(s));
        }
        write_line_chart(ctx.out_dir + "/low_data", chart);
    } else {
        BarChart chart;
        chart.title = "Mean " + r.metric_name + " (" + r.name + ")";
        chart.value_label = r.metric_name;
        for (const auto& key : groups) {
            const MeanStd ms = mean_std(values[key]);
            std::string label = std::get<0>(key) + " / " + std::get<1>(key);
            if (r.name == "low_data") label += " @" + format_double(std::get<2>(key));
            chart.items.push_back({label, ms.mean, false});
        }
        write_bar_chart(ctx.out_dir + "/" + r.name, chart);
    }
}

}  // namespace detail

struct ExperimentOptions {
    std::vector<double> fractions = {1.0, 0.1, 0.01};  // low_data only
};

inline ExperimentResult run_experiment_suite(const std::string& name, const PairedDataset& data,
                                             const TrainConfig& base_train, const EvalConfig& base_eval,
                                             const std::string& out_dir, std::ostream* log = nullptr,
                                             const ExperimentOptions& options = {}) {
    if (std::find(experiment_names().begin(), experiment_names().end(), name) == experiment_names().end()) {
        throw ConfigError("unknown experiment '" + name + "'; expected one of baselines, low_data, "
                          "morphometric_ablation, laaf_comparison");
    }
    data.validate();
    std::filesystem::create_directories(out_dir);
    detail::SuiteContext ctx{data, base_train, base_eval, out_dir, log, {}};
    ctx.result.name = name;
    ctx.result.out_dir = out_dir;

    auto make_train = [&](PretrainMode mode) {
        TrainConfig cfg = base_train;
        cfg.mode = mode;
        cfg.loss.supervision = Supervision::None;
        cfg.laaf = false;
        return cfg;
    };

    if (name == "baselines") {
        const Checkpoint multimodal = ctx.pretrain_variant("multimodal", make_train(PretrainMode::Multimodal), data);
        ctx.finetune_variant("multimodal", multimodal, data, FinetuneMode::Frozen, ProbeTarget::Image, 1.0);
        ctx.finetune_variant("multimodal", multimodal, data, FinetuneMode::Trainable, ProbeTarget::Image, 1.0);

        const Checkpoint simclr = ctx.pretrain_variant("simclr", make_train(PretrainMode::Simclr), data);
        ctx.finetune_variant("simclr", simclr, data, FinetuneMode::Frozen, ProbeTarget::Image, 1.0);
        ctx.finetune_variant("simclr", simclr, data, FinetuneMode::Trainable, ProbeTarget::Image, 1.0);

        const Checkpoint scarf = ctx.pretrain_variant("scarf", make_train(PretrainMode::Scarf), data);
        ctx.finetune_variant("scarf", scarf, data, FinetuneMode::Frozen, ProbeTarget::Tabular, 1.0);

        const Checkpoint untrained = ctx.untrained_checkpoint(data, base_train.model);
        ctx.finetune_variant("supervised", untrained, data, FinetuneMode::Trainable, ProbeTarget::Image, 1.0,
                             /*from_scratch=*/true);
    } else if (name == "low_data") {
        if (options.fractions.empty()) throw ConfigError("low_data needs at least one fraction");
        // Nested subsets are part of the protocol: verify smallest within largest.
        std::vector<double> fractions = options.fractions;
        std::sort(fractions.begin(), fractions.end());
        for (size_t i = 1; i < fractions.size(); ++i) {
            const auto small = selected_train_rows(data, fractions[i - 1], base_eval.fraction_seed);
            const auto large = selected_train_rows(data, fractions[i], base_eval.fraction_seed);
            const std::set<int> large_set(large.begin(), large.end());
            for (int row : small) {
                if (!large_set.count(row)) {
                    throw ContractError("low-data subsets are not nested; subsampling is broken");
                }
            }
        }

        const Checkpoint multimodal = ctx.pretrain_variant("multimodal", make_train(PretrainMode::Multimodal), data);
        const Checkpoint simclr = ctx.pretrain_variant("simclr", make_train(PretrainMode::Simclr), data);
        for (double fraction : options.fractions) {
            ctx.finetune_variant("multimodal", multimodal, data, base_eval.mode, ProbeTarget::Image, fraction);
            ctx.finetune_variant("simclr", simclr, data, base_eval.mode, ProbeTarget::Image, fraction);
        }
    } else if (name == "morphometric_ablation") {
        const PairedDataset morph_only = feature_subset(data, true, false);
        const PairedDataset non_morph = feature_subset(data, false, true);
        struct Variant {
            const char* label;
            const PairedDataset* ds;
        };
        const Variant variants[] = {{"all_features", &data}, {"morphometric_only", &morph_only},
                                    {"non_morphometric_only", &non_morph}};
        for (const auto& v : variants) {
            const Checkpoint ck = ctx.pretrain_variant(v.label, make_train(PretrainMode::Multimodal), *v.ds);
            ctx.finetune_variant(v.label, ck, *v.ds, base_eval.mode, ProbeTarget::Image, 1.0);
        }
    } else {  // laaf_comparison
        struct Variant {
            const char* label;
            Supervision supervision;
            bool laaf;
        };
        const Variant variants[] = {
            {"baseline", Supervision::None, false},
            {"laaf", Supervision::None, true},
            {"fn_elim", Supervision::FnElimination, false},
            {"fn_elim_laaf", Supervision::FnElimination, true},
            {"supcon", Supervision::Supcon, false},
            {"supcon_laaf", Supervision::Supcon, true},
        };
        for (const auto& v : variants) {
            TrainConfig cfg = make_train(PretrainMode::Multimodal);
            cfg.loss.supervision = v.supervision;
            cfg.laaf = v.laaf;
            const Checkpoint ck = ctx.pretrain_variant(v.label, cfg, data);
            ctx.finetune_variant(v.label, ck, data, base_eval.mode, ProbeTarget::Image, 1.0);
        }
    }

    detail::write_suite_reports(ctx);
    return ctx.result;
}

}  // namespace bmcl
