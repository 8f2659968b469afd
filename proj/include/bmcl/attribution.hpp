#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "bmcl/checkpoint.hpp"
#include "bmcl/csv.hpp"
#include "bmcl/dataset.hpp"
#include "bmcl/encoders.hpp"
#include "bmcl/error.hpp"
#include "bmcl/plot.hpp"
#include "bmcl/tabular.hpp"
#include "bmcl/train.hpp"

namespace bmcl {

// ---------------------------------------------------------------------------
// Integrated gradients over the tabular encoder. Attributions live in the
// normalized, one-hot-encoded input space; the zero baseline there is the
// per-feature mean for continuous columns and "no category" for indicators.
// ---------------------------------------------------------------------------

// Right-Riemann path integral, one matrix of input-column x embedding-dim
// attributions per sample. steps >= 2; double precision throughout.
inline Matd integrated_gradients(TabularEncoder<double>& encoder, const Vecd& sample, int steps = 64,
                                 const Vecd* baseline = nullptr) {
    if (steps < 2) throw ConfigError("integrated gradients needs steps >= 2");
    Vecd base = baseline ? *baseline : Vecd::Zero(sample.size());
    if (base.size() != sample.size()) throw ContractError("baseline width does not match sample width");

    const Vecd delta = sample - base;
    Matd avg_jac;  // E x F
    for (int s = 1; s <= steps; ++s) {
        const double alpha = static_cast<double>(s) / steps;
        const Vecd point = base + alpha * delta;
        const Matd jac = encoder.jacobian(point);
        if (!jac.allFinite()) {
            throw NumericError("non-finite encoder gradient at path position " + std::to_string(s) + "/" +
                               std::to_string(steps));
        }
        if (s == 1) {
            avg_jac = jac / steps;
        } else {
            avg_jac += jac / steps;
        }
    }
    // IG(f, d) = delta_f * mean_s J(d, f).
    Matd ig = avg_jac.transpose();
    for (Eigen::Index f = 0; f < ig.rows(); ++f) ig.row(f) *= delta(f);
    return ig;
}

// ---------------------------------------------------------------------------
// Aggregation into a per-feature importance report.
// ---------------------------------------------------------------------------

struct FeatureImportance {
    std::string name;
    double importance = 0.0;
    bool morphometric = false;
    int rank = 0;  // 0 = most important
};

struct AttributionReport {
    std::vector<FeatureImportance> features;  // schema order
    std::vector<int> ranking;                 // feature indices, importance descending
    double morphometric_share = 0.0;
    int n_samples = 0;
    int steps = 0;
};

// Mean |IG| over embedding dimensions per input column, one-hot columns summed
// into their parent feature, then meaned over samples.
inline AttributionReport aggregate_importance(const std::vector<Matd>& attributions, const TabularSchema& schema) {
    if (attributions.empty()) throw ContractError("no attribution matrices to aggregate");
    const EncodedLayout layout = encoded_layout(schema);
    const size_t n_features = schema.size();

    std::vector<double> totals(n_features, 0.0);
    for (const Matd& ig : attributions) {
        if (ig.rows() != layout.width) throw ContractError("attribution row count does not match encoded layout");
        if (ig.cols() != attributions.front().cols()) {
            throw ContractError("attribution matrices disagree on embedding width");
        }
        const Vecd col_importance = ig.cwiseAbs().rowwise().mean();
        for (size_t j = 0; j < n_features; ++j) {
            totals[j] += col_importance.segment(layout.offset[j], layout.span[j]).sum();
        }
    }

    AttributionReport report;
    report.n_samples = static_cast<int>(attributions.size());
    double all_sum = 0.0, morph_sum = 0.0;
    for (size_t j = 0; j < n_features; ++j) {
        FeatureImportance fi;
        fi.name = schema.at(j).name;
        fi.importance = totals[j] / static_cast<double>(attributions.size());
        fi.morphometric = schema.at(j).morphometric;
        report.features.push_back(fi);
        all_sum += fi.importance;
        if (fi.morphometric) morph_sum += fi.importance;
    }
    if (all_sum <= 0.0) throw DomainError("all attributions are zero; importance shares are undefined");
    report.morphometric_share = morph_sum / all_sum;

    report.ranking.resize(n_features);
    std::iota(report.ranking.begin(), report.ranking.end(), 0);
    std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](int a, int b) {
        return report.features[static_cast<size_t>(a)].importance > report.features[static_cast<size_t>(b)].importance;
    });
    for (size_t r = 0; r < n_features; ++r) {
        report.features[static_cast<size_t>(report.ranking[r])].rank = static_cast<int>(r);
    }
    return report;
}

// ---------------------------------------------------------------------------
// End-to-end: attribute a pretrained checkpoint's tabular encoder over the
// dataset's test split.
// ---------------------------------------------------------------------------

struct AttributionConfig {
    int steps = 64;
    int max_samples = 2048;  // test rows beyond this are subsampled
    uint64_t seed = 0;

    void validate() const {
        if (steps < 2) throw ConfigError("integrated gradients needs steps >= 2");
        if (max_samples < 1) throw ConfigError("max_samples must be >= 1");
    }
};

inline AttributionReport attribute_checkpoint(const Checkpoint& ck, const PairedDataset& dataset,
                                              const AttributionConfig& cfg) {
    cfg.validate();
    dataset.validate();
    const bool laaf = ck.manifest.contains("laaf") && ck.manifest.at("laaf").get<bool>();
    const PairedDataset ds = laaf ? append_label_feature(dataset) : dataset;
    require_schema_hash(ck, schema_hash(ds.schema));

    // Same preparation as pretraining: train-split stats, then imputation.
    TabularMatrix tab = ds.tabular;
    const std::vector<int> train_rows = ds.split_indices(Split::Train);
    if (train_rows.empty()) throw ContractError("attribution needs a train split for normalization statistics");
    std::vector<uint8_t> train_mask(static_cast<size_t>(ds.n()), 0);
    for (int r : train_rows) train_mask[static_cast<size_t>(r)] = 1;
    const NormStats stats = compute_norm_stats(tab, ds.schema, &train_mask);
    apply_normalization(tab, ds.schema, stats);
    if (tab.any_missing()) tab = impute(tab, ds.schema).matrix;
    const EncodedLayout layout = encoded_layout(ds.schema);

    PretrainModel<double> model = model_from_checkpoint<double>(ck);

    std::vector<int> rows = ds.split_indices(Split::Test);
    if (rows.empty()) throw ContractError("attribution needs a non-empty test split");
    if (static_cast<int>(rows.size()) > cfg.max_samples) {
        Rng rng(derive_seed({cfg.seed, 0x61747472u}));
        const std::vector<size_t> pick = rng.choose(rows.size(), static_cast<size_t>(cfg.max_samples));
        std::vector<int> subset;
        subset.reserve(pick.size());
        for (size_t p : pick) subset.push_back(rows[p]);
        std::sort(subset.begin(), subset.end());
        rows = std::move(subset);
    }

    std::vector<Matd> attrs;
    attrs.reserve(rows.size());
    Vecd encoded(layout.width);
    for (int row : rows) {
        encode_row_into(tab.values.row(row).transpose(), ds.schema, layout, encoded);
        attrs.push_back(integrated_gradients(model.tab, encoded, cfg.steps));
    }
    AttributionReport report = aggregate_importance(attrs, ds.schema);
    report.steps = cfg.steps;
    return report;
}

// Report files: importance table plus a ranked horizontal bar chart.
inline void write_attribution_report(const std::string& dir, const AttributionReport& report) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::vector<std::vector<std::string>> rows;
    for (int idx : report.ranking) {
        const auto& fi = report.features[static_cast<size_t>(idx)];
        rows.push_back({fi.name, format_double(fi.importance), std::to_string(fi.rank),
                        fi.morphometric ? "true" : "false"});
    }
    write_csv(dir + "/importance.csv", {"feature", "importance", "rank", "morphometric"}, rows);

    BarChart chart;
    chart.title = "Feature importance";
    chart.value_label = "mean |integrated gradient|";
    for (int idx : report.ranking) {
        const auto& fi = report.features[static_cast<size_t>(idx)];
        chart.items.push_back({fi.name, fi.importance, fi.morphometric});
    }
    write_bar_chart(dir + "/importance", chart);
}

}  // namespace bmcl
