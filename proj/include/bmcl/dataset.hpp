#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmcl/csv.hpp"
#include "bmcl/error.hpp"
#include "bmcl/hash.hpp"
#include "bmcl/image.hpp"
#include "bmcl/rng.hpp"
#include "bmcl/schema.hpp"
#include "bmcl/tabular.hpp"

namespace bmcl {

enum class Split : uint8_t { Train = 0, Val = 1, Test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ParseError("unknown split name: " + s);
}

// Row i of tabular, image i, label i and split i all describe the same sample.
struct PairedDataset {
    ImageArray images;
    TabularMatrix tabular;  // raw values, normalization happens downstream
    std::vector<int> labels;
    std::vector<Split> splits;
    TabularSchema schema;

    int n() const { return static_cast<int>(labels.size()); }

    std::vector<int> split_indices(Split s) const {
        std::vector<int> idx;
        for (int i = 0; i < n(); ++i)
            if (splits[i] == s) idx.push_back(i);
        return idx;
    }

    int n_classes() const {
        int top = -1;
        for (int y : labels) top = std::max(top, y);
        return top + 1;
    }

    void validate() const {
        const int N = n();
        if (images.n != N || tabular.values.rows() != N || static_cast<int>(splits.size()) != N) {
            throw ContractError("paired dataset size mismatch between images, tabular, labels, splits");
        }
        if (tabular.values.cols() != static_cast<Eigen::Index>(schema.size())) {
            throw ContractError("tabular width does not match schema");
        }
        for (int y : labels)
            if (y < 0) throw ContractError("negative class label");
    }
};

// ---------------------------------------------------------------------------
// Directory layout: images.bin (binary container), tabular.csv, schema.txt,
// samples.csv (label,split per row) and manifest.json tying them together.
// ---------------------------------------------------------------------------

inline void save_dataset(const std::string& dir, const PairedDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_image_container(dir + "/images.bin", ds.images);
    save_schema(dir + "/schema.txt", ds.schema);
    save_tabular(dir + "/tabular.csv", ds.tabular, ds.schema);

    CsvTable samples;
    samples.header = {"label", "split"};
    samples.rows.reserve(ds.n());
    for (int i = 0; i < ds.n(); ++i) {
        samples.rows.push_back({std::to_string(ds.labels[i]), split_name(ds.splits[i])});
    }
    write_csv(dir + "/samples.csv", samples.header, samples.rows);

    nlohmann::json manifest;
    manifest["n_samples"] = ds.n();
    manifest["image"] = {{"c", ds.images.c}, {"h", ds.images.h}, {"w", ds.images.w}};
    manifest["container"] = "images.bin";
    manifest["tabular"] = "tabular.csv";
    manifest["schema"] = "schema.txt";
    manifest["samples"] = "samples.csv";
    manifest["schema_hash"] = hex64(schema_hash(ds.schema));
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IntegrityError("cannot write manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

inline PairedDataset load_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IntegrityError("no manifest.json in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad manifest.json: ") + e.what());
    }

    PairedDataset ds;
    ds.schema = load_schema(dir + "/" + manifest.at("schema").get<std::string>());
    const std::string want_hash = manifest.at("schema_hash").get<std::string>();
    if (hex64(schema_hash(ds.schema)) != want_hash) {
        throw IntegrityError("schema file does not match manifest schema_hash in " + dir);
    }
    ds.images = load_image_container(dir + "/" + manifest.at("container").get<std::string>());
    ds.tabular = load_tabular(dir + "/" + manifest.at("tabular").get<std::string>(), ds.schema);

    const CsvTable samples = read_csv(dir + "/" + manifest.at("samples").get<std::string>());
    if (samples.header != std::vector<std::string>{"label", "split"}) {
        throw SchemaError("samples.csv must have header label,split");
    }
    for (const auto& row : samples.rows) {
        if (row.size() != 2) throw ParseError("samples.csv row width != 2");
        ds.labels.push_back(std::stoi(row[0]));
        ds.splits.push_back(parse_split(row[1]));
    }
    const int declared = manifest.at("n_samples").get<int>();
    if (declared != ds.n()) throw IntegrityError("manifest n_samples disagrees with samples.csv");
    ds.validate();
    return ds;
}

// PNG-directory ingestion: a manifest CSV with columns image_path,row_index
// mapping files onto tabular rows. All images must share one shape.
inline ImageArray load_images_from_manifest(const std::string& manifest_path, int n_rows) {
    namespace fs = std::filesystem;
    const CsvTable table = read_csv(manifest_path);
    if (table.header != std::vector<std::string>{"image_path", "row_index"}) {
        throw SchemaError("image manifest must have header image_path,row_index");
    }
    const std::string base = fs::path(manifest_path).parent_path().string();
    std::vector<bool> seen(static_cast<size_t>(n_rows), false);
    ImageArray images;
    for (const auto& row : table.rows) {
        if (row.size() != 2) throw ParseError("image manifest row width != 2");
        const int idx = std::stoi(row[1]);
        if (idx < 0 || idx >= n_rows) throw DomainError("image manifest row_index out of range: " + row[1]);
        if (seen[static_cast<size_t>(idx)]) throw DomainError("duplicate row_index in image manifest: " + row[1]);
        seen[static_cast<size_t>(idx)] = true;
        const Image img = load_png(base.empty() ? row[0] : base + "/" + row[0]);
        if (images.n == 0) {
            images.resize(n_rows, img.c, img.h, img.w);
        } else if (img.c != images.c || img.h != images.h || img.w != images.w) {
            throw DomainError("image shape mismatch at " + row[0]);
        }
        images.set_image(idx, img);
    }
    for (int i = 0; i < n_rows; ++i)
        if (!seen[static_cast<size_t>(i)]) throw IntegrityError("image manifest missing row_index " + std::to_string(i));
    return images;
}

// ---------------------------------------------------------------------------
// Label-as-a-feature: append the class label as one more categorical column so
// the contrastive objective can exploit it. Downstream probing never reads the
// column; run manifests record which columns each phase used.
// ---------------------------------------------------------------------------

inline constexpr const char* kLabelFeatureName = "__label__";

inline PairedDataset append_label_feature(const PairedDataset& ds) {
    if (ds.schema.index_of(kLabelFeatureName) >= 0) {
        throw ContractError(std::string("feature name collision: ") + kLabelFeatureName);
    }
    PairedDataset out = ds;

    std::set<int> ids(ds.labels.begin(), ds.labels.end());
    FeatureSpec label_feature;
    label_feature.name = kLabelFeatureName;
    label_feature.kind = FeatureKind::Categorical;
    label_feature.categories.assign(ids.begin(), ids.end());
    label_feature.morphometric = false;
    out.schema.features.push_back(label_feature);
    out.schema.validate();

    const Eigen::Index N = ds.tabular.values.rows();
    const Eigen::Index F = ds.tabular.values.cols();
    out.tabular.values.conservativeResize(N, F + 1);
    out.tabular.missing.conservativeResize(N, F + 1);
    for (Eigen::Index i = 0; i < N; ++i) {
        out.tabular.values(i, F) = static_cast<double>(ds.labels[static_cast<size_t>(i)]);
        out.tabular.missing(i, F) = false;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Low-data subsampling. Selection runs on a per-class priority order keyed by
// (seed, original row index), so a smaller fraction is always a prefix of a
// larger one: nested subsets come out of the construction, not bookkeeping.
// ---------------------------------------------------------------------------

namespace detail {

// Train rows of one class, sorted by their seed-deterministic priority.
inline std::vector<std::vector<int>> class_priority_orders(const PairedDataset& ds, uint64_t seed) {
    std::vector<std::vector<int>> per_class(static_cast<size_t>(ds.n_classes()));
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.splits[static_cast<size_t>(i)] == Split::Train) {
            per_class[static_cast<size_t>(ds.labels[static_cast<size_t>(i)])].push_back(i);
        }
    }
    for (auto& rows : per_class) {
        std::sort(rows.begin(), rows.end(), [seed](int a, int b) {
            const uint64_t ka = derive_seed({seed, 0x726f77u, static_cast<uint64_t>(a)});
            const uint64_t kb = derive_seed({seed, 0x726f77u, static_cast<uint64_t>(b)});
            return ka != kb ? ka < kb : a < b;
        });
    }
    return per_class;
}

}  // namespace detail

// Original train-row indices kept at the given fraction. Binary tasks are
// first balanced: every minority-class row plus an equal count of the other
// class, then the fraction applies per class.
inline std::vector<int> selected_train_rows(const PairedDataset& ds, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw DomainError("fraction must lie in (0, 1]");
    }
    auto per_class = detail::class_priority_orders(ds, seed);
    per_class.erase(std::remove_if(per_class.begin(), per_class.end(),
                                   [](const std::vector<int>& v) { return v.empty(); }),
                    per_class.end());
    if (per_class.size() < 2) throw DomainError("subsampling needs at least two classes in the train split");

    if (per_class.size() == 2) {
        // Balance on the minority class; ties keep both classes whole.
        size_t minority = per_class[0].size() <= per_class[1].size() ? 0 : 1;
        const size_t keep = per_class[minority].size();
        per_class[1 - minority].resize(keep);
    }

    std::vector<int> rows;
    for (const auto& cls : per_class) {
        const auto want = static_cast<size_t>(std::llround(fraction * static_cast<double>(cls.size())));
        if (want < 2) {
            throw DomainError("fraction " + std::to_string(fraction) + " yields fewer than 2 samples per class");
        }
        rows.insert(rows.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(want));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

inline PairedDataset subsample_balanced(const PairedDataset& ds, double fraction, uint64_t seed) {
    const std::vector<int> train_rows = selected_train_rows(ds, fraction, seed);

    std::vector<int> keep = train_rows;
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.splits[static_cast<size_t>(i)] != Split::Train) keep.push_back(i);
    }
    std::sort(keep.begin(), keep.end());

    PairedDataset out;
    out.schema = ds.schema;
    out.images.resize(static_cast<int>(keep.size()), ds.images.c, ds.images.h, ds.images.w);
    out.tabular.values.resize(static_cast<Eigen::Index>(keep.size()), ds.tabular.values.cols());
    out.tabular.missing.resize(static_cast<Eigen::Index>(keep.size()), ds.tabular.missing.cols());
    out.tabular.norm_stats = ds.tabular.norm_stats;
    for (size_t j = 0; j < keep.size(); ++j) {
        const int i = keep[j];
        std::memcpy(out.images.at(static_cast<int>(j)), ds.images.at(i), ds.images.stride() * sizeof(float));
        out.tabular.values.row(static_cast<Eigen::Index>(j)) = ds.tabular.values.row(i);
        out.tabular.missing.row(static_cast<Eigen::Index>(j)) = ds.tabular.missing.row(i);
        out.labels.push_back(ds.labels[static_cast<size_t>(i)]);
        out.splits.push_back(ds.splits[static_cast<size_t>(i)]);
    }
    out.validate();
    return out;
}

}  // namespace bmcl
