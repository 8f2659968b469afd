#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmcl/attribution.hpp"
#include "bmcl/error.hpp"
#include "bmcl/eval.hpp"
#include "bmcl/experiments.hpp"
#include "bmcl/synthetic.hpp"
#include "bmcl/train.hpp"

namespace bmcl {

// ---------------------------------------------------------------------------
// Run configuration document. Strict: any key not listed here is rejected so
// a typo can never silently fall back to a default. CLI flags override
// individual keys after the file is applied; all sections are optional.
// ---------------------------------------------------------------------------

struct RunPaths {
    std::string data_dir;
    std::string out_dir;
    std::string checkpoint;
};

struct RunConfig {
    SyntheticConfig synthetic;
    TrainConfig train;
    EvalConfig eval;
    AttributionConfig attribution;
    std::string experiment = "baselines";
    ExperimentOptions experiment_options;
    RunPaths paths;
};

namespace detail {

inline void require_known_keys(const nlohmann::json& obj, const std::string& where,
                               const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
    }
}

template <typename T>
inline void read_key(const nlohmann::json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
    }
}

inline void read_string_key(const nlohmann::json& obj, const std::string& where, const char* key,
                            std::string& out) {
    read_key<std::string>(obj, where, key, out);
}

}  // namespace detail

inline ProbeTarget parse_probe_target(const std::string& s) {
    if (s == "image") return ProbeTarget::Image;
    if (s == "tabular") return ProbeTarget::Tabular;
    throw ConfigError("probe target must be image or tabular");
}

inline const char* probe_target_name(ProbeTarget t) { return t == ProbeTarget::Image ? "image" : "tabular"; }

inline DenominatorMode parse_denominator_mode(const std::string& s) {
    if (s == "clip_inclusive") return DenominatorMode::ClipInclusive;
    if (s == "literal_eq2") return DenominatorMode::LiteralEq2;
    throw ConfigError("denominator_mode must be clip_inclusive or literal_eq2");
}

inline Supervision parse_supervision(const std::string& s) {
    if (s == "none") return Supervision::None;
    if (s == "fn_elimination") return Supervision::FnElimination;
    if (s == "supcon") return Supervision::Supcon;
    throw ConfigError("supervision must be none, fn_elimination or supcon");
}

inline RunConfig parse_run_config(const nlohmann::json& doc) {
    using detail::read_key;
    using detail::require_known_keys;
    RunConfig cfg;
    require_known_keys(doc, "config",
                       {"synthetic", "train", "eval", "attribution", "experiment", "paths"});

    if (doc.contains("synthetic")) {
        const auto& s = doc.at("synthetic");
        require_known_keys(s, "synthetic",
                           {"n_samples", "n_classes", "image_size", "n_noise_features", "label_noise_rate",
                            "seed"});
        read_key(s, "synthetic", "n_samples", cfg.synthetic.n_samples);
        read_key(s, "synthetic", "n_classes", cfg.synthetic.n_classes);
        read_key(s, "synthetic", "image_size", cfg.synthetic.image_size);
        read_key(s, "synthetic", "n_noise_features", cfg.synthetic.n_noise_features);
        read_key(s, "synthetic", "label_noise_rate", cfg.synthetic.label_noise_rate);
        read_key(s, "synthetic", "seed", cfg.synthetic.seed);
    }

    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        require_known_keys(t, "train",
                           {"epochs", "warmup_epochs", "batch_size", "base_lr", "weight_decay", "seed", "mode",
                            "laaf", "laaf_exempt_from_corruption", "image_policy", "out_size", "corruption_rate",
                            "corruption_bernoulli", "checkpoint_every", "loss", "model"});
        read_key(t, "train", "epochs", cfg.train.epochs);
        read_key(t, "train", "warmup_epochs", cfg.train.warmup_epochs);
        read_key(t, "train", "batch_size", cfg.train.batch_size);
        read_key(t, "train", "base_lr", cfg.train.base_lr);
        read_key(t, "train", "weight_decay", cfg.train.weight_decay);
        read_key(t, "train", "seed", cfg.train.seed);
        read_key(t, "train", "laaf", cfg.train.laaf);
        read_key(t, "train", "laaf_exempt_from_corruption", cfg.train.laaf_exempt_from_corruption);
        detail::read_string_key(t, "train", "image_policy", cfg.train.image_policy);
        read_key(t, "train", "out_size", cfg.train.out_size);
        read_key(t, "train", "corruption_rate", cfg.train.corruption_rate);
        read_key(t, "train", "corruption_bernoulli", cfg.train.corruption_bernoulli);
        read_key(t, "train", "checkpoint_every", cfg.train.checkpoint_every);
        if (t.contains("mode")) cfg.train.mode = parse_pretrain_mode(t.at("mode").get<std::string>());
        if (t.contains("loss")) {
            const auto& l = t.at("loss");
            require_known_keys(l, "train.loss", {"temperature", "lambda", "denominator_mode", "supervision"});
            read_key(l, "train.loss", "temperature", cfg.train.loss.temperature);
            read_key(l, "train.loss", "lambda", cfg.train.loss.lambda);
            if (l.contains("denominator_mode")) {
                cfg.train.loss.denominator_mode =
                    parse_denominator_mode(l.at("denominator_mode").get<std::string>());
            }
            if (l.contains("supervision")) {
                cfg.train.loss.supervision = parse_supervision(l.at("supervision").get<std::string>());
            }
        }
        if (t.contains("model")) {
            const auto& m = t.at("model");
            require_known_keys(m, "train.model",
                               {"tab_hidden", "tab_embed", "img_channels", "img_embed", "proj_dim",
                                "tab_head_bias", "paper_scale"});
            bool paper = false;
            read_key(m, "train.model", "paper_scale", paper);
            if (paper) cfg.train.model = paper_scale(cfg.train.model);
            read_key(m, "train.model", "tab_hidden", cfg.train.model.tab_hidden);
            read_key(m, "train.model", "tab_embed", cfg.train.model.tab_embed);
            read_key(m, "train.model", "img_channels", cfg.train.model.img_channels);
            read_key(m, "train.model", "img_embed", cfg.train.model.img_embed);
            read_key(m, "train.model", "proj_dim", cfg.train.model.proj_dim);
            read_key(m, "train.model", "tab_head_bias", cfg.train.model.tab_head_bias);
        }
    }

    if (doc.contains("eval")) {
        const auto& e = doc.at("eval");
        require_known_keys(e, "eval",
                           {"mode", "target", "lr_grid", "min_delta", "patience", "max_epochs", "batch_size",
                            "seeds", "fraction", "fraction_seed", "from_scratch"});
        if (e.contains("mode")) cfg.eval.mode = parse_finetune_mode(e.at("mode").get<std::string>());
        if (e.contains("target")) cfg.eval.target = parse_probe_target(e.at("target").get<std::string>());
        read_key(e, "eval", "lr_grid", cfg.eval.lr_grid);
        read_key(e, "eval", "min_delta", cfg.eval.min_delta);
        read_key(e, "eval", "patience", cfg.eval.patience);
        read_key(e, "eval", "max_epochs", cfg.eval.max_epochs);
        read_key(e, "eval", "batch_size", cfg.eval.batch_size);
        read_key(e, "eval", "seeds", cfg.eval.seeds);
        read_key(e, "eval", "fraction", cfg.eval.fraction);
        read_key(e, "eval", "fraction_seed", cfg.eval.fraction_seed);
        read_key(e, "eval", "from_scratch", cfg.eval.from_scratch);
    }

    if (doc.contains("attribution")) {
        const auto& a = doc.at("attribution");
        require_known_keys(a, "attribution", {"steps", "max_samples", "seed"});
        read_key(a, "attribution", "steps", cfg.attribution.steps);
        read_key(a, "attribution", "max_samples", cfg.attribution.max_samples);
        read_key(a, "attribution", "seed", cfg.attribution.seed);
    }

    if (doc.contains("experiment")) {
        const auto& x = doc.at("experiment");
        require_known_keys(x, "experiment", {"name", "fractions"});
        detail::read_string_key(x, "experiment", "name", cfg.experiment);
        read_key(x, "experiment", "fractions", cfg.experiment_options.fractions);
    }

    if (doc.contains("paths")) {
        const auto& p = doc.at("paths");
        require_known_keys(p, "paths", {"data_dir", "out_dir", "checkpoint"});
        detail::read_string_key(p, "paths", "data_dir", cfg.paths.data_dir);
        detail::read_string_key(p, "paths", "out_dir", cfg.paths.out_dir);
        detail::read_string_key(p, "paths", "checkpoint", cfg.paths.checkpoint);
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_run_config(doc);
}

// Fully resolved document: defaults merged with whatever the file and flags
// set. Stored in run directories so runs are self-describing.
inline nlohmann::json run_config_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["synthetic"] = {{"n_samples", cfg.synthetic.n_samples},
                      {"n_classes", cfg.synthetic.n_classes},
                      {"image_size", cfg.synthetic.image_size},
                      {"n_noise_features", cfg.synthetic.n_noise_features},
                      {"label_noise_rate", cfg.synthetic.label_noise_rate},
                      {"seed", cfg.synthetic.seed}};
    j["train"] = train_config_json(cfg.train);
    j["eval"] = {{"mode", finetune_mode_name(cfg.eval.mode)},
                 {"target", probe_target_name(cfg.eval.target)},
                 {"lr_grid", cfg.eval.lr_grid},
                 {"min_delta", cfg.eval.min_delta},
                 {"patience", cfg.eval.patience},
                 {"max_epochs", cfg.eval.max_epochs},
                 {"batch_size", cfg.eval.batch_size},
                 {"seeds", cfg.eval.seeds},
                 {"fraction", cfg.eval.fraction},
                 {"fraction_seed", cfg.eval.fraction_seed},
                 {"from_scratch", cfg.eval.from_scratch}};
    j["attribution"] = {{"steps", cfg.attribution.steps},
                        {"max_samples", cfg.attribution.max_samples},
                        {"seed", cfg.attribution.seed}};
    j["experiment"] = {{"name", cfg.experiment}, {"fractions", cfg.experiment_options.fractions}};
    j["paths"] = {{"data_dir", cfg.paths.data_dir},
                  {"out_dir", cfg.paths.out_dir},
                  {"checkpoint", cfg.paths.checkpoint}};
    return j;
}

}  // namespace bmcl
