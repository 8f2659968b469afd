#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bmcl/attribution.hpp"
#include "bmcl/config.hpp"
#include "bmcl/dataset.hpp"
#include "bmcl/eval.hpp"
#include "bmcl/experiments.hpp"
#include "bmcl/synthetic.hpp"
#include "bmcl/train.hpp"

namespace fs = std::filesystem;

namespace {

// Precedence: struct defaults < config file < individual flags. The master
// --seed rekeys every stochastic component so one value pins a whole run.
struct CommonFlags {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;

    bmcl::RunConfig resolve() const {
        bmcl::RunConfig cfg;
        if (!config_path.empty()) cfg = bmcl::load_run_config(config_path);
        if (seed_set) {
            cfg.synthetic.seed = seed;
            cfg.train.seed = seed;
            cfg.attribution.seed = seed;
            cfg.eval.fraction_seed = seed;
            for (size_t i = 0; i < cfg.eval.seeds.size(); ++i) cfg.eval.seeds[i] = seed + i;
        }
        return cfg;
    }
};

void add_common(CLI::App* sub, CommonFlags& flags) {
    sub->add_option("--config", flags.config_path, "JSON run configuration file");
    sub->add_option("--seed", flags.seed, "master seed for all randomness")->each([&](const std::string&) {
        flags.seed_set = true;
    });
}

void write_resolved_config(const std::string& dir, const bmcl::RunConfig& cfg) {
    fs::create_directories(dir);
    std::ofstream out(dir + "/config.json");
    out << bmcl::run_config_json(cfg).dump(2) << "\n";
}

void print_file(const std::string& path, const std::string& heading) {
    std::ifstream in(path);
    if (!in) return;
    std::cout << "== " << heading << " (" << path << ") ==\n";
    std::cout << in.rdbuf() << "\n";
}

int cmd_generate(const bmcl::RunConfig& cfg, const std::string& out_dir) {
    cfg.synthetic.validate();
    const bmcl::PairedDataset ds = bmcl::generate_synthetic(cfg.synthetic);
    bmcl::save_dataset(out_dir, ds);
    write_resolved_config(out_dir, cfg);
    std::cout << "wrote dataset: " << ds.n() << " samples, " << ds.n_classes() << " classes, images "
              << ds.images.c << "x" << ds.images.h << "x" << ds.images.w << " -> " << out_dir << "\n";
    return 0;
}

int cmd_pretrain(const bmcl::RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    cfg.train.validate();
    const bmcl::PairedDataset ds = bmcl::load_dataset(data_dir);
    const nlohmann::json resolved = bmcl::run_config_json(cfg);
    const bmcl::PretrainResult res = bmcl::pretrain(ds, cfg.train, out_dir, &std::cout, &resolved);
    std::cout << "final loss " << bmcl::format_double(res.epoch_losses.back()) << " after "
              << res.epoch_losses.size() << " epochs";
    if (res.skipped_batches > 0) std::cout << " (" << res.skipped_batches << " degenerate batches skipped)";
    std::cout << "\ncheckpoint: " << out_dir << "/checkpoints/epoch_" << cfg.train.epochs << "\n";
    return 0;
}

int cmd_finetune(const bmcl::RunConfig& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& out_dir) {
    cfg.eval.validate();
    const bmcl::Checkpoint ck = bmcl::load_checkpoint(checkpoint_path);
    const bmcl::PairedDataset ds = bmcl::load_dataset(data_dir);
    const bmcl::FinetuneReport report = bmcl::finetune(ck, ds, cfg.eval);
    bmcl::write_finetune_report(out_dir, report, bmcl::finetune_mode_name(cfg.eval.mode), cfg.eval.fraction);
    write_resolved_config(out_dir, cfg);
    std::cout << report.metric << " " << bmcl::format_double(report.mean) << " +/- "
              << bmcl::format_double(report.stdev) << " over " << report.per_seed_test.size()
              << " seeds (best lr " << bmcl::format_double(report.best_lr) << ", "
              << bmcl::finetune_mode_name(cfg.eval.mode) << ")\n";
    std::cout << "report: " << out_dir << "/summary.csv\n";
    return 0;
}

int cmd_attribute(const bmcl::RunConfig& cfg, const std::string& checkpoint_path, const std::string& data_dir,
                  const std::string& out_dir) {
    cfg.attribution.validate();
    const bmcl::Checkpoint ck = bmcl::load_checkpoint(checkpoint_path);
    const bmcl::PairedDataset ds = bmcl::load_dataset(data_dir);
    const bmcl::AttributionReport report = bmcl::attribute_checkpoint(ck, ds, cfg.attribution);
    bmcl::write_attribution_report(out_dir, report);
    write_resolved_config(out_dir, cfg);
    std::cout << "attributed " << report.n_samples << " samples at " << report.steps
              << " steps; morphometric share " << bmcl::format_double(report.morphometric_share) << "\n";
    std::cout << "top features:";
    for (size_t r = 0; r < report.ranking.size() && r < 5; ++r) {
        std::cout << " " << report.features[static_cast<size_t>(report.ranking[r])].name;
    }
    std::cout << "\nreport: " << out_dir << "/importance.csv\n";
    return 0;
}

int cmd_experiment(const bmcl::RunConfig& cfg, const std::string& name, const std::string& data_dir,
                   const std::string& out_dir) {
    bmcl::PairedDataset ds;
    if (!data_dir.empty()) {
        ds = bmcl::load_dataset(data_dir);
    } else {
        cfg.synthetic.validate();
        std::cout << "generating synthetic dataset (" << cfg.synthetic.n_samples << " samples)\n";
        ds = bmcl::generate_synthetic(cfg.synthetic);
        bmcl::save_dataset(out_dir + "/dataset", ds);
    }
    write_resolved_config(out_dir, cfg);
    const bmcl::ExperimentResult result =
        bmcl::run_experiment_suite(name, ds, cfg.train, cfg.eval, out_dir, &std::cout, cfg.experiment_options);
    std::cout << "experiment " << name << ": " << result.rows.size() << " rows -> " << out_dir
              << "/report.csv\n";
    return 0;
}

int cmd_inspect(const std::string& run_dir) {
    if (!fs::exists(run_dir)) throw bmcl::ContractError("run directory does not exist: " + run_dir);
    bool printed = false;
    for (const char* name : {"config.json", "manifest.json", "metrics.csv", "summary.csv", "cells.csv",
                             "report.csv", "importance.csv", "pretrain_loss.csv"}) {
        const std::string path = run_dir + std::string("/") + name;
        if (fs::exists(path)) {
            print_file(path, name);
            printed = true;
        }
    }
    if (!printed) throw bmcl::ContractError("no run artifacts found in " + run_dir);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal image/tabular contrastive pretraining toolkit"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "render a synthetic paired dataset");
    CommonFlags gen_common;
    add_common(gen, gen_common);
    std::string gen_out;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    int gen_n_samples = 0, gen_n_classes = 0, gen_image_size = 0, gen_noise = -1;
    double gen_label_noise = -1.0;
    gen->add_option("--n-samples", gen_n_samples, "sample count");
    gen->add_option("--n-classes", gen_n_classes, "class count");
    gen->add_option("--image-size", gen_image_size, "square image size");
    gen->add_option("--n-noise-features", gen_noise, "distractor feature count");
    gen->add_option("--label-noise-rate", gen_label_noise, "label corruption rate");

    // pretrain
    auto* pre = app.add_subcommand("pretrain", "contrastive pretraining run");
    CommonFlags pre_common;
    add_common(pre, pre_common);
    std::string pre_data, pre_out, pre_mode, pre_policy;
    pre->add_option("--data", pre_data, "dataset directory")->required();
    pre->add_option("--out", pre_out, "run directory")->required();
    pre->add_option("--mode", pre_mode, "multimodal | simclr | scarf");
    pre->add_option("--image-policy", pre_policy, "augmentation policy name");
    int pre_epochs = 0, pre_warmup = -1, pre_batch = 0, pre_out_size = 0, pre_ckpt_every = -1;
    double pre_lr = 0.0, pre_wd = -1.0, pre_rate = -1.0, pre_temp = 0.0, pre_lambda = -1.0;
    bool pre_laaf = false, pre_laaf_exempt = false, pre_paper = false;
    pre->add_option("--epochs", pre_epochs, "training epochs");
    pre->add_option("--warmup-epochs", pre_warmup, "linear warmup epochs");
    pre->add_option("--batch-size", pre_batch, "batch size");
    pre->add_option("--base-lr", pre_lr, "peak learning rate");
    pre->add_option("--weight-decay", pre_wd, "decoupled weight decay");
    pre->add_option("--corruption-rate", pre_rate, "tabular corruption rate");
    pre->add_option("--temperature", pre_temp, "softmax temperature");
    pre->add_option("--lambda", pre_lambda, "image-to-tabular direction weight");
    pre->add_option("--out-size", pre_out_size, "augmented image size");
    pre->add_option("--checkpoint-every", pre_ckpt_every, "periodic checkpoint interval (0 = off)");
    pre->add_flag("--laaf", pre_laaf, "append the label as a tabular feature");
    pre->add_flag("--laaf-exempt-from-corruption", pre_laaf_exempt, "never corrupt the label feature");
    pre->add_flag("--paper-scale", pre_paper, "full-size encoder widths");

    // finetune
    auto* fin = app.add_subcommand("finetune", "evaluate a checkpoint with a classifier sweep");
    CommonFlags fin_common;
    add_common(fin, fin_common);
    std::string fin_ckpt, fin_data, fin_out, fin_mode, fin_target;
    fin->add_option("--checkpoint", fin_ckpt, "checkpoint file")->required();
    fin->add_option("--data", fin_data, "dataset directory")->required();
    fin->add_option("--out", fin_out, "report directory")->required();
    fin->add_option("--mode", fin_mode, "frozen | trainable");
    fin->add_option("--target", fin_target, "image | tabular");
    double fin_fraction = 0.0;
    int fin_max_epochs = 0, fin_patience = 0, fin_batch = 0;
    fin->add_option("--fraction", fin_fraction, "train-split fraction");
    fin->add_option("--max-epochs", fin_max_epochs, "epoch cap");
    fin->add_option("--patience", fin_patience, "early-stop patience");
    fin->add_option("--batch-size", fin_batch, "batch size");

    // attribute
    auto* att = app.add_subcommand("attribute", "integrated-gradients feature importance");
    CommonFlags att_common;
    add_common(att, att_common);
    std::string att_ckpt, att_data, att_out;
    att->add_option("--checkpoint", att_ckpt, "checkpoint file")->required();
    att->add_option("--data", att_data, "dataset directory")->required();
    att->add_option("--out", att_out, "report directory")->required();
    int att_steps = 0, att_max_samples = 0;
    att->add_option("--steps", att_steps, "Riemann steps");
    att->add_option("--max-samples", att_max_samples, "test-sample cap");

    // experiment
    auto* exp = app.add_subcommand("experiment", "run a named pretrain/finetune suite");
    CommonFlags exp_common;
    add_common(exp, exp_common);
    std::string exp_name, exp_data, exp_out;
    exp->add_option("--name", exp_name, "baselines | low_data | morphometric_ablation | laaf_comparison")
        ->required();
    exp->add_option("--data", exp_data, "existing dataset directory (generated when omitted)");
    exp->add_option("--out", exp_out, "output directory");

    // inspect
    auto* ins = app.add_subcommand("inspect", "print a run directory's config and metrics");
    std::string ins_run;
    ins->add_option("--run", ins_run, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (gen->parsed()) {
            bmcl::RunConfig cfg = gen_common.resolve();
            if (gen->count("--n-samples")) cfg.synthetic.n_samples = gen_n_samples;
            if (gen->count("--n-classes")) cfg.synthetic.n_classes = gen_n_classes;
            if (gen->count("--image-size")) cfg.synthetic.image_size = gen_image_size;
            if (gen->count("--n-noise-features")) cfg.synthetic.n_noise_features = gen_noise;
            if (gen->count("--label-noise-rate")) cfg.synthetic.label_noise_rate = gen_label_noise;
            return cmd_generate(cfg, gen_out);
        }
        if (pre->parsed()) {
            bmcl::RunConfig cfg = pre_common.resolve();
            if (pre->count("--mode")) cfg.train.mode = bmcl::parse_pretrain_mode(pre_mode);
            if (pre->count("--image-policy")) cfg.train.image_policy = pre_policy;
            if (pre->count("--epochs")) cfg.train.epochs = pre_epochs;
            if (pre->count("--warmup-epochs")) cfg.train.warmup_epochs = pre_warmup;
            if (pre->count("--batch-size")) cfg.train.batch_size = pre_batch;
            if (pre->count("--base-lr")) cfg.train.base_lr = pre_lr;
            if (pre->count("--weight-decay")) cfg.train.weight_decay = pre_wd;
            if (pre->count("--corruption-rate")) cfg.train.corruption_rate = pre_rate;
            if (pre->count("--temperature")) cfg.train.loss.temperature = pre_temp;
            if (pre->count("--lambda")) cfg.train.loss.lambda = pre_lambda;
            if (pre->count("--out-size")) cfg.train.out_size = pre_out_size;
            if (pre->count("--checkpoint-every")) cfg.train.checkpoint_every = pre_ckpt_every;
            if (pre_laaf) cfg.train.laaf = true;
            if (pre_laaf_exempt) cfg.train.laaf_exempt_from_corruption = true;
            if (pre_paper) cfg.train.model = bmcl::paper_scale(cfg.train.model);
            return cmd_pretrain(cfg, pre_data, pre_out);
        }
        if (fin->parsed()) {
            bmcl::RunConfig cfg = fin_common.resolve();
            if (fin->count("--mode")) cfg.eval.mode = bmcl::parse_finetune_mode(fin_mode);
            if (fin->count("--target")) cfg.eval.target = bmcl::parse_probe_target(fin_target);
            if (fin->count("--fraction")) cfg.eval.fraction = fin_fraction;
            if (fin->count("--max-epochs")) cfg.eval.max_epochs = fin_max_epochs;
            if (fin->count("--patience")) cfg.eval.patience = fin_patience;
            if (fin->count("--batch-size")) cfg.eval.batch_size = fin_batch;
            return cmd_finetune(cfg, fin_ckpt, fin_data, fin_out);
        }
        if (att->parsed()) {
            bmcl::RunConfig cfg = att_common.resolve();
            if (att->count("--steps")) cfg.attribution.steps = att_steps;
            if (att->count("--max-samples")) cfg.attribution.max_samples = att_max_samples;
            return cmd_attribute(cfg, att_ckpt, att_data, att_out);
        }
        if (exp->parsed()) {
            bmcl::RunConfig cfg = exp_common.resolve();
            const std::string out = exp->count("--out") ? exp_out : "runs/" + exp_name;
            return cmd_experiment(cfg, exp_name, exp_data, out);
        }
        if (ins->parsed()) return cmd_inspect(ins_run);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return bmcl::exit_code_for(e);
    }
    return 1;
}
