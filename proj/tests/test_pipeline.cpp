// End-to-end pipeline tests: synthetic dataset properties, evaluation
// metrics, the pretraining loop's artifacts and determinism, the finetuning
// protocol, and integrated-gradients attribution.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bmcl/attribution.hpp"
#include "bmcl/checkpoint.hpp"
#include "bmcl/dataset.hpp"
#include "bmcl/eval.hpp"
#include "bmcl/metrics.hpp"
#include "bmcl/synthetic.hpp"
#include "bmcl/train.hpp"

#include "helpers.hpp"

namespace {

bmcl::SyntheticConfig small_config() {
    bmcl::SyntheticConfig cfg;
    cfg.n_samples = 220;
    cfg.n_classes = 4;
    cfg.n_noise_features = 2;
    cfg.seed = 5;
    return cfg;
}

const bmcl::PairedDataset& small_dataset() {
    static const bmcl::PairedDataset ds = bmcl::generate_synthetic(small_config());
    return ds;
}

bmcl::TrainConfig tiny_train_config() {
    bmcl::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.warmup_epochs = 1;
    cfg.batch_size = 32;
    cfg.seed = 9;
    cfg.model.tab_hidden = 16;
    cfg.model.tab_embed = 16;
    cfg.model.img_channels = {4, 8};
    cfg.model.img_embed = 16;
    cfg.model.proj_dim = 8;
    return cfg;
}

// One short multimodal pretraining run shared by the protocol tests below.
const bmcl::PretrainResult& shared_pretrain() {
    static const bmcl::PretrainResult result = [] {
        const auto dir = testutil::scratch_dir("shared_pretrain");
        return bmcl::pretrain(small_dataset(), tiny_train_config(), (dir / "run").string());
    }();
    return result;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Synthetic paired dataset
// ---------------------------------------------------------------------------

TEST_CASE("synthetic generation is bit-reproducible for a fixed seed") {
    const auto a = bmcl::generate_synthetic(small_config());
    const auto b = bmcl::generate_synthetic(small_config());
    CHECK(a.labels == b.labels);
    CHECK(a.splits == b.splits);
    CHECK(a.images.data == b.images.data);
    CHECK((a.tabular.values - b.tabular.values).cwiseAbs().maxCoeff() == 0.0);

    auto shifted = small_config();
    shifted.seed = 6;
    const auto c = bmcl::generate_synthetic(shifted);
    CHECK(c.images.data != a.images.data);
}

TEST_CASE("morphometric columns are exactly recomputable from the images") {
    const auto& ds = small_dataset();
    for (int i = 0; i < ds.n(); i += 7) {
        const auto m = bmcl::measure_shape(ds.images.image(i));
        CHECK(ds.tabular.values(i, 0) == m.area_frac);
        CHECK(ds.tabular.values(i, 1) == m.bbox_w);
        CHECK(ds.tabular.values(i, 2) == m.bbox_h);
        CHECK(ds.tabular.values(i, 3) == m.aspect);
        CHECK(ds.tabular.values(i, 4) == m.perimeter);
    }
}

TEST_CASE("shape area separates the smallest and largest size levels strongly") {
    // With 4 classes, classes 0 and 2 share a family but sit at different
    // size levels, so their area distributions must be far apart.
    bmcl::SyntheticConfig cfg = small_config();
    cfg.n_samples = 1000;
    const auto ds = bmcl::generate_synthetic(cfg);

    std::vector<double> area_small, area_large;
    for (int i = 0; i < ds.n(); ++i) {
        if (ds.labels[static_cast<size_t>(i)] == 0) area_small.push_back(ds.tabular.values(i, 0));
        if (ds.labels[static_cast<size_t>(i)] == 2) area_large.push_back(ds.tabular.values(i, 0));
    }
    REQUIRE(area_small.size() > 50);
    REQUIRE(area_large.size() > 50);
    const auto ms = bmcl::mean_std(area_small);
    const auto ml = bmcl::mean_std(area_large);
    const double pooled = std::sqrt(ms.stdev * ms.stdev / static_cast<double>(area_small.size()) +
                                    ml.stdev * ml.stdev / static_cast<double>(area_large.size()));
    const double t = (ml.mean - ms.mean) / pooled;
    INFO("t statistic " << t);
    CHECK(t > 5.0);
}

TEST_CASE("splits cover the dataset in 70/15/15 proportions without overlap") {
    const auto& ds = small_dataset();
    const auto train = ds.split_indices(bmcl::Split::Train);
    const auto val = ds.split_indices(bmcl::Split::Val);
    const auto test = ds.split_indices(bmcl::Split::Test);

    CHECK(train.size() == static_cast<size_t>(std::llround(0.70 * ds.n())));
    CHECK(val.size() == static_cast<size_t>(std::llround(0.15 * ds.n())));
    CHECK(train.size() + val.size() + test.size() == static_cast<size_t>(ds.n()));

    std::set<int> seen;
    for (const auto* rows : {&train, &val, &test})
        for (int r : *rows) CHECK(seen.insert(r).second);
    CHECK(seen.size() == static_cast<size_t>(ds.n()));
}

TEST_CASE("label noise flips the requested share of labels to other classes") {
    bmcl::SyntheticConfig clean = small_config();
    clean.n_samples = 2000;
    bmcl::SyntheticConfig noisy = clean;
    noisy.label_noise_rate = 0.3;

    const auto a = bmcl::generate_synthetic(clean);
    const auto b = bmcl::generate_synthetic(noisy);
    // Images and tabular rows are unaffected; only labels move.
    CHECK(a.images.data == b.images.data);
    CHECK((a.tabular.values - b.tabular.values).cwiseAbs().maxCoeff() == 0.0);

    int flipped = 0;
    for (size_t i = 0; i < a.labels.size(); ++i)
        if (a.labels[i] != b.labels[i]) ++flipped;
    const double rate = static_cast<double>(flipped) / static_cast<double>(a.labels.size());
    CHECK(rate > 0.25);
    CHECK(rate < 0.35);
}

TEST_CASE("class tags agree with the true class about three quarters of the time") {
    bmcl::SyntheticConfig cfg = small_config();
    cfg.n_samples = 4000;
    const auto ds = bmcl::generate_synthetic(cfg);
    int agree = 0;
    for (int i = 0; i < ds.n(); ++i) {
        if (static_cast<int>(ds.tabular.values(i, 5)) == ds.labels[static_cast<size_t>(i)]) ++agree;
    }
    const double rate = static_cast<double>(agree) / ds.n();
    CHECK(rate > 0.71);
    CHECK(rate < 0.79);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST_CASE("ranking metric hand values") {
    CHECK(bmcl::auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    CHECK(bmcl::auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
    CHECK(bmcl::auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    CHECK(bmcl::auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == Catch::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(bmcl::auc({0.1, 0.2}, {1, 1}), bmcl::DomainError);
    CHECK_THROWS_AS(bmcl::auc({0.1, 0.2}, {0, 2}), bmcl::DomainError);
    CHECK_THROWS_AS(bmcl::auc({0.1}, {0, 1}), bmcl::ContractError);
}

TEST_CASE("ranking metric equals the pairwise oracle on tied random scores") {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<int> grid(0, 9);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 200;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        int pos = 0;
        for (size_t i = 0; i < n; ++i) {
            scores[i] = grid(gen) / 10.0;  // deliberate ties across classes
            labels[i] = coin(gen) ? 1 : 0;
            pos += labels[i];
        }
        if (pos == 0 || pos == static_cast<int>(n)) continue;
        const double got = bmcl::auc(scores, labels);
        const double want = testutil::oracle_auc(scores, labels);
        CHECK(std::abs(got - want) < 1e-12);
    }
}

TEST_CASE("top-k accuracy handles ties by preferring the lower class index") {
    bmcl::Matd ident = bmcl::Matd::Identity(4, 4);
    CHECK(bmcl::topk_accuracy(ident, {0, 1, 2, 3}, 1) == 1.0);

    bmcl::Matd flat = bmcl::Matd::Zero(4, 3);
    CHECK(bmcl::topk_accuracy(flat, {0, 0, 1, 2}, 1) == Catch::Approx(0.5));
    CHECK(bmcl::topk_accuracy(flat, {0, 0, 1, 2}, 2) == Catch::Approx(0.75));
    CHECK(bmcl::topk_accuracy(flat, {0, 0, 1, 2}, 3) == 1.0);

    // Shifting every logit by a constant cannot change any ranking.
    std::mt19937_64 gen(3);
    std::normal_distribution<double> d(0.0, 1.0);
    bmcl::Matd logits(50, 6);
    std::vector<int> labels(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
        for (Eigen::Index j = 0; j < 6; ++j) logits(i, j) = d(gen);
        labels[static_cast<size_t>(i)] = static_cast<int>(i) % 6;
    }
    bmcl::Matd shifted = logits.array() + 11.5;
    CHECK(bmcl::topk_accuracy(logits, labels, 1) == bmcl::topk_accuracy(shifted, labels, 1));

    CHECK_THROWS_AS(bmcl::topk_accuracy(flat, {0, 0, 1, 3}, 1), bmcl::DomainError);
    CHECK_THROWS_AS(bmcl::topk_accuracy(flat, {0, 0, 1, -1}, 1), bmcl::DomainError);
    CHECK_THROWS_AS(bmcl::topk_accuracy(flat, {0, 0, 1, 2}, 4), bmcl::ContractError);
}

TEST_CASE("random logits score near chance on many classes") {
    const Eigen::Index n = 10000, c = 286;
    std::mt19937_64 gen(11);
    std::normal_distribution<double> d(0.0, 1.0);
    bmcl::Matd logits(n, c);
    std::vector<int> labels(static_cast<size_t>(n));
    std::uniform_int_distribution<int> lab(0, static_cast<int>(c) - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) logits(i, j) = d(gen);
        labels[static_cast<size_t>(i)] = lab(gen);
    }
    const double acc = bmcl::topk_accuracy(logits, labels, 1);
    const double p = 1.0 / static_cast<double>(c);
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    CHECK(std::abs(acc - p) < 3.0 * sigma + 1e-12);
}

TEST_CASE("mean and standard deviation summary") {
    const auto single = bmcl::mean_std({0.42});
    CHECK(single.mean == 0.42);
    CHECK(single.stdev == 0.0);

    // Population spread: {1, 3} deviates by 1 on each side of the mean.
    const auto pair = bmcl::mean_std({1.0, 3.0});
    CHECK(pair.mean == Catch::Approx(2.0));
    CHECK(pair.stdev == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("early stopping requires min_delta progress and honors patience") {
    bmcl::EarlyStopper stopper(0.5, 2);
    CHECK_FALSE(stopper.observe(0.0, 1));   // first value always improves
    CHECK_FALSE(stopper.observe(0.5, 2));   // gain == min_delta counts
    CHECK_FALSE(stopper.observe(0.99, 3));  // gain 0.49 < min_delta: stall 1
    CHECK(stopper.observe(0.98, 4));        // stall 2 == patience: halt
    CHECK(stopper.best() == 0.5);
    CHECK(stopper.best_epoch() == 2);

    // A timely improvement resets the stall counter.
    bmcl::EarlyStopper s2(0.0002, 2);
    CHECK_FALSE(s2.observe(0.1, 1));
    CHECK_FALSE(s2.observe(0.1, 2));   // flat: stall 1
    CHECK_FALSE(s2.observe(0.2, 3));   // improvement: reset
    CHECK_FALSE(s2.observe(0.2, 4));   // stall 1
    CHECK(s2.observe(0.2, 5));         // stall 2: halt
    CHECK(s2.best_epoch() == 3);

    CHECK_THROWS_AS(bmcl::EarlyStopper(0.1, 0), bmcl::ConfigError);
}

// ---------------------------------------------------------------------------
// Pretraining loop
// ---------------------------------------------------------------------------

TEST_CASE("two pretraining runs with one seed produce identical weights and logs") {
    const auto dir = testutil::scratch_dir("pretrain_determinism");
    const auto cfg = tiny_train_config();
    const auto r1 = bmcl::pretrain(small_dataset(), cfg, (dir / "a").string());
    const auto r2 = bmcl::pretrain(small_dataset(), cfg, (dir / "b").string());

    CHECK(r1.checkpoint.compute_param_digest() == r2.checkpoint.compute_param_digest());
    CHECK(r1.epoch_losses == r2.epoch_losses);
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));

    auto seeded = cfg;
    seeded.seed = 10;
    const auto r3 = bmcl::pretrain(small_dataset(), seeded);
    CHECK(r3.checkpoint.compute_param_digest() != r1.checkpoint.compute_param_digest());
}

TEST_CASE("contrastive loss falls over a short multimodal run") {
    auto cfg = tiny_train_config();
    cfg.epochs = 6;
    cfg.warmup_epochs = 2;
    const auto dir = testutil::scratch_dir("pretrain_descends");
    const auto res = bmcl::pretrain(small_dataset(), cfg, (dir / "run").string());
    REQUIRE(res.epoch_losses.size() == 6);
    CHECK(res.epoch_losses.back() < res.epoch_losses.front());
    CHECK(res.skipped_batches == 0);
    for (double l : res.epoch_losses) CHECK(std::isfinite(l));
}

TEST_CASE("a run directory carries metrics, config echo, manifest and checkpoints") {
    const auto& res = shared_pretrain();
    namespace fs = std::filesystem;
    const fs::path run(res.run_dir);
    REQUIRE(fs::exists(run / "metrics.csv"));
    REQUIRE(fs::exists(run / "config.json"));
    REQUIRE(fs::exists(run / "train.log"));
    REQUIRE(fs::exists(run / "manifest.json"));
    REQUIRE(fs::exists(run / "checkpoints" / "epoch_3"));

    // metrics.csv: header plus one row per epoch, epochs strictly increasing.
    std::ifstream metrics(run / "metrics.csv");
    std::string line;
    std::getline(metrics, line);
    CHECK(line == "epoch,loss,lr");
    int prev = 0, rows = 0;
    while (std::getline(metrics, line)) {
        const int epoch = std::stoi(line.substr(0, line.find(',')));
        CHECK(epoch == prev + 1);
        prev = epoch;
        ++rows;
    }
    CHECK(rows == 3);

    const auto config = nlohmann::json::parse(slurp(run / "config.json"));
    CHECK(config.at("epochs") == 3);
    CHECK(config.at("batch_size") == 32);
    CHECK(config.at("mode") == "multimodal");

    const auto manifest = nlohmann::json::parse(slurp(run / "manifest.json"));
    CHECK(manifest.at("epochs") == 3);
    CHECK(manifest.at("laaf") == false);
    CHECK(manifest.at("checkpoint") == "checkpoints/epoch_3");
    CHECK(manifest.at("param_digest") == res.checkpoint.manifest.at("param_digest"));
    CHECK(manifest.at("final_loss").get<double>() == res.epoch_losses.back());

    // The saved final checkpoint is the returned one.
    const auto loaded = bmcl::load_checkpoint((run / "checkpoints" / "epoch_3").string());
    CHECK(loaded.compute_param_digest() == res.checkpoint.compute_param_digest());
}

TEST_CASE("periodic checkpointing writes the requested epochs only") {
    auto cfg = tiny_train_config();
    cfg.epochs = 4;
    cfg.warmup_epochs = 1;
    cfg.checkpoint_every = 2;
    const auto dir = testutil::scratch_dir("pretrain_periodic");
    bmcl::pretrain(small_dataset(), cfg, (dir / "run").string());
    namespace fs = std::filesystem;
    CHECK(fs::exists(dir / "run" / "checkpoints" / "epoch_2"));
    CHECK(fs::exists(dir / "run" / "checkpoints" / "epoch_4"));
    CHECK_FALSE(fs::exists(dir / "run" / "checkpoints" / "epoch_1"));
    CHECK_FALSE(fs::exists(dir / "run" / "checkpoints" / "epoch_3"));
}

TEST_CASE("label-supervised pretraining refuses a single-class dataset") {
    auto ds = small_dataset();
    for (auto& y : ds.labels) y = 0;
    auto cfg = tiny_train_config();
    cfg.epochs = 1;
    cfg.warmup_epochs = 0;
    cfg.loss.supervision = bmcl::Supervision::Supcon;
    // Every batch is degenerate (no usable contrast), so the epoch aborts.
    CHECK_THROWS_AS(bmcl::pretrain(ds, cfg), bmcl::DegenerateBatchError);
}

TEST_CASE("image-only and tabular-only modes leave the other tower untouched") {
    auto cfg = tiny_train_config();
    cfg.epochs = 1;
    cfg.warmup_epochs = 0;
    cfg.mode = bmcl::PretrainMode::Simclr;
    const auto simclr = bmcl::pretrain(small_dataset(), cfg);
    const auto simclr2 = bmcl::pretrain(small_dataset(), cfg);

    cfg.mode = bmcl::PretrainMode::Scarf;
    const auto scarf = bmcl::pretrain(small_dataset(), cfg);

    const auto diff = [](const Eigen::MatrixXf& a, const Eigen::MatrixXf& b) {
        return (a - b).cwiseAbs().maxCoeff();
    };
    // Both runs draw the same init stream; only the tower a mode trains may
    // drift from it, so the cross-mode tensors must disagree...
    CHECK(diff(simclr.checkpoint.tensor("tab.fc1.W"), scarf.checkpoint.tensor("tab.fc1.W")) > 0.0f);
    CHECK(diff(simclr.checkpoint.tensor("img.conv0.W"), scarf.checkpoint.tensor("img.conv0.W")) > 0.0f);
    // ...while the untouched tower is bit-stable across repeated runs.
    CHECK(diff(simclr.checkpoint.tensor("tab.fc1.W"), simclr2.checkpoint.tensor("tab.fc1.W")) == 0.0f);
    CHECK(diff(simclr.checkpoint.tensor("img.conv0.W"), simclr2.checkpoint.tensor("img.conv0.W")) == 0.0f);
}

// ---------------------------------------------------------------------------
// Finetuning protocol
// ---------------------------------------------------------------------------

namespace {

bmcl::EvalConfig quick_eval() {
    bmcl::EvalConfig cfg;
    cfg.lr_grid = {1e-2};
    cfg.max_epochs = 12;
    cfg.patience = 4;
    cfg.seeds = {0, 1};
    cfg.batch_size = 64;
    return cfg;
}

}  // namespace

TEST_CASE("frozen probing leaves the encoder bit-identical and reports sane metrics") {
    const auto& pre = shared_pretrain();
    auto cfg = quick_eval();
    cfg.mode = bmcl::FinetuneMode::Frozen;

    const auto report = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);
    CHECK(report.encoder_digest_before == report.encoder_digest_after);
    CHECK(report.metric == "top1");
    CHECK(report.best_lr == 1e-2);
    REQUIRE(report.per_seed_test.size() == 2);
    for (double m : report.per_seed_test) {
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
    }
    CHECK(report.cells.size() == 2);  // one lr x two seeds
    for (const auto& cell : report.cells) {
        CHECK(cell.epochs_run >= 1);
        CHECK(cell.epochs_run <= cfg.max_epochs);
        CHECK(cell.best_epoch >= 1);
    }

    // Determinism: the same evaluation twice gives the same numbers.
    const auto again = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);
    CHECK(again.per_seed_test == report.per_seed_test);
    CHECK(again.mean == report.mean);
}

TEST_CASE("trainable finetuning moves the encoder weights") {
    const auto& pre = shared_pretrain();
    auto cfg = quick_eval();
    cfg.mode = bmcl::FinetuneMode::Trainable;
    cfg.seeds = {0};
    cfg.max_epochs = 2;
    cfg.patience = 1;

    const auto report = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);
    CHECK(report.encoder_digest_before != report.encoder_digest_after);
    CHECK(report.encoder_digest_before == pre.checkpoint.compute_param_digest());
}

TEST_CASE("training from scratch starts from different weights than the checkpoint") {
    const auto& pre = shared_pretrain();
    auto cfg = quick_eval();
    cfg.mode = bmcl::FinetuneMode::Trainable;
    cfg.seeds = {0};
    cfg.max_epochs = 2;
    cfg.patience = 1;
    cfg.from_scratch = true;

    const auto report = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);
    CHECK(report.encoder_digest_before != pre.checkpoint.compute_param_digest());

    // A frozen probe of untrained weights is not a meaningful protocol.
    auto bad = cfg;
    bad.mode = bmcl::FinetuneMode::Frozen;
    CHECK_THROWS_AS(bmcl::finetune(pre.checkpoint, small_dataset(), bad), bmcl::ConfigError);
}

TEST_CASE("low-data probes train on nested subsets") {
    const auto& pre = shared_pretrain();
    auto cfg = quick_eval();
    cfg.max_epochs = 4;
    cfg.seeds = {0};

    cfg.fraction = 0.25;
    const auto quarter = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);
    cfg.fraction = 0.75;
    const auto most = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);
    cfg.fraction = 1.0;
    const auto full = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);

    const std::set<int> q(quarter.train_rows.begin(), quarter.train_rows.end());
    const std::set<int> m(most.train_rows.begin(), most.train_rows.end());
    const std::set<int> f(full.train_rows.begin(), full.train_rows.end());
    CHECK(q.size() < m.size());
    CHECK(m.size() < f.size());
    for (int r : q) CHECK(m.count(r) == 1);
    for (int r : m) CHECK(f.count(r) == 1);
    CHECK(f.size() == small_dataset().split_indices(bmcl::Split::Train).size());
}

TEST_CASE("tabular probing of a label-as-feature checkpoint is refused") {
    const auto& pre = shared_pretrain();
    auto ck = pre.checkpoint;
    ck.manifest["laaf"] = true;
    auto cfg = quick_eval();
    cfg.target = bmcl::ProbeTarget::Tabular;
    CHECK_THROWS_AS(bmcl::finetune(ck, small_dataset(), cfg), bmcl::DomainError);
}

TEST_CASE("finetune reports round-trip through their CSV files") {
    const auto& pre = shared_pretrain();
    auto cfg = quick_eval();
    cfg.max_epochs = 4;
    const auto report = bmcl::finetune(pre.checkpoint, small_dataset(), cfg);

    const std::filesystem::path dir = testutil::scratch_dir("finetune_report");
    bmcl::write_finetune_report(dir.string(), report, "frozen", 1.0);
    REQUIRE(std::filesystem::exists(dir / "cells.csv"));
    REQUIRE(std::filesystem::exists(dir / "summary.csv"));

    const std::string cells = slurp(dir / "cells.csv");
    CHECK(cells.find("mode,fraction,lr,seed,val_metric,test_metric,best_epoch,epochs_run") == 0);
    const std::string summary = slurp(dir / "summary.csv");
    CHECK(summary.find("metric,mode,fraction,best_lr,mean,std,per_seed") == 0);
    CHECK(summary.find("top1,frozen") != std::string::npos);
}

TEST_CASE("checkpoints refuse datasets with a different schema") {
    const auto& pre = shared_pretrain();
    bmcl::SyntheticConfig other = small_config();
    other.n_noise_features = 3;  // changes the schema, hence its hash
    const auto ds = bmcl::generate_synthetic(other);
    CHECK_THROWS_AS(bmcl::finetune(pre.checkpoint, ds, quick_eval()), bmcl::IntegrityError);
}

// ---------------------------------------------------------------------------
// Attribution
// ---------------------------------------------------------------------------

namespace {

// Builds a tabular encoder that computes exactly x -> M x by routing positive
// and negative parts through the rectifier separately.
bmcl::TabularEncoder<double> linear_encoder(const bmcl::Matd& M) {
    const int in = static_cast<int>(M.cols());
    const int embed = static_cast<int>(M.rows());
    bmcl::TabularEncoder<double> enc("lin", in, 2 * in, embed);
    enc.visit([&](bmcl::Param<double>& p) {
        if (p.name == "lin.fc1.W") {
            p.value.setZero();
            p.value.topRows(in) = bmcl::Matd::Identity(in, in);
            p.value.bottomRows(in) = -bmcl::Matd::Identity(in, in);
        } else if (p.name == "lin.fc2.W") {
            p.value.leftCols(in) = M;
            p.value.rightCols(in) = -M;
        } else {
            p.value.setZero();
        }
    });
    return enc;
}

}  // namespace

TEST_CASE("path attributions are exact for a linear encoder") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> d(0.0, 1.0);
    bmcl::Matd M(3, 5);
    for (Eigen::Index j = 0; j < 5; ++j)
        for (Eigen::Index i = 0; i < 3; ++i) M(i, j) = d(gen);
    auto enc = linear_encoder(M);

    bmcl::Vecd x(5);
    x << 0.7, -1.2, 0.4, 2.0, -0.3;
    const bmcl::Matd ig = bmcl::integrated_gradients(enc, x, 16);
    REQUIRE(ig.rows() == 5);
    REQUIRE(ig.cols() == 3);

    // Closed form: attribution of feature f to output d is M(d,f) * x_f.
    for (Eigen::Index f = 0; f < 5; ++f)
        for (Eigen::Index dd = 0; dd < 3; ++dd)
            CHECK(std::abs(ig(f, dd) - M(dd, f) * x(f)) < 1e-10);

    // Completeness: per output dimension the attributions sum to the output
    // delta against the zero baseline.
    const bmcl::Matd fx = enc.forward(bmcl::Matd(x));
    for (Eigen::Index dd = 0; dd < 3; ++dd) {
        CHECK(std::abs(ig.col(dd).sum() - fx(dd, 0)) < 1e-10);
    }

    // Attribution is linear in the sample for a linear map.
    const bmcl::Matd ig2 = bmcl::integrated_gradients(enc, (2.0 * x).eval(), 16);
    CHECK((ig2 - 2.0 * ig).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("a sample equal to its baseline gets zero attribution everywhere") {
    bmcl::Matd M = bmcl::Matd::Ones(2, 3);
    auto enc = linear_encoder(M);
    bmcl::Vecd x(3);
    x << 0.5, -0.5, 1.0;
    const bmcl::Matd ig = bmcl::integrated_gradients(enc, x, 8, &x);
    CHECK(ig.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("finer paths shrink the completeness residual on a nonlinear encoder") {
    bmcl::TabularEncoder<double> enc("enc", 6, 24, 5);
    bmcl::Rng rng(123);
    enc.init(rng);
    // Fresh nets have zero biases, which makes them scale-equivariant: along
    // the straight path from a zero baseline the rectifier never switches and
    // the quadrature is exact at any resolution. Shift the biases so the path
    // actually crosses activation boundaries.
    enc.visit([&](bmcl::Param<double>& p) {
        if (p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0) {
            for (Eigen::Index j = 0; j < p.value.cols(); ++j)
                for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = rng.normal(0.0, 0.5);
        }
    });
    bmcl::Vecd x(6);
    x << 1.3, -0.8, 0.5, 2.1, -1.7, 0.9;

    const bmcl::Matd fx = enc.forward(bmcl::Matd(x));
    const bmcl::Matd f0 = enc.forward(bmcl::Matd(bmcl::Vecd::Zero(6).eval()));
    auto residual = [&](int steps) {
        const bmcl::Matd ig = bmcl::integrated_gradients(enc, x, steps);
        double worst = 0.0;
        for (Eigen::Index dd = 0; dd < 5; ++dd) {
            worst = std::max(worst, std::abs(ig.col(dd).sum() - (fx(dd, 0) - f0(dd, 0))));
        }
        return worst;
    };
    const double coarse = residual(4);
    const double fine = residual(512);
    INFO("coarse " << coarse << " fine " << fine);
    CHECK(fine <= coarse);
    CHECK(fine < 1e-3);

    CHECK_THROWS_AS(bmcl::integrated_gradients(enc, x, 1), bmcl::ConfigError);
    bmcl::Vecd short_base(3);
    short_base.setZero();
    CHECK_THROWS_AS(bmcl::integrated_gradients(enc, x, 8, &short_base), bmcl::ContractError);
}

TEST_CASE("importance aggregation folds one-hot columns into their parent feature") {
    bmcl::TabularSchema schema;
    bmcl::FeatureSpec a;
    a.name = "alpha";
    a.kind = bmcl::FeatureKind::Continuous;
    a.morphometric = true;
    bmcl::FeatureSpec b;
    b.name = "beta";
    b.kind = bmcl::FeatureKind::Categorical;
    b.categories = {0, 1, 2};
    schema.features = {a, b};
    schema.validate();

    // Encoded width 1 + 3; two embedding dimensions.
    bmcl::Matd ig(4, 2);
    ig << 2.0, -4.0,  // alpha: mean |.| = 3
        1.0, 1.0,     // beta code 0: 1
        -2.0, 2.0,    // beta code 1: 2
        3.0, 3.0;     // beta code 2: 3
    const auto report = bmcl::aggregate_importance({ig}, schema);
    REQUIRE(report.features.size() == 2);
    CHECK(report.features[0].importance == Catch::Approx(3.0));
    CHECK(report.features[1].importance == Catch::Approx(6.0));
    CHECK(report.features[0].morphometric);
    CHECK_FALSE(report.features[1].morphometric);
    CHECK(report.ranking == std::vector<int>{1, 0});
    CHECK(report.features[1].rank == 0);
    CHECK(report.morphometric_share == Catch::Approx(3.0 / 9.0));

    // Averaging over samples: a second all-zero sample halves everything.
    const auto two = bmcl::aggregate_importance({ig, bmcl::Matd::Zero(4, 2)}, schema);
    CHECK(two.features[0].importance == Catch::Approx(1.5));
    CHECK(two.n_samples == 2);

    CHECK_THROWS_AS(bmcl::aggregate_importance({}, schema), bmcl::ContractError);
    CHECK_THROWS_AS(bmcl::aggregate_importance({bmcl::Matd::Zero(3, 2)}, schema), bmcl::ContractError);
    CHECK_THROWS_AS(bmcl::aggregate_importance({bmcl::Matd::Zero(4, 2)}, schema), bmcl::DomainError);
}

TEST_CASE("checkpoint attribution covers every schema feature with finite shares") {
    const auto& pre = shared_pretrain();
    bmcl::AttributionConfig cfg;
    cfg.steps = 8;
    cfg.max_samples = 16;
    const auto report = bmcl::attribute_checkpoint(pre.checkpoint, small_dataset(), cfg);

    REQUIRE(report.features.size() == small_dataset().schema.size());
    CHECK(report.n_samples == 16);
    CHECK(report.steps == 8);
    CHECK(report.morphometric_share >= 0.0);
    CHECK(report.morphometric_share <= 1.0);

    std::set<int> ranks;
    for (const auto& f : report.features) {
        CHECK(std::isfinite(f.importance));
        CHECK(f.importance >= 0.0);
        ranks.insert(f.rank);
    }
    CHECK(ranks.size() == report.features.size());

    // Deterministic given the same configuration.
    const auto again = bmcl::attribute_checkpoint(pre.checkpoint, small_dataset(), cfg);
    for (size_t i = 0; i < report.features.size(); ++i) {
        CHECK(again.features[i].importance == report.features[i].importance);
    }
}
