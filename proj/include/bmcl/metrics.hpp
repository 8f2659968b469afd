#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/tabular.hpp"

namespace bmcl {

// Probability that a random positive outranks a random negative, ties worth
// half. Rank-statistic form, O(N log N); tests hold it against the pairwise
// oracle.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ContractError("auc: scores/labels length mismatch");
    const size_t n = scores.size();
    size_t n_pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw DomainError("auc labels must be 0 or 1");
        n_pos += static_cast<size_t>(y);
    }
    const size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DomainError("auc undefined: only one class present");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks across tie groups, 1-based.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Fraction of rows whose label ranks among the k best logits; equal logits
// rank by lower class index. logits are N x C, rows = samples.
inline double topk_accuracy(const Matd& logits, const std::vector<int>& labels, int k = 1) {
    const Eigen::Index n = logits.rows(), c = logits.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n) throw ContractError("topk: labels length mismatch");
    if (k < 1 || k > c) throw ContractError("topk: k out of range");
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= c) throw DomainError("topk: label out of class range");
        const double ly = logits(i, y);
        int rank = 0;
        for (Eigen::Index j = 0; j < c; ++j) {
            if (logits(i, j) > ly || (logits(i, j) == ly && j < y)) ++rank;
        }
        if (rank < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

struct MeanStd {
    double mean = 0.0;
    double stdev = 0.0;
};

// Population standard deviation; a single value reports spread 0.
inline MeanStd mean_std(const std::vector<double>& xs) {
    if (xs.empty()) throw ContractError("mean_std of empty list");
    MeanStd r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stdev = std::sqrt(ss / static_cast<double>(xs.size()));
    return r;
}

// Stops once the validation metric has gone `patience` observations without
// improving by at least min_delta over the best seen.
class EarlyStopper {
  public:
    EarlyStopper(double min_delta, int patience) : min_delta_(min_delta), patience_(patience) {
        if (patience < 1) throw ConfigError("early-stop patience must be >= 1");
    }

    // Returns true when training should halt after this observation.
    bool observe(double metric, int epoch) {
        if (metric - best_ >= min_delta_) {
            best_ = metric;
            best_epoch_ = epoch;
            stall_ = 0;
            return false;
        }
        ++stall_;
        return stall_ >= patience_;
    }

    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }

  private:
    double min_delta_;
    int patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    int best_epoch_ = -1;
    int stall_ = 0;
};

}  // namespace bmcl
