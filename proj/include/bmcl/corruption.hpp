#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/rng.hpp"
#include "bmcl/schema.hpp"
#include "bmcl/tabular.hpp"

namespace bmcl {

// Draws replacement values from per-feature empirical marginals. Marginals
// hold raw (pre-one-hot) values actually observed in the training rows, so
// every replacement is a value the feature has really taken.
class CorruptionSampler {
  public:
    // Deterministic count: ceil(rate * F) features per call. The Bernoulli
    // alternative corrupts each feature independently with probability rate.
    enum class Count { Fixed, Bernoulli };

    CorruptionSampler() = default;

    CorruptionSampler(const TabularMatrix& matrix, const TabularSchema& schema,
                      const std::vector<int>& train_rows, double rate, Count count = Count::Fixed)
        : rate_(rate), count_(count) {
        if (rate < 0.0 || rate > 1.0) throw ConfigError("corruption rate must lie in [0, 1]");
        const auto F = static_cast<size_t>(matrix.values.cols());
        if (F != schema.size()) throw ContractError("corruption sampler schema width mismatch");
        marginals_.resize(F);
        for (int i : train_rows) {
            for (size_t f = 0; f < F; ++f) {
                if (!matrix.missing(i, static_cast<Eigen::Index>(f))) {
                    marginals_[f].push_back(matrix.values(i, static_cast<Eigen::Index>(f)));
                }
            }
        }
        for (size_t f = 0; f < F; ++f) {
            if (marginals_[f].empty()) {
                throw DomainError("no observed training values for feature '" + schema.at(f).name +
                                  "', cannot build corruption marginal");
            }
        }
    }

    double rate() const { return rate_; }
    size_t n_features() const { return marginals_.size(); }
    const std::vector<double>& marginal(size_t f) const { return marginals_.at(f); }

    // Number of features redrawn per call in Fixed mode.
    int features_per_call() const {
        return static_cast<int>(std::ceil(rate_ * static_cast<double>(marginals_.size())));
    }

    // Returns the corrupted row; `chosen`, when given, receives the corrupted
    // feature indices in ascending order (used by tests and instrumentation).
    Vecd corrupt_row(const Vecd& row, Rng& rng, std::vector<int>* chosen = nullptr) const {
        const auto F = static_cast<int>(marginals_.size());
        if (row.size() != F) throw ContractError("corrupt_row width mismatch");
        std::vector<int> picks;
        if (count_ == Count::Fixed) {
            for (size_t f : rng.choose(static_cast<size_t>(F), static_cast<size_t>(features_per_call()))) {
                picks.push_back(static_cast<int>(f));
            }
            std::sort(picks.begin(), picks.end());
        } else {
            for (int f = 0; f < F; ++f)
                if (rng.bernoulli(rate_)) picks.push_back(f);
        }
        Vecd out = row;
        for (int f : picks) {
            const auto& values = marginals_[static_cast<size_t>(f)];
            out[f] = values[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(values.size()) - 1))];
        }
        if (chosen) *chosen = std::move(picks);
        return out;
    }

  private:
    double rate_ = 0.0;
    Count count_ = Count::Fixed;
    std::vector<std::vector<double>> marginals_;
};

}  // namespace bmcl
