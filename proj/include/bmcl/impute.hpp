#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/tabular.hpp"

namespace bmcl {

struct ImputeOptions {
    double tol = 1e-3;
    int max_rounds = 10;
};

struct ImputeResult {
    TabularMatrix matrix;
    int rounds = 0;
    // Relative change max|X_t - X_{t-1}| / max|X_t| after each round.
    std::vector<double> rel_changes;
};

// Iterative multivariate imputation. Missing entries start at their column's
// observed mean; columns are visited in order of ascending missing count and
// refilled from an ordinary least squares fit on all other columns (updated
// values are used immediately, chained-equations style). Rounds repeat until
// the relative-change criterion drops below tol or max_rounds is hit, then
// imputed categorical cells are rounded to the nearest valid code.
inline ImputeResult impute(const TabularMatrix& input, const TabularSchema& schema,
                           const ImputeOptions& opt = {}) {
    if (opt.max_rounds < 1) throw ConfigError("impute: max_rounds must be >= 1");
    const Eigen::Index n = input.rows();
    const Eigen::Index f = input.cols();
    if (f != static_cast<Eigen::Index>(schema.size())) {
        throw SchemaError("impute: matrix width does not match schema");
    }

    ImputeResult result;
    result.matrix = input;
    if (!input.any_missing()) return result;  // bit-identical, zero rounds

    std::vector<Eigen::Index> missing_count(static_cast<size_t>(f), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index row_missing = 0;
        for (Eigen::Index j = 0; j < f; ++j) {
            if (input.missing(i, j)) {
                ++missing_count[static_cast<size_t>(j)];
                ++row_missing;
            }
        }
        if (row_missing == f) {
            throw DomainError("impute: row " + std::to_string(i) + " has no observed features");
        }
    }
    if (std::none_of(missing_count.begin(), missing_count.end(),
                     [](Eigen::Index c) { return c == 0; })) {
        throw ContractError("impute: requires at least one fully observed feature");
    }

    Matd& x = result.matrix.values;
    const MaskMatrix& miss = result.matrix.missing;

    // Mean initialization from observed entries.
    for (Eigen::Index j = 0; j < f; ++j) {
        if (missing_count[static_cast<size_t>(j)] == 0) continue;
        double sum = 0.0;
        Eigen::Index cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!miss(i, j)) {
                sum += x(i, j);
                ++cnt;
            }
        }
        const double mean = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (miss(i, j)) x(i, j) = mean;
        }
    }

    std::vector<Eigen::Index> order;
    for (Eigen::Index j = 0; j < f; ++j) {
        if (missing_count[static_cast<size_t>(j)] > 0) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return missing_count[static_cast<size_t>(a)] < missing_count[static_cast<size_t>(b)];
    });

    for (int round = 0; round < opt.max_rounds; ++round) {
        const Matd prev = x;
        for (Eigen::Index target : order) {
            const Eigen::Index observed =
                n - missing_count[static_cast<size_t>(target)];
            // Design matrix: all other columns plus an intercept.
            Matd a(observed, f);
            Vecd y(observed);
            Eigen::Index r = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (miss(i, target)) continue;
                Eigen::Index c = 0;
                for (Eigen::Index j = 0; j < f; ++j) {
                    if (j == target) continue;
                    a(r, c++) = x(i, j);
                }
                a(r, c) = 1.0;
                y(r) = x(i, target);
                ++r;
            }
            const Vecd w = a.colPivHouseholderQr().solve(y);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!miss(i, target)) continue;
                double pred = w(f - 1);
                Eigen::Index c = 0;
                for (Eigen::Index j = 0; j < f; ++j) {
                    if (j == target) continue;
                    pred += w(c++) * x(i, j);
                }
                x(i, target) = pred;
            }
        }
        ++result.rounds;
        const double max_abs = x.cwiseAbs().maxCoeff();
        if (max_abs == 0.0) {
            // Criterion undefined; treated as converged.
            result.rel_changes.push_back(0.0);
            break;
        }
        const double rel = (x - prev).cwiseAbs().maxCoeff() / max_abs;
        result.rel_changes.push_back(rel);
        if (rel < opt.tol) break;
    }

    // Categorical cells land on a valid code.
    for (size_t j = 0; j < schema.size(); ++j) {
        const auto& spec = schema.at(j);
        if (spec.kind != FeatureKind::Categorical) continue;
        const auto col = static_cast<Eigen::Index>(j);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (miss(i, col)) x(i, col) = nearest_code(spec, x(i, col));
        }
    }
    return result;
}

}  // namespace bmcl
