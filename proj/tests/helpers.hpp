#pragma once

// Shared test utilities: independent oracles written as plain scalar loops
// (no Eigen, no reuse of library loss/metric code paths) plus small fixture
// builders. The oracles are deliberately naive O(N^2) implementations so a
// bug in the library cannot hide in a shared code path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace testutil {

// ---------------------------------------------------------------------------
// Scratch directories
// ---------------------------------------------------------------------------

inline std::filesystem::path scratch_dir(const std::string& name) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "bmcl_tests";
    const fs::path dir = base / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// Plain-matrix helpers (rows = samples)
// ---------------------------------------------------------------------------

using Rows = std::vector<std::vector<double>>;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Deterministic unit-norm rows from the standard library generator, so test
// inputs do not depend on the library's own rng.
inline Rows random_unit_rows(int n, int p, uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Rows z(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(p)));
    for (auto& row : z) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (auto& v : row) {
                v = gauss(gen);
                norm2 += v * v;
            }
        } while (norm2 < 1e-12);
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& v : row) v *= inv;
    }
    return z;
}

// ---------------------------------------------------------------------------
// Contrastive-loss oracles
// ---------------------------------------------------------------------------

struct OracleLoss {
    double total = 0.0;
    double l_it = 0.0;
    double l_ti = 0.0;
    bool degenerate = false;  // an anchor ended up with an empty denominator
};

// Bidirectional cross-modal loss. `inclusive` keeps the k=j term in the
// denominator; `fn_labels`, when non-empty, removes same-label k!=j
// candidates from denominators (false-negative elimination).
inline OracleLoss oracle_clip(const Rows& zi, const Rows& zt, double tau, double lambda,
                              bool inclusive, const std::vector<int>& fn_labels = {}) {
    const size_t n = zi.size();
    OracleLoss out;
    auto one_direction = [&](const Rows& anchors, const Rows& candidates) {
        double loss = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double denom = 0.0;
            int used = 0;
            for (size_t k = 0; k < n; ++k) {
                if (k == j && !inclusive) continue;
                if (!fn_labels.empty() && k != j && fn_labels[k] == fn_labels[j]) continue;
                denom += std::exp(dot(anchors[j], candidates[k]) / tau);
                ++used;
            }
            if (used == 0) {
                out.degenerate = true;
                return 0.0;
            }
            loss += -std::log(std::exp(dot(anchors[j], candidates[j]) / tau) / denom);
        }
        return loss / static_cast<double>(n);
    };
    out.l_it = one_direction(zi, zt);
    out.l_ti = one_direction(zt, zi);
    out.total = lambda * out.l_it + (1.0 - lambda) * out.l_ti;
    return out;
}

// NT-Xent over the 2N-view multiset; mean over the 2N anchors.
inline double oracle_ntxent(const Rows& za, const Rows& zb, double tau) {
    const size_t n = za.size();
    Rows u = za;
    u.insert(u.end(), zb.begin(), zb.end());
    const size_t m = u.size();
    double loss = 0.0;
    for (size_t a = 0; a < m; ++a) {
        const size_t pos = a < n ? a + n : a - n;
        double denom = 0.0;
        for (size_t v = 0; v < m; ++v) {
            if (v == a) continue;
            denom += std::exp(dot(u[a], u[v]) / tau);
        }
        loss += -std::log(std::exp(dot(u[a], u[pos]) / tau) / denom);
    }
    return loss / static_cast<double>(m);
}

// Cross-modal supervised contrastive loss: positives for anchor j are every
// other-modality row sharing its label (the paired row included); the
// denominator runs over the whole other-modality batch. Per-anchor mean over
// positives, mean over anchors per direction, directions averaged.
inline OracleLoss oracle_supcon(const Rows& zi, const Rows& zt, const std::vector<int>& labels,
                                double tau) {
    const size_t n = zi.size();
    OracleLoss out;
    auto one_direction = [&](const Rows& anchors, const Rows& candidates) {
        double loss = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double denom = 0.0;
            for (size_t k = 0; k < n; ++k) denom += std::exp(dot(anchors[j], candidates[k]) / tau);
            double anchor_loss = 0.0;
            int n_pos = 0;
            for (size_t p = 0; p < n; ++p) {
                if (labels[p] != labels[j]) continue;
                anchor_loss += -std::log(std::exp(dot(anchors[j], candidates[p]) / tau) / denom);
                ++n_pos;
            }
            loss += anchor_loss / static_cast<double>(n_pos);
        }
        return loss / static_cast<double>(n);
    };
    out.l_it = one_direction(zi, zt);
    out.l_ti = one_direction(zt, zi);
    out.total = 0.5 * (out.l_it + out.l_ti);
    return out;
}

// ---------------------------------------------------------------------------
// Metric oracles
// ---------------------------------------------------------------------------

// Probability that a random positive outranks a random negative; ties 1/2.
inline double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (size_t k = 0; k < scores.size(); ++k) {
            if (labels[k] != 0) continue;
            ++pairs;
            if (scores[i] > scores[k]) wins += 1.0;
            else if (scores[i] == scores[k]) wins += 0.5;
        }
    }
    if (pairs == 0) throw std::runtime_error("oracle_auc needs both classes");
    return wins / static_cast<double>(pairs);
}

// ---------------------------------------------------------------------------
// Ordinary least squares via normal equations + Gaussian elimination.
// Fits y ~ X*beta + intercept; plain loops only.
// ---------------------------------------------------------------------------

inline std::vector<double> oracle_ols(const Rows& x, const std::vector<double>& y) {
    const size_t n = x.size();
    const size_t f = x.empty() ? 0 : x[0].size();
    const size_t d = f + 1;  // + intercept
    Rows a(d, std::vector<double>(d, 0.0));
    std::vector<double> b(d, 0.0);
    auto feat = [&](size_t row, size_t j) { return j < f ? x[row][j] : 1.0; };
    for (size_t r = 0; r < n; ++r) {
        for (size_t i = 0; i < d; ++i) {
            b[i] += feat(r, i) * y[r];
            for (size_t j = 0; j < d; ++j) a[i][j] += feat(r, i) * feat(r, j);
        }
    }
    // Gaussian elimination with partial pivoting.
    for (size_t col = 0; col < d; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < d; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        if (std::abs(a[col][col]) < 1e-12) throw std::runtime_error("oracle_ols: singular system");
        for (size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            const double m = a[r][col] / a[col][col];
            for (size_t j = col; j < d; ++j) a[r][j] -= m * a[col][j];
            b[r] -= m * b[col];
        }
    }
    std::vector<double> beta(d);
    for (size_t i = 0; i < d; ++i) beta[i] = b[i] / a[i][i];
    return beta;  // beta[f] is the intercept
}

inline double oracle_ols_predict(const std::vector<double>& beta, const std::vector<double>& row) {
    double v = beta.back();
    for (size_t j = 0; j + 1 < beta.size(); ++j) v += beta[j] * row[j];
    return v;
}

// Relative error with a floor so near-zero pairs compare absolutely.
inline double rel_err(double got, double want) {
    const double scale = std::max({std::abs(got), std::abs(want), 1e-3});
    return std::abs(got - want) / scale;
}

}  // namespace testutil
