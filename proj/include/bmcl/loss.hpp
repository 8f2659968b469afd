#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bmcl/error.hpp"
#include "bmcl/nn.hpp"
#include "bmcl/tabular.hpp"

namespace bmcl {

// Denominator convention for the bidirectional cross-modal loss. Inclusive
// keeps the positive pair in the denominator and is never negative; the
// literal variant drops it and can go below zero.
enum class DenominatorMode { ClipInclusive, LiteralEq2 };

enum class Supervision { None, FnElimination, Supcon };

struct LossConfig {
    double temperature = 0.1;
    double lambda = 0.5;
    DenominatorMode denominator_mode = DenominatorMode::ClipInclusive;
    Supervision supervision = Supervision::None;
    std::vector<int> labels;  // required when supervision != None

    void validate(Eigen::Index n) const {
        if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
        if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0, 1]");
        if (supervision != Supervision::None && static_cast<Eigen::Index>(labels.size()) != n) {
            throw ContractError("supervised loss needs one label per sample");
        }
    }
};

template <typename S>
struct LossResult {
    S total = S(0);
    S l_it = S(0);
    S l_ti = S(0);
    Mat<S> d_zi, d_zt;  // gradients w.r.t. the N x P projection inputs
};

// mask[j,k] = false iff k != j and label_k == label_j: same-class candidates
// leave the denominator, the diagonal always stays.
inline MaskMatrix fn_elimination_mask(const std::vector<int>& labels) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    MaskMatrix mask(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k)
            mask(j, k) = j == k || labels[static_cast<size_t>(j)] != labels[static_cast<size_t>(k)];
    return mask;
}

namespace detail {

template <typename S>
inline void require_unit_rows(const Mat<S>& z, const char* which) {
    for (Eigen::Index j = 0; j < z.rows(); ++j) {
        const double n = static_cast<double>(z.row(j).norm());
        if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-3) {
            throw ContractError(std::string(which) + " row " + std::to_string(j) +
                                " is not unit norm (|z| = " + std::to_string(n) + ")");
        }
    }
}

template <typename S>
inline void check_loss_batch(const Mat<S>& zi, const Mat<S>& zt) {
    if (zi.rows() != zt.rows() || zi.cols() != zt.cols()) throw ContractError("projection shape mismatch");
    if (zi.rows() < 2) throw ContractError("contrastive batch needs at least 2 samples");
    require_unit_rows(zi, "z_i");
    require_unit_rows(zt, "z_t");
}

// One directional pass: anchors are rows of `sim`, candidates its columns.
// Adds weight * dl/dsim into dsim and returns the N-divided directional loss.
template <typename S>
inline S directional_loss(const Mat<S>& sim, const MaskMatrix& mask, DenominatorMode mode, S weight,
                          Mat<S>& dsim) {
    const Eigen::Index n = sim.rows();
    S loss = S(0);
    std::vector<Eigen::Index> cand;
    cand.reserve(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
        cand.clear();
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!mask(j, k)) continue;
            if (mode == DenominatorMode::LiteralEq2 && k == j) continue;
            cand.push_back(k);
        }
        if (cand.empty()) {
            throw DegenerateBatchError("empty contrastive denominator at row " + std::to_string(j));
        }
        S mx = sim(j, cand[0]);
        for (Eigen::Index k : cand) mx = std::max(mx, sim(j, k));
        S sum = S(0);
        for (Eigen::Index k : cand) sum += std::exp(sim(j, k) - mx);
        const S logden = mx + std::log(sum);
        loss += logden - sim(j, j);

        const S dweight = weight / static_cast<S>(n);
        for (Eigen::Index k : cand) dsim(j, k) += dweight * std::exp(sim(j, k) - logden);
        dsim(j, j) -= dweight;
    }
    return loss / static_cast<S>(n);
}

}  // namespace detail

// Bidirectional cross-modal loss. Inputs are N x P with unit rows; only
// cross-modal pairs enter either sum. Per-anchor sums are divided by N so the
// scale does not drift with batch size.
template <typename S>
inline LossResult<S> clip_loss(const Mat<S>& zi, const Mat<S>& zt, const LossConfig& cfg) {
    detail::check_loss_batch(zi, zt);
    cfg.validate(zi.rows());
    if (cfg.supervision == Supervision::Supcon) {
        throw ContractError("clip_loss does not implement supcon; call supcon_loss");
    }
    const Eigen::Index n = zi.rows();
    const S tau = static_cast<S>(cfg.temperature);
    const Mat<S> sim = (zi * zt.transpose()) / tau;

    MaskMatrix mask;
    if (cfg.supervision == Supervision::FnElimination) {
        mask = fn_elimination_mask(cfg.labels);
    } else {
        mask.setConstant(n, n, true);
    }

    LossResult<S> res;
    Mat<S> dsim = Mat<S>::Zero(n, n);
    Mat<S> dsim_t = Mat<S>::Zero(n, n);
    const Mat<S> sim_t = sim.transpose();
    res.l_it = detail::directional_loss(sim, mask, cfg.denominator_mode, static_cast<S>(cfg.lambda), dsim);
    res.l_ti = detail::directional_loss(sim_t, mask, cfg.denominator_mode,
                                        static_cast<S>(1.0 - cfg.lambda), dsim_t);
    dsim += dsim_t.transpose();

    res.total = static_cast<S>(cfg.lambda) * res.l_it + static_cast<S>(1.0 - cfg.lambda) * res.l_ti;
    res.d_zi = dsim * zt / tau;
    res.d_zt = dsim.transpose() * zi / tau;
    return res;
}

// Cross-modal supervised contrastive loss: positives for an anchor are the
// other modality's projections sharing its label; denominators run over the
// whole batch. Symmetric in the modalities, halved.
template <typename S>
inline LossResult<S> supcon_loss(const Mat<S>& zi, const Mat<S>& zt, const std::vector<int>& labels,
                                 double temperature) {
    detail::check_loss_batch(zi, zt);
    const Eigen::Index n = zi.rows();
    if (static_cast<Eigen::Index>(labels.size()) != n) throw ContractError("labels length mismatch");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    bool two_classes = false;
    for (size_t j = 1; j < labels.size(); ++j) two_classes |= labels[j] != labels[0];
    if (!two_classes) {
        throw DegenerateBatchError("supcon batch has a single class");
    }

    const S tau = static_cast<S>(temperature);
    const Mat<S> sim = (zi * zt.transpose()) / tau;

    std::vector<std::vector<Eigen::Index>> positives(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index k = 0; k < n; ++k)
            if (labels[static_cast<size_t>(j)] == labels[static_cast<size_t>(k)])
                positives[static_cast<size_t>(j)].push_back(k);

    LossResult<S> res;
    Mat<S> dsim = Mat<S>::Zero(n, n);

    // One modality direction over `s`; dl/ds lands in `ds` with weight 1/2.
    auto direction = [&](const Mat<S>& s, Mat<S>& ds) -> S {
        S loss = S(0);
        for (Eigen::Index j = 0; j < n; ++j) {
            const S mx = s.row(j).maxCoeff();
            S sum = S(0);
            for (Eigen::Index k = 0; k < n; ++k) sum += std::exp(s(j, k) - mx);
            const S logden = mx + std::log(sum);
            const auto& pos = positives[static_cast<size_t>(j)];
            const S inv_pos = S(1) / static_cast<S>(pos.size());
            for (Eigen::Index p : pos) loss += (logden - s(j, p)) * inv_pos;

            const S dweight = S(0.5) / static_cast<S>(n);
            for (Eigen::Index k = 0; k < n; ++k) ds(j, k) += dweight * std::exp(s(j, k) - logden);
            for (Eigen::Index p : pos) ds(j, p) -= dweight * inv_pos;
        }
        return loss / static_cast<S>(n);
    };

    res.l_it = direction(sim, dsim);
    Mat<S> dsim_t = Mat<S>::Zero(n, n);
    const Mat<S> sim_t = sim.transpose();
    res.l_ti = direction(sim_t, dsim_t);
    dsim += dsim_t.transpose();

    res.total = (res.l_it + res.l_ti) / S(2);
    res.d_zi = dsim * zt / tau;
    res.d_zt = dsim.transpose() * zi / tau;
    return res;
}

// NT-Xent over the 2N-view multiset: positives are (a_j, b_j); every other
// view in the batch is a negative. Mean over the 2N anchors.
template <typename S>
inline LossResult<S> ntxent_loss(const Mat<S>& za, const Mat<S>& zb, double temperature) {
    detail::check_loss_batch(za, zb);
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    const Eigen::Index n = za.rows();
    const Eigen::Index m = 2 * n;
    const S tau = static_cast<S>(temperature);

    Mat<S> u(m, za.cols());
    u.topRows(n) = za;
    u.bottomRows(n) = zb;
    const Mat<S> sim = (u * u.transpose()) / tau;

    LossResult<S> res;
    Mat<S> dsim = Mat<S>::Zero(m, m);
    const S inv_m = S(1) / static_cast<S>(m);
    S loss = S(0);
    for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::Index p = a < n ? a + n : a - n;
        S mx = -std::numeric_limits<S>::infinity();
        for (Eigen::Index v = 0; v < m; ++v)
            if (v != a) mx = std::max(mx, sim(a, v));
        S sum = S(0);
        for (Eigen::Index v = 0; v < m; ++v)
            if (v != a) sum += std::exp(sim(a, v) - mx);
        const S logden = mx + std::log(sum);
        loss += logden - sim(a, p);

        for (Eigen::Index v = 0; v < m; ++v)
            if (v != a) dsim(a, v) += inv_m * std::exp(sim(a, v) - logden);
        dsim(a, p) -= inv_m;
    }
    res.total = loss * inv_m;
    res.l_it = res.l_ti = res.total;

    const Mat<S> du = (dsim + dsim.transpose()) * u / tau;
    res.d_zi = du.topRows(n);
    res.d_zt = du.bottomRows(n);
    return res;
}

}  // namespace bmcl
