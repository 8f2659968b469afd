// Contrastive losses: hand-computed examples, independent O(N^2) oracle
// agreement, analytic-vs-numeric gradients, and the degenerate cases.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bmcl/loss.hpp"
#include "helpers.hpp"

using namespace bmcl;
using testutil::OracleLoss;
using testutil::Rows;

namespace {

Matd to_mat(const Rows& rows) {
    Matd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

Matd orthonormal_pair() {
    Matd z(2, 2);
    z << 1, 0, 0, 1;
    return z;
}

LossConfig config(double tau, double lambda, DenominatorMode mode) {
    LossConfig cfg;
    cfg.temperature = tau;
    cfg.lambda = lambda;
    cfg.denominator_mode = mode;
    return cfg;
}

}  // namespace

TEST_CASE("orthonormal two-sample batch matches the hand value in inclusive mode") {
    const Matd z = orthonormal_pair();
    const auto res = clip_loss(z, z, config(1.0, 0.5, DenominatorMode::ClipInclusive));
    const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));  // 0.31326...
    CHECK(res.l_it == Catch::Approx(expected).epsilon(1e-12));
    CHECK(res.l_ti == Catch::Approx(expected).epsilon(1e-12));
    CHECK(res.total == Catch::Approx(expected).epsilon(1e-12));
    CHECK(res.total == Catch::Approx(0.3132616875).margin(1e-9));
}

TEST_CASE("orthonormal two-sample batch goes negative in literal mode") {
    const Matd z = orthonormal_pair();
    const auto res = clip_loss(z, z, config(1.0, 0.5, DenominatorMode::LiteralEq2));
    // Denominator holds only the k!=j term exp(0)=1, so each anchor scores
    // -log(e/1) = -1: the literal reading admits negative losses.
    CHECK(res.total == Catch::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("lambda endpoints select one direction exactly") {
    const Rows zi = testutil::random_unit_rows(5, 4, 11);
    const Rows zt = testutil::random_unit_rows(5, 4, 12);
    const Matd mi = to_mat(zi), mt = to_mat(zt);

    const auto it_only = clip_loss(mi, mt, config(0.1, 1.0, DenominatorMode::ClipInclusive));
    CHECK(it_only.total == it_only.l_it);
    const auto ti_only = clip_loss(mi, mt, config(0.1, 0.0, DenominatorMode::ClipInclusive));
    CHECK(ti_only.total == ti_only.l_ti);
}

TEST_CASE("swapping the modalities at lambda 0.5 leaves the total unchanged") {
    const Matd mi = to_mat(testutil::random_unit_rows(6, 3, 21));
    const Matd mt = to_mat(testutil::random_unit_rows(6, 3, 22));
    const auto ab = clip_loss(mi, mt, config(0.2, 0.5, DenominatorMode::ClipInclusive));
    const auto ba = clip_loss(mt, mi, config(0.2, 0.5, DenominatorMode::ClipInclusive));
    CHECK(ab.total == Catch::Approx(ba.total).epsilon(1e-12));
    CHECK(ab.l_it == Catch::Approx(ba.l_ti).epsilon(1e-12));
}

TEST_CASE("identical inputs give equal direction losses") {
    const Matd z = to_mat(testutil::random_unit_rows(7, 5, 31));
    const auto res = clip_loss(z, z, config(0.1, 0.5, DenominatorMode::ClipInclusive));
    CHECK(res.l_it == Catch::Approx(res.l_ti).epsilon(1e-12));
}

TEST_CASE("batch and shape contracts are enforced") {
    const Matd one = to_mat(testutil::random_unit_rows(1, 4, 41));
    CHECK_THROWS_AS(clip_loss(one, one, config(0.1, 0.5, DenominatorMode::ClipInclusive)),
                    ContractError);

    Matd bad = to_mat(testutil::random_unit_rows(3, 4, 42));
    bad(1, 0) += 0.01;  // pushes the row norm off the sphere past the 1e-3 gate
    const Matd good = to_mat(testutil::random_unit_rows(3, 4, 43));
    CHECK_THROWS_AS(clip_loss(bad, good, config(0.1, 0.5, DenominatorMode::ClipInclusive)),
                    ContractError);

    CHECK_THROWS_AS(clip_loss(good, good, config(0.0, 0.5, DenominatorMode::ClipInclusive)),
                    ConfigError);
    CHECK_THROWS_AS(clip_loss(good, good, config(0.1, 1.5, DenominatorMode::ClipInclusive)),
                    ConfigError);
}

TEST_CASE("clip loss in inclusive mode is non-negative on random batches") {
    for (uint64_t seed = 0; seed < 50; ++seed) {
        const Matd mi = to_mat(testutil::random_unit_rows(4, 3, 100 + seed));
        const Matd mt = to_mat(testutil::random_unit_rows(4, 3, 200 + seed));
        const auto res = clip_loss(mi, mt, config(0.5, 0.5, DenominatorMode::ClipInclusive));
        CHECK(res.total >= 0.0);
    }
}

TEST_CASE("two-sample grid search finds the minimum at aligned pairs with opposed anchors") {
    // P=2 unit vectors parametrized by angle; exhaustive grid over the four
    // angles. The minimizer must align each pair (z_i = z_t per sample) and
    // push the two samples apart (cross-similarity minimal).
    const int steps = 12;
    auto unit = [](double a) { return std::vector<double>{std::cos(a), std::sin(a)}; };
    double best = 1e9;
    std::array<double, 4> best_angles{};
    const LossConfig cfg = config(1.0, 0.5, DenominatorMode::ClipInclusive);
    for (int a = 0; a < steps; ++a)
        for (int b = 0; b < steps; ++b)
            for (int c = 0; c < steps; ++c)
                for (int d = 0; d < steps; ++d) {
                    const double ta = 2 * M_PI * a / steps, tb = 2 * M_PI * b / steps;
                    const double tc = 2 * M_PI * c / steps, td = 2 * M_PI * d / steps;
                    const Matd zi = to_mat({unit(ta), unit(tb)});
                    const Matd zt = to_mat({unit(tc), unit(td)});
                    const double v = clip_loss(zi, zt, cfg).total;
                    if (v < best) {
                        best = v;
                        best_angles = {ta, tb, tc, td};
                    }
                }
    // Pair alignment: image and tabular angles agree per sample.
    CHECK(std::abs(std::remainder(best_angles[0] - best_angles[2], 2 * M_PI)) < 1e-9);
    CHECK(std::abs(std::remainder(best_angles[1] - best_angles[3], 2 * M_PI)) < 1e-9);
    // Opposed samples: the two anchors sit half a turn apart.
    CHECK(std::abs(std::abs(std::remainder(best_angles[0] - best_angles[1], 2 * M_PI)) - M_PI) <
          1e-9);
}

TEST_CASE("gradient magnitude grows as the temperature drops") {
    const Matd mi = to_mat(testutil::random_unit_rows(6, 4, 51));
    const Matd mt = to_mat(testutil::random_unit_rows(6, 4, 52));
    const auto warm = clip_loss(mi, mt, config(1.0, 0.5, DenominatorMode::ClipInclusive));
    const auto cold = clip_loss(mi, mt, config(0.1, 0.5, DenominatorMode::ClipInclusive));
    CHECK(cold.d_zi.norm() > warm.d_zi.norm());
    CHECK(cold.d_zt.norm() > warm.d_zt.norm());
}

TEST_CASE("four identical views give log 3 under the 2N-view objective") {
    Matd z(2, 3);
    z.row(0) << 1, 0, 0;
    z.row(1) << 1, 0, 0;
    const auto res = ntxent_loss(z, z, 0.7);
    CHECK(res.total == Catch::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("2N-view objective is invariant under a consistent row permutation") {
    const Rows a = testutil::random_unit_rows(5, 4, 61);
    const Rows b = testutil::random_unit_rows(5, 4, 62);
    Rows pa = a, pb = b;
    const std::vector<size_t> perm = {3, 0, 4, 1, 2};
    for (size_t i = 0; i < perm.size(); ++i) {
        pa[i] = a[perm[i]];
        pb[i] = b[perm[i]];
    }
    const auto orig = ntxent_loss(to_mat(a), to_mat(b), 0.1);
    const auto perm_res = ntxent_loss(to_mat(pa), to_mat(pb), 0.1);
    CHECK(orig.total == Catch::Approx(perm_res.total).epsilon(1e-12));
}

TEST_CASE("raising a positive similarity lowers the 2N-view loss") {
    // Two geometries identical except the (a_0, b_0) pair is better aligned.
    auto unit = [](double a) { return std::vector<double>{std::cos(a), std::sin(a)}; };
    const Rows a = {unit(0.0), unit(2.0)};
    const Rows b_far = {unit(1.2), unit(2.1)};
    const Rows b_near = {unit(0.3), unit(2.1)};
    const auto far = ntxent_loss(to_mat(a), to_mat(b_far), 0.5);
    const auto near = ntxent_loss(to_mat(a), to_mat(b_near), 0.5);
    CHECK(near.total < far.total);
}

TEST_CASE("supervised loss with all-distinct labels collapses to the unsupervised one") {
    const Matd mi = to_mat(testutil::random_unit_rows(6, 4, 71));
    const Matd mt = to_mat(testutil::random_unit_rows(6, 4, 72));
    const std::vector<int> labels = {0, 1, 2, 3, 4, 5};
    const auto sup = supcon_loss(mi, mt, labels, 0.1);
    const auto clip = clip_loss(mi, mt, config(0.1, 0.5, DenominatorMode::ClipInclusive));
    CHECK(sup.total == Catch::Approx(clip.total).epsilon(1e-12));
    CHECK((sup.d_zi - clip.d_zi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((sup.d_zt - clip.d_zt).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("supervised loss on identical projections matches the brute-force oracle") {
    // Three samples, first two share a label, every projection identical.
    Rows rows(3, std::vector<double>{0.6, 0.8});
    const std::vector<int> labels = {1, 1, 0};
    const auto got = supcon_loss(to_mat(rows), to_mat(rows), labels, 0.5);
    const OracleLoss want = testutil::oracle_supcon(rows, rows, labels, 0.5);
    CHECK(got.total == Catch::Approx(want.total).epsilon(1e-12));
    // All similarities equal, so each anchor scores log(3) regardless of its
    // positive set; the oracle must agree with that closed form too.
    CHECK(want.total == Catch::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("supervised loss is stable under permuting samples and labels together") {
    const Rows zi = testutil::random_unit_rows(5, 3, 81);
    const Rows zt = testutil::random_unit_rows(5, 3, 82);
    const std::vector<int> labels = {0, 1, 0, 2, 1};
    Rows pi = zi, pt = zt;
    std::vector<int> pl = labels;
    const std::vector<size_t> perm = {4, 2, 0, 3, 1};
    for (size_t i = 0; i < perm.size(); ++i) {
        pi[i] = zi[perm[i]];
        pt[i] = zt[perm[i]];
        pl[i] = labels[perm[i]];
    }
    const auto orig = supcon_loss(to_mat(zi), to_mat(zt), labels, 0.1);
    const auto perm_res = supcon_loss(to_mat(pi), to_mat(pt), pl, 0.1);
    CHECK(orig.total == Catch::Approx(perm_res.total).epsilon(1e-12));
}

TEST_CASE("single-class batches are rejected as degenerate") {
    const Matd mi = to_mat(testutil::random_unit_rows(4, 3, 91));
    const Matd mt = to_mat(testutil::random_unit_rows(4, 3, 92));
    CHECK_THROWS_AS(supcon_loss(mi, mt, {3, 3, 3, 3}, 0.1), DegenerateBatchError);

    LossConfig cfg = config(0.1, 0.5, DenominatorMode::LiteralEq2);
    cfg.supervision = Supervision::FnElimination;
    cfg.labels = {3, 3, 3, 3};
    // Same-class elimination plus the literal denominator empties every row.
    CHECK_THROWS_AS(clip_loss(mi, mt, cfg), DegenerateBatchError);
}

TEST_CASE("false-negative mask excludes exactly the same-class off-diagonal cells") {
    const MaskMatrix all_distinct = fn_elimination_mask({0, 1, 2});
    CHECK(all_distinct.all());

    const MaskMatrix mask = fn_elimination_mask({0, 0, 1});
    const bool expected[3][3] = {{true, false, true}, {false, true, true}, {true, true, true}};
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) CHECK(mask(j, k) == expected[j][k]);

    const MaskMatrix same = fn_elimination_mask({5, 5, 5});
    for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) CHECK(same(j, k) == (j == k));
}

TEST_CASE("every loss agrees with its scalar-loop oracle on random batches") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + static_cast<int>(gen() % 15);  // 2..16
        const int p = 1 + static_cast<int>(gen() % 8);   // 1..8
        const double tau = 0.05 + 0.5 * (static_cast<double>(gen() % 1000) / 1000.0);
        const double lambda = static_cast<double>(gen() % 1001) / 1000.0;
        const Rows zi = testutil::random_unit_rows(n, p, gen());
        const Rows zt = testutil::random_unit_rows(n, p, gen());
        std::vector<int> labels(static_cast<size_t>(n));
        for (auto& l : labels) l = static_cast<int>(gen() % 3);
        const bool multi_class =
            std::any_of(labels.begin(), labels.end(), [&](int l) { return l != labels[0]; });
        const Matd mi = to_mat(zi), mt = to_mat(zt);

        for (const bool inclusive : {true, false}) {
            const auto mode =
                inclusive ? DenominatorMode::ClipInclusive : DenominatorMode::LiteralEq2;
            const auto got = clip_loss(mi, mt, config(tau, lambda, mode));
            const auto want = testutil::oracle_clip(zi, zt, tau, lambda, inclusive);
            REQUIRE_FALSE(want.degenerate);
            CHECK(std::abs(got.total - want.total) < 1e-6);
            CHECK(std::abs(got.l_it - want.l_it) < 1e-6);
            CHECK(std::abs(got.l_ti - want.l_ti) < 1e-6);
        }

        {
            LossConfig cfg = config(tau, lambda, DenominatorMode::ClipInclusive);
            cfg.supervision = Supervision::FnElimination;
            cfg.labels = labels;
            const auto got = clip_loss(mi, mt, cfg);
            const auto want = testutil::oracle_clip(zi, zt, tau, lambda, true, labels);
            REQUIRE_FALSE(want.degenerate);
            CHECK(std::abs(got.total - want.total) < 1e-6);
        }

        CHECK(std::abs(ntxent_loss(mi, mt, tau).total - testutil::oracle_ntxent(zi, zt, tau)) <
              1e-6);

        if (multi_class) {
            const auto got = supcon_loss(mi, mt, labels, tau);
            const auto want = testutil::oracle_supcon(zi, zt, labels, tau);
            CHECK(std::abs(got.total - want.total) < 1e-6);
        }
    }
}

namespace {

// Central finite differences of `f` w.r.t. every projection coordinate;
// compares against the analytic gradient matrices the loss returns.
template <typename LossFn>
void check_z_gradients(Matd zi, Matd zt, LossFn&& f) {
    const auto res = f(zi, zt);
    const double h = 1e-6;
    auto check_side = [&](Matd& z, const Matd& dz) {
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            for (Eigen::Index c = 0; c < z.cols(); ++c) {
                const double keep = z(r, c);
                z(r, c) = keep + h;
                const double up = f(zi, zt).total;
                z(r, c) = keep - h;
                const double down = f(zi, zt).total;
                z(r, c) = keep;
                const double numeric = (up - down) / (2 * h);
                INFO("row " << r << " col " << c << " analytic " << dz(r, c) << " numeric "
                            << numeric);
                CHECK(testutil::rel_err(dz(r, c), numeric) < 1e-4);
            }
        }
    };
    check_side(zi, res.d_zi);
    check_side(zt, res.d_zt);
}

}  // namespace

TEST_CASE("analytic projection gradients match finite differences for every loss") {
    const Matd zi = to_mat(testutil::random_unit_rows(5, 4, 311));
    const Matd zt = to_mat(testutil::random_unit_rows(5, 4, 312));
    const std::vector<int> labels = {0, 1, 0, 2, 1};

    check_z_gradients(zi, zt, [&](const Matd& a, const Matd& b) {
        return clip_loss(a, b, config(0.1, 0.3, DenominatorMode::ClipInclusive));
    });
    check_z_gradients(zi, zt, [&](const Matd& a, const Matd& b) {
        return clip_loss(a, b, config(0.2, 0.7, DenominatorMode::LiteralEq2));
    });
    check_z_gradients(zi, zt, [&](const Matd& a, const Matd& b) {
        LossConfig cfg = config(0.15, 0.5, DenominatorMode::ClipInclusive);
        cfg.supervision = Supervision::FnElimination;
        cfg.labels = labels;
        return clip_loss(a, b, cfg);
    });
    check_z_gradients(zi, zt,
                      [&](const Matd& a, const Matd& b) { return ntxent_loss(a, b, 0.25); });
    check_z_gradients(zi, zt, [&](const Matd& a, const Matd& b) {
        return supcon_loss(a, b, labels, 0.2);
    });
}
