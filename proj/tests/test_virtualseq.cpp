#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lrx/rng.hpp"
#include "lrx/solvers.hpp"
#include "lrx/virtualseq.hpp"
#include "oracles.hpp"

using namespace lrx;

namespace {

// Ground truth supported on the leading (n-1) coordinates, so that the last
// row/column stay free for a direction orthogonal to everything.
GroundTruth corner_ground_truth(std::size_t n, std::size_t r) {
    DenseMatrix gv = oracles::random_matrix(n, r, 17);
    DenseMatrix gw = oracles::random_matrix(n, r, 19);
    for (std::size_t j = 0; j < r; ++j) {
        gv(n - 1, j) = 0.0;
        gw(n - 1, j) = 0.0;
    }
    std::vector<double> sigma(r);
    for (std::size_t i = 0; i < r; ++i) sigma[i] = 1.0 - 0.3 * static_cast<double>(i);
    return ground_truth_from_svd(qr_orthonormalize(gv), std::move(sigma),
                                 qr_orthonormalize(gw));
}

} // namespace

TEST_CASE("sample_directions unit norm and determinism") {
    const DirectionSample one = sample_directions(6, 8, 1, 5);
    REQUIRE(one.count() == 1);
    CHECK(std::fabs(vector_norm(one.directions[0].w) - 1.0) <= 1e-12);
    CHECK(std::fabs(vector_norm(one.directions[0].v) - 1.0) <= 1e-12);

    const DirectionSample a = sample_directions(6, 8, 5, 42);
    const DirectionSample b = sample_directions(6, 8, 5, 42);
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t i = 0; i < 6; ++i)
            CHECK(a.directions[k].w[i] == b.directions[k].w[i]);

    CHECK_THROWS_AS(sample_directions(4, 4, 0, 1), DomainError);
}

TEST_CASE("sample_directions CLT-scale mean bound") {
    const std::size_t K = 1000, n1 = 12, n2 = 10;
    const DirectionSample s = sample_directions(n1, n2, K, 7);
    double mean = 0.0;
    for (const VirtualDirection& d : s.directions)
        for (double x : d.w) mean += x;
    mean /= static_cast<double>(K * n1);
    CHECK(std::fabs(mean) <= 4.0 / std::sqrt(static_cast<double>(K * n1)));
}

TEST_CASE("horizon_T exact values") {
    // mu = 10 log(10): T = ceil(log(10) * 10/(10 log 10)) = 1.
    CHECK(horizon_T(10.0 * std::log(10.0), 1) == 1);
    CHECK(horizon_T(0.5, 1) == 47);  // ceil(20 ln 10)
    CHECK(horizon_T(0.5, 16) == 74); // ceil(20 ln 40)
    CHECK_THROWS_AS(horizon_T(0.0, 1), DomainError);
}

TEST_CASE("run_virtual with a direction orthogonal to truth and measurements") {
    // Forced operator touching only the leading (n-1)x(n-1) block; the
    // direction e_n x e_n is orthogonal to X* and every A_i, so projection
    // changes nothing and the virtual trajectory tracks the real one exactly.
    const std::size_t n = 6, r = 2, m = 30;
    const GroundTruth gt = corner_ground_truth(n, r);
    std::vector<DenseMatrix> mats;
    for (std::size_t i = 0; i < m; ++i) {
        DenseMatrix a = oracles::random_matrix(n, n, 100 + i);
        for (std::size_t k = 0; k < n; ++k) {
            a(n - 1, k) = 0.0;
            a(k, n - 1) = 0.0;
        }
        mats.push_back(std::move(a));
    }
    const auto op = SensingOperator::forced(n, n, std::move(mats));
    std::vector<double> w(n, 0.0), v(n, 0.0);
    w[n - 1] = 1.0;
    v[n - 1] = 1.0;
    const VirtualDirection d{w, v};

    const std::size_t T = 5;
    const std::vector<FactorPair> virt = run_virtual(gt, op, d, 0.5, T);
    const std::vector<FactorPair> real = scaledgd_trajectory(gt, op, 0.5, T);
    REQUIRE(virt.size() == real.size());
    for (std::size_t t = 0; t < virt.size(); ++t) {
        const double gap = frobenius_norm(assemble(virt[t]) - assemble(real[t]));
        CHECK(gap <= 1e-9 * std::max(1.0, frobenius_norm(assemble(real[t]))));
    }
}

TEST_CASE("virtual init is a function of the projected measurements only") {
    // Re-randomize the components of every A_i along wv^T: the virtual
    // initialization must not move, and with the virtual-operator loop the
    // whole trajectory must be bit-identical.
    const std::size_t n1 = 8, n2 = 7, m = 60, r = 2;
    const GroundTruth gt = generate_ground_truth(n1, n2, r, 3.0, 3);
    const DirectionSample ds = sample_directions(n1, n2, 1, 11);
    const VirtualDirection& d = ds.directions[0];
    DenseMatrix wv(n1, n2);
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) wv(i, j) = d.w[i] * d.v[j];

    const auto base = SensingOperator::gaussian(n1, n2, m, 21);
    std::vector<DenseMatrix> rerandomized;
    rng::Stream fresh(33, 0x55u);
    for (std::size_t i = 0; i < m; ++i) {
        DenseMatrix a = base.measurement_matrix(i);
        const double coeff = dot(a, wv);
        const double replacement = fresh.next_gaussian();
        for (std::size_t k = 0; k < a.size(); ++k)
            a.data()[k] += (replacement - coeff) * wv.data()[k];
        rerandomized.push_back(std::move(a));
    }
    const auto twisted = SensingOperator::forced(n1, n2, std::move(rerandomized));

    const std::size_t T = 4;
    const auto traj_a =
        run_virtual(gt, base, d, 0.5, T, VirtualLoopBackend::VirtualOperator);
    const auto traj_b =
        run_virtual(gt, twisted, d, 0.5, T, VirtualLoopBackend::VirtualOperator);
    REQUIRE(traj_a.size() == traj_b.size());
    for (std::size_t t = 0; t < traj_a.size(); ++t) {
        const double gap = frobenius_norm(assemble(traj_a[t]) - assemble(traj_b[t]));
        CHECK(gap <= 1e-9);
    }
}

TEST_CASE("coupled_diagnostics definitions") {
    const GroundTruth gt = generate_ground_truth(10, 9, 2, 4.0, 31);
    const auto op = SensingOperator::gaussian(10, 9, 250, 37);
    const std::vector<FactorPair> real = scaledgd_trajectory(gt, op, 0.5, 3);

    SUBCASE("virtual identical to real collapses G_t to the spectral error") {
        const std::vector<std::vector<FactorPair>> virt = {real};
        const CoupledTrace trace = coupled_diagnostics(real, virt, gt);
        for (const auto& it : trace.per_iterate) {
            CHECK(it.G_t == doctest::Approx(it.spec_err).epsilon(1e-12));
        }
        for (const auto& d : trace.per_direction) {
            CHECK(d.fro_gap == 0.0);
            CHECK(d.proj_gap_V == 0.0);
            CHECK(d.proj_gap_W == 0.0);
        }
    }

    SUBCASE("single direction t=0 record matches a hand-assembled sum") {
        const DirectionSample ds = sample_directions(10, 9, 1, 5);
        const std::vector<std::vector<FactorPair>> virt = {
            run_virtual(gt, op, ds.directions[0], 0.5, 3)};
        const CoupledTrace trace = coupled_diagnostics(real, virt, gt);

        const DenseMatrix x0 = assemble(real[0]);
        const DenseMatrix xv0 = assemble(virt[0][0]);
        const DenseMatrix err = gt.Xstar - x0;
        const DenseMatrix diff = x0 - xv0;
        const double expected_G0 = spectral_norm(err) + frobenius_norm(diff);
        CHECK(trace.per_iterate[0].G_t == doctest::Approx(expected_G0).epsilon(1e-12));

        const double expected_G0_star =
            spectral_norm(matmul_tn(gt.Vstar, err)) + spectral_norm(matmul(err, gt.Wstar)) +
            frobenius_norm(matmul_tn(gt.Vstar, diff)) + frobenius_norm(matmul(diff, gt.Wstar));
        CHECK(trace.per_iterate[0].G_t_star == doctest::Approx(expected_G0_star).epsilon(1e-12));
    }

    SUBCASE("length mismatch rejected") {
        std::vector<std::vector<FactorPair>> bad = {
            std::vector<FactorPair>(real.begin(), real.begin() + 2)};
        CHECK_THROWS_AS(coupled_diagnostics(real, bad, gt), DimensionError);
    }
}

TEST_CASE("decoupling_audit trivial cases") {
    const std::size_t n1 = 6, n2 = 5;

    SUBCASE("virtual iterate equal to truth gives zero lhs and rhs") {
        const GroundTruth gt = generate_ground_truth(n1, n2, 2, 2.0, 41);
        const auto op = SensingOperator::gaussian(n1, n2, 40, 43);
        const DirectionSample ds = sample_directions(n1, n2, 2, 47);
        FactorPair exact{gt.Lstar, gt.Rstar};
        const std::vector<FactorPair> real = {exact};
        const std::vector<std::vector<FactorPair>> virt = {{exact}, {exact}};
        const DecouplingReport rep = decoupling_audit(real, virt, op, ds, gt);
        CHECK(rep.violations == 0);
        for (const AuditRow& row : rep.rows) {
            CHECK(row.lhs <= 1e-12);
            CHECK(row.rhs <= 1e-12);
        }
    }

    SUBCASE("single measurement equal to wv^T is annihilated by the projection") {
        const DirectionSample ds = sample_directions(n1, n2, 1, 51);
        const VirtualDirection& d = ds.directions[0];
        DenseMatrix wv(n1, n2);
        for (std::size_t i = 0; i < n1; ++i)
            for (std::size_t j = 0; j < n2; ++j) wv(i, j) = d.w[i] * d.v[j];
        const auto op = SensingOperator::forced(n1, n2, {wv});
        const GroundTruth gt = generate_ground_truth(n1, n2, 2, 2.0, 53);
        FactorPair some{gt.Lstar, gt.Rstar};
        for (double& x : some.L.flat()) x *= 1.1;
        const std::vector<FactorPair> real = {some};
        const std::vector<std::vector<FactorPair>> virt = {{some}};
        const DecouplingReport rep = decoupling_audit(real, virt, op, ds, gt);
        REQUIRE(rep.rows.size() == 1);
        CHECK(rep.rows[0].lhs <= 1e-14);
        CHECK(rep.violations == 0);
    }
}

TEST_CASE("projection_bound_audit skips out-of-regime iterates") {
    const GroundTruth gt = generate_ground_truth(12, 12, 2, 2.0, 61);
    // A far-away iterate fails the measured preconditions and must be counted
    // as skipped, never as a violation.
    FactorPair far{gt.Lstar, gt.Rstar};
    far.L *= 3.0;
    const std::vector<FactorPair> real = {far};
    const std::vector<std::vector<FactorPair>> virt = {{far}};
    const ProjectionBoundReport rep = projection_bound_audit(real, virt, gt);
    CHECK(rep.skipped == 1);
    CHECK(rep.checks == 0);
    CHECK(rep.violations == 0);

    // Exact iterates satisfy the preconditions and the bound.
    FactorPair exact{gt.Lstar, gt.Rstar};
    const std::vector<FactorPair> real2 = {exact};
    const std::vector<std::vector<FactorPair>> virt2 = {{exact}};
    const ProjectionBoundReport rep2 = projection_bound_audit(real2, virt2, gt);
    CHECK(rep2.checks == 1);
    CHECK(rep2.violations == 0);
}

TEST_CASE("desk-scale audit run") {
    // Small but representative: the decoupling bound holds everywhere, the
    // G_t envelope holds, and G_{0,*} <= 2 G_0.
    const std::size_t n = 24, r = 2;
    const std::size_t m = 8 * 2 * n * r;
    const GroundTruth gt = generate_ground_truth(n, n, r, 3.0, 71);
    const auto op = SensingOperator::gaussian(n, n, m, 73);
    const DirectionSample ds = sample_directions(n, n, 4, 79);
    const std::size_t T = 12;

    const std::vector<FactorPair> real = scaledgd_trajectory(gt, op, 0.5, T);
    std::vector<std::vector<FactorPair>> virt;
    for (const VirtualDirection& d : ds.directions)
        virt.push_back(run_virtual(gt, op, d, 0.5, T));

    const CoupledTrace trace = coupled_diagnostics(real, virt, gt);
    const double g0 = trace.per_iterate[0].G_t;
    CHECK(trace.per_iterate[0].G_t_star <= 2.0 * g0);
    for (std::size_t t = 0; t < trace.per_iterate.size(); ++t) {
        const double envelope = g0 * std::pow(1.0 - 0.05, static_cast<double>(t));
        CHECK(trace.per_iterate[t].G_t <= envelope + 1e-12);
    }

    const DecouplingReport rep = decoupling_audit(real, virt, op, ds, gt);
    CHECK(rep.violations == 0);

    // In this oversampled regime the virtual gap bound of the closeness lemma
    // holds with margin at every iterate.
    double max_gap = 0.0;
    for (const auto& rec : trace.per_direction) max_gap = std::max(max_gap, rec.fro_gap);
    CHECK(max_gap <= gt.sigma_min() / 10.0);
}

TEST_CASE("audit CSV schemas") {
    CoupledTrace trace;
    trace.per_direction.push_back({0, 0, 0.25, 0.125, 0.0625});
    trace.per_iterate.push_back({0, 0.5, 0.75, 1.0});
    std::ostringstream os;
    write_coupled_trace_csv(os, trace);
    CHECK(os.str() ==
          "scope,t,direction_index,fro_gap,proj_gap_V,proj_gap_W,spec_err,G_t,G_t_star\n"
          "direction,0,0,0.25,0.125,0.0625,,,\n"
          "iterate,0,,,,,0.5,0.75,1\n");

    DecouplingReport dec;
    dec.rows.push_back({1, 2, 0.5, 1.0, false});
    dec.checks = 1;
    ProjectionBoundReport proj;
    proj.rows.push_back({1, 2, 0.5, 0.25, true, false});
    proj.rows.push_back({2, 2, 0.5, 0.25, false, true}); // skipped: not emitted
    proj.checks = 1;
    proj.violations = 1;
    proj.skipped = 1;
    std::ostringstream os2;
    write_audit_csv(os2, dec, proj);
    CHECK(os2.str() ==
          "t,direction_index,metric_name,lhs,rhs,violated\n"
          "1,2,decoupling,0.5,1,false\n"
          "1,2,projection_bound,0.5,0.25,true\n");
}

TEST_CASE("coupled trace minimal shape for K=1 T=1") {
    const GroundTruth gt = generate_ground_truth(8, 8, 2, 2.0, 91);
    const auto op = SensingOperator::gaussian(8, 8, 8 * 16 * 2, 93);
    const DirectionSample ds = sample_directions(8, 8, 1, 97);
    const std::vector<FactorPair> real = scaledgd_trajectory(gt, op, 0.5, 1);
    const std::vector<std::vector<FactorPair>> virt = {
        run_virtual(gt, op, ds.directions[0], 0.5, 1)};
    const CoupledTrace trace = coupled_diagnostics(real, virt, gt);
    std::ostringstream os;
    write_coupled_trace_csv(os, trace);
    // header + 2 direction rows (t=0,1) + 2 iterate rows (t=0,1)
    std::size_t lines = 0;
    for (char c : os.str())
        if (c == '\n') ++lines;
    CHECK(lines == 5);
}
