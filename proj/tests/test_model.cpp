#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lrx/model.hpp"
#include "lrx/rng.hpp"
#include "oracles.hpp"

using namespace lrx;

namespace {

double orthonormality_error(const DenseMatrix& q) {
    const DenseMatrix g = matmul_tn(q, q);
    double err = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) {
            const double t = g(i, j) - (i == j ? 1.0 : 0.0);
            err += t * t;
        }
    return std::sqrt(err);
}

// Random invertible Q with condition number <= cond_cap.
DenseMatrix random_conditioned(std::size_t r, double cond_cap, std::uint64_t seed) {
    const DenseMatrix q1 = oracles::random_orthonormal(r, r, seed);
    const DenseMatrix q2 = oracles::random_orthonormal(r, r, seed + 1);
    DenseMatrix d(r, r);
    lrx::rng::Stream s(seed, 0x99u);
    for (std::size_t i = 0; i < r; ++i)
        d(i, i) = 1.0 + (cond_cap - 1.0) * s.next_uniform();
    // exact endpoints keep cond(Q) <= cond_cap
    d(0, 0) = cond_cap;
    if (r > 1) d(r - 1, r - 1) = 1.0;
    return matmul(q1, matmul_nt(d, q2));
}

FactorPair reparametrize(const FactorPair& p, const DenseMatrix& q) {
    FactorPair out;
    out.L = matmul(p.L, q);
    out.R = matmul(p.R, transpose(oracles::explicit_inverse(q)));
    return out;
}

} // namespace

TEST_CASE("generate_ground_truth basic recipes") {
    SUBCASE("r=1 records effective kappa 1") {
        const GroundTruth gt = generate_ground_truth(5, 4, 1, 7.0, 3);
        CHECK(gt.Sigma.size() == 1);
        CHECK(gt.Sigma[0] == 1.0);
        CHECK(gt.kappa == 1.0);
    }
    SUBCASE("r=2 forces endpoints") {
        const GroundTruth gt = generate_ground_truth(6, 6, 2, 5.0, 3);
        CHECK(gt.Sigma[0] == 1.0);
        CHECK(gt.Sigma[1] == doctest::Approx(0.2).epsilon(1e-15));
    }
    SUBCASE("kappa below one rejected") {
        CHECK_THROWS_AS(generate_ground_truth(4, 4, 2, 0.5, 1), DomainError);
    }
    SUBCASE("rank out of range rejected") {
        CHECK_THROWS_AS(generate_ground_truth(4, 4, 5, 2.0, 1), DomainError);
    }
}

TEST_CASE("generate_ground_truth desk instance invariants") {
    const GroundTruth gt = generate_ground_truth(100, 100, 30, 5.0, 1);
    CHECK(gt.Sigma[0] / gt.Sigma[29] == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(orthonormality_error(gt.Vstar) <= 1e-10);
    CHECK(orthonormality_error(gt.Wstar) <= 1e-10);
    for (std::size_t i = 0; i + 1 < 30; ++i) CHECK(gt.Sigma[i] >= gt.Sigma[i + 1]);
    CHECK(gt.Sigma[29] > 0.0);

    // X* = V* diag(Sigma) W*^T
    DenseMatrix vs = gt.Vstar;
    for (std::size_t i = 0; i < vs.rows(); ++i)
        for (std::size_t j = 0; j < vs.cols(); ++j) vs(i, j) *= gt.Sigma[j];
    CHECK(frobenius_norm(matmul_nt(vs, gt.Wstar) - gt.Xstar) <= 1e-10);
}

TEST_CASE("generate_ground_truth is bit-identical across calls") {
    const GroundTruth a = generate_ground_truth(20, 15, 4, 3.0, 99);
    const GroundTruth b = generate_ground_truth(20, 15, 4, 3.0, 99);
    REQUIRE(a.Xstar.size() == b.Xstar.size());
    for (std::size_t k = 0; k < a.Xstar.size(); ++k)
        CHECK(a.Xstar.data()[k] == b.Xstar.data()[k]);
}

TEST_CASE("ground truth blob round trip") {
    const GroundTruth a = generate_ground_truth(12, 9, 3, 4.0, 1234);
    std::stringstream ss;
    write_ground_truth(ss, a);
    const GroundTruth b = read_ground_truth(ss);
    CHECK(b.n1 == a.n1);
    CHECK(b.r == a.r);
    for (std::size_t k = 0; k < a.Xstar.size(); ++k)
        CHECK(a.Xstar.data()[k] == b.Xstar.data()[k]);
}

TEST_CASE("assemble examples") {
    FactorPair p;
    p.L = DenseMatrix(3, 2);
    p.R = DenseMatrix(4, 2);
    CHECK(frobenius_norm(assemble(p)) == 0.0);

    FactorPair e;
    e.L = DenseMatrix(3, 1, {1, 0, 0});
    e.R = DenseMatrix(3, 1, {0, 1, 0});
    const DenseMatrix x = assemble(e);
    CHECK(x(0, 1) == 1.0);
    CHECK(frobenius_norm(x) == 1.0);

    FactorPair r;
    r.L = oracles::random_matrix(5, 3, 4);
    r.R = oracles::random_matrix(6, 3, 5);
    CHECK(frobenius_norm(assemble(r) - oracles::naive_product_nt(r.L, r.R)) <=
          1e-12 * frobenius_norm(assemble(r)));
}

TEST_CASE("dist vanishes on the exact factorization") {
    const GroundTruth gt = generate_ground_truth(10, 8, 3, 4.0, 7);
    FactorPair p;
    p.L = gt.Lstar;
    p.R = gt.Rstar;
    const DistResult d = dist(p, gt);
    CHECK(d.status == DistStatus::Converged);
    CHECK(d.value <= 1e-12);
}

TEST_CASE("dist r=1 matches the scalar golden-section oracle") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const GroundTruth gt = generate_ground_truth(7, 6, 1, 1.0, 100 + seed);
        // Perturb the true factors so the optimal scalar alignment is positive.
        FactorPair p;
        p.L = gt.Lstar;
        p.R = gt.Rstar;
        lrx::rng::Stream s(seed, 0x31u);
        for (double& x : p.L.flat()) x += 0.25 * s.next_gaussian();
        for (double& x : p.R.flat()) x += 0.25 * s.next_gaussian();

        const double sigma = gt.Sigma[0];
        auto objective = [&](double q) {
            double f = 0.0;
            for (std::size_t i = 0; i < p.L.rows(); ++i) {
                const double d_ = p.L(i, 0) * q - gt.Lstar(i, 0);
                f += sigma * d_ * d_;
            }
            for (std::size_t i = 0; i < p.R.rows(); ++i) {
                const double d_ = p.R(i, 0) / q - gt.Rstar(i, 0);
                f += sigma * d_ * d_;
            }
            return f;
        };
        // Coarse log-grid scan over q > 0 locates the global bracket; the
        // golden section refines inside it.
        double best_q = 1.0, best_f = objective(1.0);
        for (int k = -600; k <= 600; ++k) {
            const double q = std::pow(10.0, k / 200.0);
            const double f = objective(q);
            if (f < best_f) {
                best_f = f;
                best_q = q;
            }
        }
        const double lo = best_q * std::pow(10.0, -1.0 / 200.0);
        const double hi = best_q * std::pow(10.0, 1.0 / 200.0);
        const double qstar = oracles::golden_section(objective, lo, hi, 1e-13);
        const double ref = std::sqrt(std::min(best_f, objective(qstar)));
        const DistResult d = dist(p, gt);
        CHECK(d.value == doctest::Approx(ref).epsilon(1e-8));
        CHECK(d.value <= ref + 1e-10);
    }
}

TEST_CASE("dist never exceeds the Frobenius upper bound") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GroundTruth gt = generate_ground_truth(9, 11, 3, 6.0, 500 + seed);
        FactorPair p;
        p.L = oracles::random_matrix(9, 3, 600 + seed);
        p.R = oracles::random_matrix(11, 3, 700 + seed);
        const DistResult d = dist(p, gt);
        const double fro = frobenius_norm(assemble(p) - gt.Xstar);
        CHECK(d.value <= dist_upper_bound(fro) + 1e-8);
    }
}

TEST_CASE("dist is invariant under GL(r) reparametrization") {
    const GroundTruth gt = generate_ground_truth(12, 10, 3, 5.0, 21);
    FactorPair p;
    p.L = gt.Lstar;
    p.R = gt.Rstar;
    lrx::rng::Stream s(5, 0x32u);
    for (double& x : p.L.flat()) x += 0.05 * s.next_gaussian();
    for (double& x : p.R.flat()) x += 0.05 * s.next_gaussian();
    const DistResult base = dist(p, gt);
    REQUIRE(base.status == DistStatus::Converged);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const DenseMatrix q = random_conditioned(3, 100.0, 800 + 2 * seed);
        const DistResult moved = dist(reparametrize(p, q), gt);
        CHECK(moved.value == doctest::Approx(base.value).epsilon(1e-6));
    }
}

TEST_CASE("dist falls back for degenerate factors") {
    const GroundTruth gt = generate_ground_truth(6, 6, 2, 2.0, 31);
    FactorPair p;
    p.L = DenseMatrix(6, 2); // rank collapsed
    p.R = DenseMatrix(6, 2);
    const DistResult d = dist(p, gt);
    CHECK(d.status == DistStatus::FellBackToUpperBound);
    CHECK(d.value == doctest::Approx(dist_upper_bound(frobenius_norm(gt.Xstar))));
}

TEST_CASE("error_report trivial and scaled iterates") {
    const GroundTruth gt = generate_ground_truth(8, 8, 2, 3.0, 41);
    FactorPair exact;
    exact.L = gt.Lstar;
    exact.R = gt.Rstar;
    const ErrorReport rep = error_report(exact, gt);
    CHECK(rep.fro_rel <= 1e-12);
    CHECK(rep.spec_abs <= 1e-12);
    CHECK(rep.dist_val <= 1e-12);

    FactorPair doubled;
    doubled.L = exact.L;
    doubled.L *= 2.0;
    doubled.R = exact.R;
    CHECK(error_report(doubled, gt).fro_rel == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("error_report norm equivalence on random iterates") {
    const GroundTruth gt = generate_ground_truth(10, 9, 3, 4.0, 8);
    const double xstar_fro = frobenius_norm(gt.Xstar);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        FactorPair p;
        p.L = oracles::random_matrix(10, 3, 900 + seed);
        p.R = oracles::random_matrix(9, 3, 950 + seed);
        const ErrorReport rep = error_report(p, gt);
        const double fro_abs = rep.fro_rel * xstar_fro;
        CHECK(rep.spec_abs <= fro_abs + 1e-12);
        // rank(X_t - X*) <= 2r
        CHECK(fro_abs <= std::sqrt(2.0 * 3.0) * rep.spec_abs + 1e-9);
    }
}

TEST_CASE("norm chain on random iterates") {
    const GroundTruth gt = generate_ground_truth(11, 7, 2, 5.0, 77);
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        FactorPair p;
        p.L = gt.Lstar;
        p.R = gt.Rstar;
        lrx::rng::Stream s(seed, 0x33u);
        const double scale = seed % 3 == 0 ? 1.0 : 0.05;
        for (double& x : p.L.flat()) x += scale * s.next_gaussian();
        for (double& x : p.R.flat()) x += scale * s.next_gaussian();
        const ErrorReport rep = error_report(p, gt);
        const double fro_abs = rep.fro_rel * frobenius_norm(gt.Xstar);
        CHECK(rep.dist_val <= dist_upper_bound(fro_abs) + 1e-8);
        CHECK(fro_abs <= std::sqrt(2.0 * 2.0) * rep.spec_abs + 1e-9);
    }
}

TEST_CASE("dist shape mismatch") {
    const GroundTruth gt = generate_ground_truth(6, 6, 2, 2.0, 1);
    FactorPair p;
    p.L = DenseMatrix(6, 3);
    p.R = DenseMatrix(6, 3);
    CHECK_THROWS_AS(dist(p, gt), DimensionError);
}
