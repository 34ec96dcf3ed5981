#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lrx/rng.hpp"
#include "lrx/sensing.hpp"
#include "oracles.hpp"

using namespace lrx;

namespace {

VirtualDirection random_direction(std::size_t n1, std::size_t n2, std::uint64_t seed) {
    return VirtualDirection::normalized(oracles::random_vector(n1, seed),
                                        oracles::random_vector(n2, seed + 1));
}

double direct_inner(const MeasurementVector& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

TEST_CASE("apply on zero input") {
    const auto op = SensingOperator::gaussian(4, 5, 7, 42);
    const MeasurementVector y = op.apply(DenseMatrix(4, 5));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);
}

TEST_CASE("forced mode trace inner product") {
    const auto op = SensingOperator::forced(2, 2, {DenseMatrix::identity(2)});
    const DenseMatrix x(2, 2, {1, 2, 3, 4});
    const MeasurementVector y = op.apply(x);
    REQUIRE(y.size() == 1);
    CHECK(y[0] == doctest::Approx(5.0).epsilon(1e-15));

    // adjoint of the unit measurement recovers I_2
    MeasurementVector u;
    u.values = {1.0};
    const DenseMatrix back = op.adjoint(u);
    CHECK(frobenius_norm(back - DenseMatrix::identity(2)) <= 1e-15);
}

TEST_CASE("adjoint of zero vector") {
    const auto op = SensingOperator::gaussian(3, 3, 5, 9);
    MeasurementVector u;
    u.values.assign(5, 0.0);
    CHECK(frobenius_norm(op.adjoint(u)) == 0.0);
}

TEST_CASE("adjoint identity against direct summation") {
    const auto op = SensingOperator::gaussian(4, 4, 32, 42);
    for (std::uint64_t k = 0; k < 100; ++k) {
        const DenseMatrix x = oracles::random_matrix(4, 4, 900 + k);
        const std::vector<double> u = oracles::random_vector(32, 1900 + k);
        MeasurementVector mu_;
        mu_.values = u;
        const double lhs = direct_inner(op.apply(x), u);
        const double rhs = dot(x, op.adjoint(mu_));
        CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, frobenius_norm(x) * vector_norm(u)));
    }
}

TEST_CASE("backend equivalence is bit identical") {
    const auto mat = SensingOperator::gaussian(5, 6, 20, 77, Backend::Materialized);
    const auto str = SensingOperator::gaussian(5, 6, 20, 77, Backend::Streamed);
    for (std::uint64_t k = 0; k < 50; ++k) {
        const DenseMatrix x = oracles::random_matrix(5, 6, 2000 + k);
        const MeasurementVector ym = mat.apply(x);
        const MeasurementVector ys = str.apply(x);
        for (std::size_t i = 0; i < ym.size(); ++i) CHECK(ym[i] == ys[i]);
        MeasurementVector u;
        u.values = oracles::random_vector(20, 3000 + k);
        const DenseMatrix am = mat.adjoint(u);
        const DenseMatrix as = str.adjoint(u);
        for (std::size_t i = 0; i < am.size(); ++i) CHECK(am.data()[i] == as.data()[i]);
    }
}

TEST_CASE("backend auto-selection honours the memory budget") {
    const auto small = SensingOperator::gaussian(4, 4, 8, 1);
    CHECK(small.backend() == Backend::Materialized);
    // 8 * 1000 * 16 * 16 bytes > 1 MiB budget
    const auto big = SensingOperator::gaussian(16, 16, 1000, 1, std::nullopt, 1 << 20);
    CHECK(big.backend() == Backend::Streamed);
}

TEST_CASE("operator header round trip") {
    const auto op = SensingOperator::gaussian(7, 9, 33, 123456789ull, Backend::Streamed);
    const OperatorHeader h = parse_operator_header(format_operator_header(op.header()));
    CHECK(h.n1 == 7);
    CHECK(h.n2 == 9);
    CHECK(h.m == 33);
    CHECK(h.seed == 123456789ull);
    CHECK(h.backend == Backend::Streamed);
}

TEST_CASE("project_perp fixed points and idempotence") {
    const std::size_t n1 = 5, n2 = 4;
    const VirtualDirection d = random_direction(n1, n2, 9);
    DenseMatrix wv(n1, n2);
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) wv(i, j) = d.w[i] * d.v[j];

    // A_1 = wv^T projects to zero.
    const auto op_aligned = SensingOperator::forced(n1, n2, {wv});
    CHECK(frobenius_norm(op_aligned.project_perp(d, 0)) <= 1e-12);

    // A_1 already orthogonal to wv^T stays unchanged.
    DenseMatrix orth = oracles::random_matrix(n1, n2, 31);
    const double c = dot(orth, wv);
    for (std::size_t k = 0; k < orth.size(); ++k) orth.data()[k] -= c * wv.data()[k];
    const auto op_orth = SensingOperator::forced(n1, n2, {orth});
    CHECK(frobenius_norm(op_orth.project_perp(d, 0) - orth) <= 1e-12 * frobenius_norm(orth));

    // Idempotence on a random measurement matrix.
    const auto op = SensingOperator::gaussian(n1, n2, 3, 9);
    const DenseMatrix once = op.project_perp(d, 1);
    const auto op_once = SensingOperator::forced(n1, n2, {once});
    const DenseMatrix twice = op_once.project_perp(d, 0);
    CHECK(frobenius_norm(twice - once) <= 1e-12 * std::max(1.0, frobenius_norm(once)));

    // Result orthogonal to wv^T.
    CHECK(std::fabs(dot(once, wv)) <= 1e-10 * frobenius_norm(op.measurement_matrix(1)));
}

TEST_CASE("apply_virtual coordinates") {
    const std::size_t n1 = 4, n2 = 6;
    const auto op = SensingOperator::gaussian(n1, n2, 10, 13);
    const VirtualDirection d = random_direction(n1, n2, 5);
    DenseMatrix wv(n1, n2);
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) wv(i, j) = d.w[i] * d.v[j];

    SUBCASE("X = wv^T gives zero head and unit tail") {
        const MeasurementVector y = op.apply_virtual(d, wv);
        REQUIRE(y.size() == 11);
        for (std::size_t i = 0; i < 10; ++i) CHECK(std::fabs(y[i]) <= 1e-10);
        CHECK(y[10] == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("X orthogonal to wv^T gives zero tail") {
        DenseMatrix x = oracles::random_matrix(n1, n2, 77);
        const double c = dot(x, wv);
        for (std::size_t k = 0; k < x.size(); ++k) x.data()[k] -= c * wv.data()[k];
        const MeasurementVector y = op.apply_virtual(d, x);
        CHECK(std::fabs(y[10]) <= 1e-12 * frobenius_norm(x));
    }

    SUBCASE("head equals apply on the projected input") {
        const DenseMatrix x = oracles::random_matrix(n1, n2, 13);
        DenseMatrix px = x;
        const double c = dot(x, wv);
        for (std::size_t k = 0; k < px.size(); ++k) px.data()[k] -= c * wv.data()[k];
        const MeasurementVector direct = op.apply(px);
        const MeasurementVector virt = op.apply_virtual(d, x);
        for (std::size_t i = 0; i < 10; ++i)
            CHECK(virt[i] == doctest::Approx(direct[i]).epsilon(1e-12));
    }
}

TEST_CASE("virtual adjoint pairs with virtual apply") {
    const std::size_t n1 = 5, n2 = 5;
    const auto op = SensingOperator::gaussian(n1, n2, 12, 21);
    const VirtualDirection d = random_direction(n1, n2, 3);
    for (std::uint64_t k = 0; k < 30; ++k) {
        const DenseMatrix x = oracles::random_matrix(n1, n2, 400 + k);
        const std::vector<double> u = oracles::random_vector(13, 500 + k);
        MeasurementVector mu_;
        mu_.values = u;
        const double lhs = direct_inner(op.apply_virtual(d, x), u);
        const double rhs = dot(x, op.adjoint_virtual(d, mu_));
        CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1.0, frobenius_norm(x) * vector_norm(u)));
    }
}

TEST_CASE("estimate_rip on the forced orthonormal basis operator") {
    const auto op = SensingOperator::forced_identity_basis(3, 4);
    CHECK(op.estimate_rip(2, 25, 7) <= 1e-10);
}

TEST_CASE("estimate_rip under severe undersampling") {
    const auto op = SensingOperator::gaussian(6, 6, 1, 17);
    const double est = op.estimate_rip(2, 100, 11);
    MESSAGE("m=1 rip estimate: ", est);
    CHECK(est >= 0.5);
}

TEST_CASE("estimate_rip below one half at generous sampling") {
    const std::size_t n = 16, r = 2;
    const std::size_t m = 8 * (n + n) * r;
    const auto op = SensingOperator::gaussian(n, n, m, 5);
    const double est = op.estimate_rip(r, 500, 19);
    MESSAGE("rip estimate at m=8(n1+n2)r: ", est);
    CHECK(est < 0.5);
}

TEST_CASE("estimate_rip monotone in trials") {
    const auto op = SensingOperator::gaussian(8, 8, 40, 23);
    double prev = 0.0;
    for (std::size_t t : {1, 5, 10, 50, 150}) {
        const double est = op.estimate_rip(2, t, 29);
        CHECK(est >= prev);
        prev = est;
    }
}

TEST_CASE("virtual operator independence surrogate") {
    // Correlation between the stripped components {<A_i, wv^T>} and a fixed
    // linear functional of {P(A_i)}, averaged over fresh operators.
    const std::size_t n1 = 6, n2 = 6, m = 40;
    const VirtualDirection d = random_direction(n1, n2, 1);
    DenseMatrix wv(n1, n2);
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) wv(i, j) = d.w[i] * d.v[j];
    const DenseMatrix probe = oracles::random_matrix(n1, n2, 2);

    double mean_corr = 0.0;
    const std::size_t reps = 200;
    for (std::uint64_t s = 0; s < reps; ++s) {
        const auto op = SensingOperator::gaussian(n1, n2, m, 10000 + s, Backend::Streamed);
        double sg = 0, sh = 0, sgg = 0, shh = 0, sgh = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const DenseMatrix ai = op.measurement_matrix(i);
            const double g = dot(ai, wv);
            DenseMatrix pai = ai;
            for (std::size_t k = 0; k < pai.size(); ++k) pai.data()[k] -= g * wv.data()[k];
            const double h = dot(pai, probe);
            sg += g; sh += h; sgg += g * g; shh += h * h; sgh += g * h;
        }
        const double n = static_cast<double>(m);
        const double cov = sgh / n - (sg / n) * (sh / n);
        const double vg = sgg / n - (sg / n) * (sg / n);
        const double vh = shh / n - (sh / n) * (sh / n);
        mean_corr += cov / std::sqrt(vg * vh);
    }
    mean_corr /= static_cast<double>(reps);
    MESSAGE("mean correlation: ", mean_corr);
    CHECK(std::fabs(mean_corr) <= 4.0 / std::sqrt(static_cast<double>(reps)));
}

TEST_CASE("shape errors") {
    const auto op = SensingOperator::gaussian(3, 4, 5, 1);
    CHECK_THROWS_AS(op.apply(DenseMatrix(4, 3)), DimensionError);
    MeasurementVector u;
    u.values.assign(4, 1.0);
    CHECK_THROWS_AS(op.adjoint(u), DimensionError);
    CHECK_THROWS_AS(op.measurement_matrix(5), DimensionError);
}
