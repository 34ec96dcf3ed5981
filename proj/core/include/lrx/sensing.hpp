#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrx/matkit.hpp"

namespace lrx {

enum class Backend { Materialized, Streamed };

// Five-field text record used in experiment reproducibility manifests.
struct OperatorHeader {
    std::size_t n1 = 0, n2 = 0, m = 0;
    std::uint64_t seed = 0;
    Backend backend = Backend::Materialized;
};

std::string format_operator_header(const OperatorHeader& h);
OperatorHeader parse_operator_header(const std::string& text);

struct MeasurementVector {
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t i) noexcept { return values[i]; }
    double operator[](std::size_t i) const noexcept { return values[i]; }
};

// Unit direction pair (w, v) standing in for an epsilon-net element.
struct VirtualDirection {
    std::vector<double> w;
    std::vector<double> v;

    static VirtualDirection normalized(std::vector<double> w, std::vector<double> v);
};

inline constexpr std::size_t kDefaultMaterializeBudget = 512ull << 20; // bytes

// Gaussian linear measurement operator [A(X)]_i = <A_i, X>/sqrt(m) with each
// A_i entry a standard normal draw keyed by (seed, i, row, col). Materialized
// and Streamed backends produce bit-identical measurements for the same seed.
class SensingOperator {
public:
    static SensingOperator gaussian(std::size_t n1, std::size_t n2, std::size_t m,
                                    std::uint64_t seed,
                                    std::optional<Backend> backend = std::nullopt,
                                    std::size_t materialize_budget = kDefaultMaterializeBudget);

    // Test mode: explicit user-supplied measurement matrices, bypassing the RNG.
    static SensingOperator forced(std::size_t n1, std::size_t n2,
                                  std::vector<DenseMatrix> mats);

    // Exact isometry for tests: m = n1*n2 rows equal to sqrt(m) * E_k, so that
    // A*A = I and measurements enumerate the entries of X.
    static SensingOperator forced_identity_basis(std::size_t n1, std::size_t n2);

    std::size_t n1() const noexcept { return n1_; }
    std::size_t n2() const noexcept { return n2_; }
    std::size_t m() const noexcept { return m_; }
    std::uint64_t seed() const noexcept { return seed_; }
    Backend backend() const noexcept { return backend_; }
    bool is_forced() const noexcept { return forced_.has_value(); }
    OperatorHeader header() const noexcept { return {n1_, n2_, m_, seed_, backend_}; }

    MeasurementVector apply(const DenseMatrix& x) const;
    DenseMatrix adjoint(const MeasurementVector& u) const;

    // A_i as a dense n1 x n2 matrix (regenerated when streamed).
    DenseMatrix measurement_matrix(std::size_t i) const;

    // P_{wv^T,perp}(A_i) = A_i - <A_i, wv^T> wv^T.
    DenseMatrix project_perp(const VirtualDirection& d, std::size_t i) const;

    // Virtual operator A_{(w,v)}: m+1 coordinates, the last one recording the
    // component of X along wv^T.
    MeasurementVector apply_virtual(const VirtualDirection& d, const DenseMatrix& x) const;
    DenseMatrix adjoint_virtual(const VirtualDirection& d, const MeasurementVector& u) const;

    // Running max over sampled rank-r unit-Frobenius Z of |  ||A(Z)||_2^2 - 1 |.
    // A lower bound on the RIP constant delta_r.
    double estimate_rip(std::size_t r, std::size_t trials, std::uint64_t probe_seed) const;

private:
    SensingOperator() = default;

    void fill_row(std::size_t i, std::span<double> out) const;
    const double* row_ptr(std::size_t i, std::vector<double>& scratch) const;

    std::size_t n1_ = 0, n2_ = 0, m_ = 0;
    std::uint64_t seed_ = 0;
    Backend backend_ = Backend::Streamed;
    std::optional<DenseMatrix> rows_;                 // m x (n1*n2), materialized
    std::optional<std::vector<DenseMatrix>> forced_;  // forced test mode
};

} // namespace lrx
