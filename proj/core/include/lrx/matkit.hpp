#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lrx/errors.hpp"

namespace lrx {

// Dense row-major matrix of 64-bit floats. The universal numeric carrier;
// construction from external data validates shape and finiteness.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }
    double* row(std::size_t i) noexcept { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const noexcept { return data_.data() + i * cols_; }

    bool same_shape(const DenseMatrix& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    DenseMatrix& operator+=(const DenseMatrix& o);
    DenseMatrix& operator-=(const DenseMatrix& o);
    DenseMatrix& operator*=(double s);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double s, DenseMatrix a);

// U has orthonormal columns, S is non-negative and non-increasing,
// A ~ U diag(S) V^T.
struct CompactSVD {
    DenseMatrix U;
    std::vector<double> S;
    DenseMatrix V;
};

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);    // A B
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b); // A^T B
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b); // A B^T

// Trace inner product <A, B> = trace(A^T B).
double dot(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a);
double vector_norm(std::span<const double> v);

// A^T A, symmetrized.
DenseMatrix gram(const DenseMatrix& a);

// sigma_max(A) to 1e-10 relative accuracy. Power iteration on A^T A with a
// full-SVD fallback when the iteration hits its cap without converging.
double spectral_norm(const DenseMatrix& a);

// Exact full SVD (Golub-Kahan bidiagonalization + implicit-shift QR on the
// bidiagonal), truncated to the leading r triplets.
CompactSVD top_r_svd(const DenseMatrix& a, std::size_t r);
CompactSVD full_svd(const DenseMatrix& a);

// Solves X G = B for symmetric positive definite G via Cholesky. Guards
// against rank collapse: smallest eigenvalue must exceed 1e-14 * trace(G).
DenseMatrix solve_gram(const DenseMatrix& g, const DenseMatrix& b);

// Cholesky factor (lower) of a symmetric PD matrix; throws RankCollapseError
// on a non-positive pivot.
DenseMatrix cholesky(const DenseMatrix& g);

// Given U (n x r) with orthonormal columns, returns U_perp (n x (n-r)) with
// U_perp^T U_perp = I and U^T U_perp = 0.
DenseMatrix orthonormal_complement(const DenseMatrix& u);

// Thin Q factor of a Householder QR of a (rows >= cols), with the sign
// convention diag(R) >= 0 so the result is deterministic.
DenseMatrix qr_orthonormalize(const DenseMatrix& a);

} // namespace lrx
