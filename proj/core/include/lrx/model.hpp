#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lrx/matkit.hpp"

namespace lrx {

// Rank-r ground truth X* = V* diag(Sigma) W*^T with exact condition number:
// the extreme singular values are forced to 1 and 1/kappa.
struct GroundTruth {
    std::size_t n1 = 0, n2 = 0, r = 0;
    double kappa = 1.0;
    std::uint64_t seed = 0;
    DenseMatrix Xstar;
    DenseMatrix Vstar;
    DenseMatrix Wstar;
    std::vector<double> Sigma;
    DenseMatrix Lstar; // V* Sigma^{1/2}
    DenseMatrix Rstar; // W* Sigma^{1/2}

    double sigma_min() const noexcept { return Sigma.back(); }
    double sigma_max() const noexcept { return Sigma.front(); }
};

GroundTruth generate_ground_truth(std::size_t n1, std::size_t n2, std::size_t r, double kappa,
                                  std::uint64_t seed);

// Assembles a GroundTruth from explicit factors (orthonormal V, W and a
// non-increasing positive spectrum). Mainly for tests with special structure.
GroundTruth ground_truth_from_svd(const DenseMatrix& vstar, std::vector<double> sigma,
                                  const DenseMatrix& wstar);

// Binary header blob {n1, n2, r, kappa, seed}; the payload is regenerated
// from the seed on load.
void write_ground_truth(std::ostream& os, const GroundTruth& gt);
GroundTruth read_ground_truth(std::istream& is);

struct FactorPair {
    DenseMatrix L;
    DenseMatrix R;

    std::size_t rank() const noexcept { return L.cols(); }
};

DenseMatrix assemble(const FactorPair& p);

enum class DistStatus { Converged, FellBackToUpperBound };

struct DistResult {
    double value = 0.0;
    DistStatus status = DistStatus::Converged;
};

// The GL(r)-infimum metric
//   dist^2 = inf_Q ||(L Q - L*) Sigma*^{1/2}||_F^2 + ||(R Q^{-T} - R*) Sigma*^{1/2}||_F^2,
// minimized by Gauss-Newton from the least-squares alignment Q0. On
// non-convergence or degeneracy of Q the upper bound
// sqrt(sqrt(2)+1) ||X_t - X*||_F is reported instead.
DistResult dist(const FactorPair& p, const GroundTruth& gt);

struct ErrorReport {
    double fro_rel = 0.0;
    double spec_abs = 0.0;
    double dist_val = 0.0;
    DistStatus dist_status = DistStatus::Converged;
};

ErrorReport error_report(const FactorPair& p, const GroundTruth& gt);

// Upper bound sqrt(sqrt(2)+1) ||X_t - X*||_F on dist (valid for rank-r pairs).
double dist_upper_bound(double fro_err);

} // namespace lrx
