#include "lrx/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "lrx/rng.hpp"

namespace lrx {

namespace {

constexpr std::uint64_t kLabelVstar = 0x01;
constexpr std::uint64_t kLabelWstar = 0x02;
constexpr std::uint64_t kLabelSigma = 0x03;

DenseMatrix scale_columns(const DenseMatrix& a, const std::vector<double>& s) {
    DenseMatrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= s[j];
    return out;
}

GroundTruth finish_ground_truth(GroundTruth gt) {
    std::vector<double> sqrt_sigma(gt.r);
    for (std::size_t i = 0; i < gt.r; ++i) sqrt_sigma[i] = std::sqrt(gt.Sigma[i]);
    gt.Lstar = scale_columns(gt.Vstar, sqrt_sigma);
    gt.Rstar = scale_columns(gt.Wstar, sqrt_sigma);
    gt.Xstar = matmul_nt(scale_columns(gt.Vstar, gt.Sigma), gt.Wstar);
    return gt;
}

} // namespace

GroundTruth generate_ground_truth(std::size_t n1, std::size_t n2, std::size_t r, double kappa,
                                  std::uint64_t seed) {
    if (r < 1 || r > std::min(n1, n2))
        throw DomainError("generate_ground_truth: rank out of range");
    if (!(kappa >= 1.0))
        throw DomainError("generate_ground_truth: kappa must be >= 1");

    GroundTruth gt;
    gt.n1 = n1;
    gt.n2 = n2;
    gt.r = r;
    gt.seed = seed;

    DenseMatrix gv(n1, r), gw(n2, r);
    rng::Stream sv(seed, kLabelVstar), sw(seed, kLabelWstar), ss(seed, kLabelSigma);
    for (double& x : gv.flat()) x = sv.next_gaussian();
    for (double& x : gw.flat()) x = sw.next_gaussian();
    gt.Vstar = qr_orthonormalize(gv);
    gt.Wstar = qr_orthonormalize(gw);

    // Endpoints forced to 1 and 1/kappa so the condition number is exact; the
    // r-2 interior values are uniform on [1/kappa, 1].
    gt.Sigma.resize(r);
    if (r == 1) {
        gt.Sigma[0] = 1.0;
        gt.kappa = 1.0;
    } else {
        gt.Sigma[0] = 1.0;
        gt.Sigma[r - 1] = 1.0 / kappa;
        for (std::size_t i = 1; i + 1 < r; ++i)
            gt.Sigma[i] = 1.0 / kappa + (1.0 - 1.0 / kappa) * ss.next_uniform();
        std::sort(gt.Sigma.begin(), gt.Sigma.end(), std::greater<double>());
        gt.kappa = kappa;
    }
    return finish_ground_truth(std::move(gt));
}

GroundTruth ground_truth_from_svd(const DenseMatrix& vstar, std::vector<double> sigma,
                                  const DenseMatrix& wstar) {
    if (vstar.cols() != sigma.size() || wstar.cols() != sigma.size())
        throw DimensionError("ground_truth_from_svd: rank mismatch");
    if (sigma.empty() || sigma.back() <= 0.0)
        throw DomainError("ground_truth_from_svd: spectrum must be positive");
    for (std::size_t i = 0; i + 1 < sigma.size(); ++i)
        if (sigma[i] < sigma[i + 1])
            throw DomainError("ground_truth_from_svd: spectrum must be non-increasing");
    GroundTruth gt;
    gt.n1 = vstar.rows();
    gt.n2 = wstar.rows();
    gt.r = sigma.size();
    gt.kappa = sigma.front() / sigma.back();
    gt.seed = 0;
    gt.Vstar = vstar;
    gt.Wstar = wstar;
    gt.Sigma = std::move(sigma);
    return finish_ground_truth(std::move(gt));
}

namespace {

constexpr char kBlobMagic[8] = {'L', 'R', 'X', 'G', 'T', '0', '1', '\n'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace

void write_ground_truth(std::ostream& os, const GroundTruth& gt) {
    os.write(kBlobMagic, sizeof(kBlobMagic));
    put<std::uint64_t>(os, gt.n1);
    put<std::uint64_t>(os, gt.n2);
    put<std::uint64_t>(os, gt.r);
    put<double>(os, gt.kappa);
    put<std::uint64_t>(os, gt.seed);
}

GroundTruth read_ground_truth(std::istream& is) {
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0)
        throw ConfigError("ground_truth", "bad blob magic");
    const auto n1 = get<std::uint64_t>(is);
    const auto n2 = get<std::uint64_t>(is);
    const auto r = get<std::uint64_t>(is);
    const auto kappa = get<double>(is);
    const auto seed = get<std::uint64_t>(is);
    if (!is) throw ConfigError("ground_truth", "truncated blob");
    return generate_ground_truth(n1, n2, r, kappa, seed);
}

DenseMatrix assemble(const FactorPair& p) {
    if (p.L.cols() != p.R.cols())
        throw DimensionError("assemble: factor ranks differ");
    return matmul_nt(p.L, p.R);
}

double dist_upper_bound(double fro_err) {
    return std::sqrt(std::sqrt(2.0) + 1.0) * fro_err;
}

namespace {

// Machinery for minimizing
//   f(Q) = ||(L Q - L*) S^{1/2}||_F^2 + ||(R Q^{-T} - R*) S^{1/2}||_F^2
// over invertible Q. Column-major vec() throughout.

struct SmallLU {
    // Gauss-Jordan inverse of an r x r matrix; throws on singularity.
    static DenseMatrix inverse(const DenseMatrix& a, double* min_pivot = nullptr) {
        const std::size_t n = a.rows();
        DenseMatrix m = a;
        DenseMatrix inv = DenseMatrix::identity(n);
        double smallest = std::numeric_limits<double>::infinity();
        for (std::size_t col = 0; col < n; ++col) {
            std::size_t piv = col;
            for (std::size_t i = col + 1; i < n; ++i)
                if (std::fabs(m(i, col)) > std::fabs(m(piv, col))) piv = i;
            if (piv != col)
                for (std::size_t j = 0; j < n; ++j) {
                    std::swap(m(col, j), m(piv, j));
                    std::swap(inv(col, j), inv(piv, j));
                }
            const double p = m(col, col);
            smallest = std::min(smallest, std::fabs(p));
            if (p == 0.0) throw RankCollapseError("matrix inverse: zero pivot", 0.0);
            const double ip = 1.0 / p;
            for (std::size_t j = 0; j < n; ++j) {
                m(col, j) *= ip;
                inv(col, j) *= ip;
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (i == col) continue;
                const double f = m(i, col);
                if (f == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) {
                    m(i, j) -= f * m(col, j);
                    inv(i, j) -= f * inv(col, j);
                }
            }
        }
        if (min_pivot) *min_pivot = smallest;
        return inv;
    }
};

double objective(const DenseMatrix& l, const DenseMatrix& r, const GroundTruth& gt,
                 const DenseMatrix& q, const DenseMatrix& qinv) {
    const std::size_t rank = gt.r;
    const DenseMatrix lq = matmul(l, q);
    const DenseMatrix rp = matmul_nt(r, qinv); // R Q^{-T}
    double f = 0.0;
    for (std::size_t i = 0; i < l.rows(); ++i)
        for (std::size_t j = 0; j < rank; ++j) {
            const double d = lq(i, j) - gt.Lstar(i, j);
            f += d * d * gt.Sigma[j];
        }
    for (std::size_t i = 0; i < r.rows(); ++i)
        for (std::size_t j = 0; j < rank; ++j) {
            const double d = rp(i, j) - gt.Rstar(i, j);
            f += d * d * gt.Sigma[j];
        }
    return f;
}

// grad f = 2 L^T (LQ - L*) S  -  2 P S (R Q^{-T} - R*)^T R P,  P = Q^{-T}.
DenseMatrix gradient(const DenseMatrix& l, const DenseMatrix& r, const GroundTruth& gt,
                     const DenseMatrix& q, const DenseMatrix& qinv) {
    const std::size_t rank = gt.r;
    const DenseMatrix p = transpose(qinv);
    const DenseMatrix lq = matmul(l, q);
    DenseMatrix dl = lq;
    dl -= gt.Lstar;
    DenseMatrix term1 = matmul_tn(l, dl); // L^T (LQ-L*)
    for (std::size_t i = 0; i < rank; ++i)
        for (std::size_t j = 0; j < rank; ++j) term1(i, j) *= 2.0 * gt.Sigma[j];

    DenseMatrix n = matmul(r, p);
    n -= gt.Rstar; // R Q^{-T} - R*
    DenseMatrix ns = n;
    for (std::size_t i = 0; i < ns.rows(); ++i)
        for (std::size_t j = 0; j < rank; ++j) ns(i, j) *= gt.Sigma[j];
    const DenseMatrix nr = matmul_tn(ns, matmul(r, p)); // S N^T R P is (P S N^T R P) without leading P
    DenseMatrix term2 = matmul(p, nr);
    term2 *= 2.0;
    return term1 - term2;
}

std::size_t vec_index(std::size_t i, std::size_t j, std::size_t rank) { return j * rank + i; }

} // namespace

DistResult dist(const FactorPair& p, const GroundTruth& gt) {
    if (p.L.cols() != gt.r || p.R.cols() != gt.r || p.L.rows() != gt.n1 || p.R.rows() != gt.n2)
        throw DimensionError("dist: factor shapes do not match ground truth");

    const std::size_t rank = gt.r;
    const double fro_err = frobenius_norm(assemble(p) - gt.Xstar);
    const double ub = dist_upper_bound(fro_err);

    try {
        // Least-squares alignment Q0 = (L^T L)^{-1} L^T L*.
        const DenseMatrix ltl = gram(p.L);
        DenseMatrix q = solve_gram(ltl, transpose(matmul_tn(p.L, gt.Lstar)));
        q = transpose(q); // solve_gram solves X G = B with B rows; reorient to Q

        const double scale = std::max(1.0, gt.sigma_max() * gt.sigma_max());
        const double gtol = 1.0e-10 * scale;

        DenseMatrix qinv = SmallLU::inverse(q);
        double f = objective(p.L, p.R, gt, q, qinv);
        bool converged = false;
        double lambda = 0.0;

        for (std::size_t it = 0; it < 200; ++it) {
            const DenseMatrix g = gradient(p.L, p.R, gt, q, qinv);
            if (frobenius_norm(g) <= gtol) {
                converged = true;
                break;
            }
            const double qscale = std::max(1.0, frobenius_norm(q));
            // Gauss-Newton model: H = S (x) L^T L + (P^T R^T R P) (x) (P S P^T),
            // column-major Kronecker blocks of size rank^2, with
            // Levenberg-Marquardt damping on the diagonal.
            const DenseMatrix pm = transpose(qinv);
            const DenseMatrix ltl_ = gram(p.L);
            const DenseMatrix rp = matmul(p.R, pm);
            const DenseMatrix rtr_p = gram(rp);           // P^T R^T R P
            DenseMatrix psp(rank, rank);                  // P S P^T
            for (std::size_t i = 0; i < rank; ++i)
                for (std::size_t j = 0; j < rank; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < rank; ++k)
                        s += pm(i, k) * gt.Sigma[k] * pm(j, k);
                    psp(i, j) = s;
                }
            const std::size_t dim = rank * rank;
            DenseMatrix h(dim, dim);
            double tr = 0.0;
            for (std::size_t jq = 0; jq < rank; ++jq)
                for (std::size_t iq = 0; iq < rank; ++iq) {
                    const std::size_t row = vec_index(iq, jq, rank);
                    for (std::size_t jp = 0; jp < rank; ++jp)
                        for (std::size_t ip = 0; ip < rank; ++ip) {
                            const std::size_t col = vec_index(ip, jp, rank);
                            double v = (jq == jp ? gt.Sigma[jq] : 0.0) * ltl_(iq, ip);
                            v += rtr_p(jq, jp) * psp(iq, ip);
                            h(row, col) = v;
                        }
                    tr += h(row, row);
                }
            const double diag_scale = tr / static_cast<double>(dim);

            DenseMatrix rhs(1, dim);
            for (std::size_t jq = 0; jq < rank; ++jq)
                for (std::size_t iq = 0; iq < rank; ++iq)
                    rhs(0, vec_index(iq, jq, rank)) = -0.5 * g(iq, jq);

            bool accepted = false;
            double first_step_norm = std::numeric_limits<double>::infinity();
            for (std::size_t attempt = 0; attempt < 40 && !accepted; ++attempt) {
                DenseMatrix hd = h;
                const double damp = std::max(lambda, 1.0e-14) * diag_scale;
                for (std::size_t i = 0; i < dim; ++i) hd(i, i) += damp;
                DenseMatrix step(rank, rank);
                try {
                    const DenseMatrix sol = solve_gram(hd, rhs);
                    for (std::size_t jq = 0; jq < rank; ++jq)
                        for (std::size_t iq = 0; iq < rank; ++iq)
                            step(iq, jq) = sol(0, vec_index(iq, jq, rank));
                    const double step_norm = frobenius_norm(step);
                    if (attempt == 0) first_step_norm = step_norm;
                    if (step_norm <= 1.0e-12 * qscale) {
                        // Q resolved to full precision; the value error is
                        // second order in the step.
                        accepted = true;
                        converged = true;
                        break;
                    }
                    DenseMatrix qn = q + step;
                    DenseMatrix qninv = SmallLU::inverse(qn);
                    const double fn = objective(p.L, p.R, gt, qn, qninv);
                    if (fn < f) {
                        const double improvement = f - fn;
                        q = std::move(qn);
                        qinv = std::move(qninv);
                        f = fn;
                        accepted = true;
                        lambda = lambda > 1.0e-10 ? lambda * 0.25 : 0.0;
                        if (improvement <= 4.0 * std::numeric_limits<double>::epsilon() * f &&
                            step_norm <= 1.0e-6 * qscale)
                            converged = true;
                        break;
                    }
                } catch (const RankCollapseError&) {
                    // damped system or trial Q singular; escalate
                }
                lambda = lambda == 0.0 ? 1.0e-6 : lambda * 10.0;
            }
            if (converged) break;
            if (!accepted) {
                // No further descent: the objective sits at its rounding
                // floor. Accept if the undamped correction was already
                // negligible at second order.
                converged = first_step_norm <= 1.0e-6 * qscale;
                break;
            }
        }

        const double sigma_min_q = full_svd(q).S.back();
        if (!converged || sigma_min_q < 1.0e-10)
            return {ub, DistStatus::FellBackToUpperBound};
        const double val = std::sqrt(std::max(0.0, f));
        if (val > ub)
            return {ub, DistStatus::FellBackToUpperBound};
        return {val, DistStatus::Converged};
    } catch (const RankCollapseError&) {
        return {ub, DistStatus::FellBackToUpperBound};
    }
}

ErrorReport error_report(const FactorPair& p, const GroundTruth& gt) {
    ErrorReport rep;
    const DenseMatrix diff = assemble(p) - gt.Xstar;
    rep.fro_rel = frobenius_norm(diff) / frobenius_norm(gt.Xstar);
    rep.spec_abs = spectral_norm(diff);
    const DistResult d = dist(p, gt);
    rep.dist_val = d.value;
    rep.dist_status = d.status;
    return rep;
}

} // namespace lrx
