#include "lrx/matkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lrx/rng.hpp"

namespace lrx {

namespace {

void require(bool cond, const char* what) {
    if (!cond) throw DimensionError(what);
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw DimensionError("DenseMatrix: data length does not match rows*cols");
    if (!all_finite(data_))
        throw DomainError("DenseMatrix: non-finite entry");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& o) {
    require(same_shape(o), "operator+=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& o) {
    require(same_shape(o), "operator-=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    DenseMatrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            const double* bp = b.row(p);
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.rows() == b.rows(), "matmul_tn: row counts differ");
    DenseMatrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        const double* bi = b.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double v = ai[p];
            if (v == 0.0) continue;
            double* cp = c.row(p);
            for (std::size_t j = 0; j < n; ++j) cp[j] += v * bi[j];
        }
    }
    return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.cols() == b.cols(), "matmul_nt: column counts differ");
    DenseMatrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += ai[p] * bj[p];
            c(i, j) = s;
        }
    }
    return c;
}

double dot(const DenseMatrix& a, const DenseMatrix& b) {
    require(a.same_shape(b), "dot: shape mismatch");
    double s = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) s += pa[i] * pb[i];
    return s;
}

double frobenius_norm(const DenseMatrix& a) { return vector_norm(a.flat()); }

double vector_norm(std::span<const double> v) {
    double scale = 0.0;
    for (double x : v) {
        const double a = std::fabs(x);
        if (std::isnan(a)) return a;
        if (a > scale) scale = a;
    }
    if (scale == 0.0) return 0.0;
    if (std::isinf(scale)) return scale;
    double s = 0.0;
    for (double x : v) {
        const double t = x / scale;
        s += t * t;
    }
    return scale * std::sqrt(s);
}

DenseMatrix gram(const DenseMatrix& a) {
    DenseMatrix g = matmul_tn(a, a);
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = i + 1; j < g.cols(); ++j) {
            const double v = 0.5 * (g(i, j) + g(j, i));
            g(i, j) = v;
            g(j, i) = v;
        }
    return g;
}

// ---------------------------------------------------------------------------
// Householder helpers
// ---------------------------------------------------------------------------

namespace {

// Reflection H = I - beta v v^T mapping x to -sign(x0)*||x|| e1.
// Returns beta; v is written in place over x. beta == 0 means "no reflection".
double make_householder(std::span<double> x) {
    const double norm = vector_norm(x);
    if (norm == 0.0) return 0.0;
    const double sign = (x[0] >= 0.0) ? 1.0 : -1.0;
    x[0] += sign * norm;
    double vnorm2 = 0.0;
    for (double v : x) vnorm2 += v * v;
    return 2.0 / vnorm2;
}

} // namespace

// ---------------------------------------------------------------------------
// Full SVD: Golub-Kahan bidiagonalization + implicit-shift QR on the bidiagonal
// ---------------------------------------------------------------------------

namespace {

struct GivensPair {
    double c, s;
};

// c*a + s*b = r, -s*a + c*b = 0.
GivensPair givens(double a, double b) {
    if (b == 0.0) return {1.0, 0.0};
    const double r = std::hypot(a, b);
    return {a / r, b / r};
}

// Combine columns p,q of m: col_p <- c*col_p + s*col_q ; col_q <- -s*col_p + c*col_q.
void colrot(DenseMatrix& m, std::size_t p, std::size_t q, double c, double s) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* r = m.row(i);
        const double a = r[p];
        const double b = r[q];
        r[p] = c * a + s * b;
        r[q] = -s * a + c * b;
    }
}

// SVD of an n x p matrix with n >= p.
CompactSVD svd_tall(const DenseMatrix& a) {
    const std::size_t n = a.rows();
    const std::size_t p = a.cols();
    DenseMatrix work = a;

    std::vector<std::vector<double>> lv(p), rv(p);
    std::vector<double> lbeta(p, 0.0), rbeta(p, 0.0);

    std::vector<double> d(p, 0.0), e(p > 0 ? p - 1 : 0, 0.0);

    for (std::size_t k = 0; k < p; ++k) {
        // Left reflection: zero column k below the diagonal.
        std::vector<double> v(n - k);
        for (std::size_t i = k; i < n; ++i) v[i - k] = work(i, k);
        lbeta[k] = make_householder(v);
        lv[k] = v;
        if (lbeta[k] != 0.0) {
            for (std::size_t j = k; j < p; ++j) {
                double w = 0.0;
                for (std::size_t i = k; i < n; ++i) w += v[i - k] * work(i, j);
                w *= lbeta[k];
                for (std::size_t i = k; i < n; ++i) work(i, j) -= w * v[i - k];
            }
        }
        d[k] = work(k, k);

        if (k + 1 < p) {
            if (k + 2 < p) {
                // Right reflection: zero row k beyond the superdiagonal.
                std::vector<double> w(p - k - 1);
                for (std::size_t j = k + 1; j < p; ++j) w[j - k - 1] = work(k, j);
                rbeta[k] = make_householder(w);
                rv[k] = w;
                if (rbeta[k] != 0.0) {
                    for (std::size_t i = k; i < n; ++i) {
                        double s = 0.0;
                        for (std::size_t j = k + 1; j < p; ++j) s += w[j - k - 1] * work(i, j);
                        s *= rbeta[k];
                        for (std::size_t j = k + 1; j < p; ++j) work(i, j) -= s * w[j - k - 1];
                    }
                }
            }
            e[k] = work(k, k + 1);
        }
    }

    // Backward accumulation of U (n x p) and V (p x p).
    DenseMatrix u(n, p);
    for (std::size_t j = 0; j < p; ++j) u(j, j) = 1.0;
    for (std::size_t k = p; k-- > 0;) {
        if (lbeta[k] == 0.0) continue;
        const std::vector<double>& v = lv[k];
        for (std::size_t j = 0; j < p; ++j) {
            double w = 0.0;
            for (std::size_t i = k; i < n; ++i) w += v[i - k] * u(i, j);
            w *= lbeta[k];
            for (std::size_t i = k; i < n; ++i) u(i, j) -= w * v[i - k];
        }
    }
    DenseMatrix vmat = DenseMatrix::identity(p);
    if (p >= 3) {
        for (std::size_t k = p - 2; k-- > 0;) {
            if (rbeta[k] == 0.0) continue;
            const std::vector<double>& w = rv[k];
            for (std::size_t j = 0; j < p; ++j) {
                double s = 0.0;
                for (std::size_t i = k + 1; i < p; ++i) s += w[i - k - 1] * vmat(i, j);
                s *= rbeta[k];
                for (std::size_t i = k + 1; i < p; ++i) vmat(i, j) -= s * w[i - k - 1];
            }
        }
    }

    // Implicit-shift QR on the bidiagonal (d, e).
    if (p >= 2) {
        const double eps = 1.0e-15;
        const std::size_t max_rot = 500 * p * p + 1000;
        std::size_t rot = 0;
        std::size_t kend = p - 1; // active block is [l .. kend]
        while (true) {
            // Deflate negligible superdiagonal entries.
            for (std::size_t i = 0; i + 1 < p; ++i) {
                const double thresh = eps * (std::fabs(d[i]) + std::fabs(d[i + 1]));
                if (std::fabs(e[i]) <= thresh || std::fabs(e[i]) < 1.0e-300) e[i] = 0.0;
            }
            // Find the trailing unreduced block.
            while (kend > 0 && e[kend - 1] == 0.0) --kend;
            if (kend == 0) break;
            std::size_t l = kend;
            while (l > 0 && e[l - 1] != 0.0) --l;

            if (++rot > max_rot)
                throw std::runtime_error("full_svd: bidiagonal QR failed to converge");

            // Split on a negligible diagonal inside the block.
            double bscale = 0.0;
            for (std::size_t i = l; i <= kend; ++i) bscale = std::max(bscale, std::fabs(d[i]));
            for (std::size_t i = l; i < kend; ++i) bscale = std::max(bscale, std::fabs(e[i]));

            bool handled = false;
            for (std::size_t i = l; i < kend; ++i) {
                if (std::fabs(d[i]) <= eps * bscale) {
                    // Zero row i: rotate it against rows i+1..kend to flush e[i].
                    d[i] = 0.0;
                    double bulge = e[i];
                    e[i] = 0.0;
                    for (std::size_t j = i + 1; j <= kend && bulge != 0.0; ++j) {
                        const GivensPair g = givens(d[j], bulge);
                        d[j] = g.c * d[j] + g.s * bulge;
                        if (j < kend) {
                            bulge = -g.s * e[j];
                            e[j] = g.c * e[j];
                        } else {
                            bulge = 0.0;
                        }
                        colrot(u, j, i, g.c, g.s);
                    }
                    handled = true;
                    break;
                }
            }
            if (handled) continue;
            if (std::fabs(d[kend]) <= eps * bscale) {
                // Zero trailing diagonal: flush e[kend-1] upward with column rotations.
                d[kend] = 0.0;
                double bulge = e[kend - 1];
                e[kend - 1] = 0.0;
                for (std::size_t j = kend; j-- > l;) {
                    const GivensPair g = givens(d[j], bulge);
                    d[j] = g.c * d[j] + g.s * bulge;
                    if (j > l) {
                        bulge = -g.s * e[j - 1];
                        e[j - 1] = g.c * e[j - 1];
                    }
                    colrot(vmat, j, kend, g.c, g.s);
                }
                continue;
            }

            // Wilkinson shift from the trailing 2x2 of B^T B.
            const double dm = d[kend - 1];
            const double dn = d[kend];
            const double em = (kend >= 2 && kend - 1 > l) ? e[kend - 2] : 0.0;
            const double en = e[kend - 1];
            const double t11 = dm * dm + em * em;
            const double t12 = dm * en;
            const double t22 = dn * dn + en * en;
            const double delta = 0.5 * (t11 - t22);
            double shift;
            if (delta == 0.0 && t12 == 0.0) {
                shift = t22;
            } else {
                const double denom = delta + std::copysign(std::hypot(delta, t12), delta);
                // (t12/denom) <= 1 in magnitude, so this form cannot overflow.
                shift = (denom == 0.0) ? t22 : t22 - (t12 / denom) * t12;
            }

            double y = d[l] * d[l] - shift;
            double z = d[l] * e[l];
            for (std::size_t i = l; i < kend; ++i) {
                GivensPair g = givens(y, z);
                if (i > l) e[i - 1] = g.c * y + g.s * z;
                // Right rotation on columns (i, i+1).
                const double di = d[i];
                const double ei = e[i];
                const double di1 = d[i + 1];
                d[i] = g.c * di + g.s * ei;
                e[i] = -g.s * di + g.c * ei;
                double bulge = g.s * di1;
                d[i + 1] = g.c * di1;
                colrot(vmat, i, i + 1, g.c, g.s);
                // Left rotation on rows (i, i+1) zeroing the bulge.
                g = givens(d[i], bulge);
                d[i] = g.c * d[i] + g.s * bulge;
                const double ei2 = e[i];
                const double di2 = d[i + 1];
                e[i] = g.c * ei2 + g.s * di2;
                d[i + 1] = -g.s * ei2 + g.c * di2;
                if (i + 1 < kend) {
                    y = e[i];
                    z = g.s * e[i + 1];
                    e[i + 1] = g.c * e[i + 1];
                }
                colrot(u, i, i + 1, g.c, g.s);
            }
        }
    }

    // Fix signs and sort non-increasing.
    for (std::size_t i = 0; i < p; ++i) {
        if (d[i] < 0.0) {
            d[i] = -d[i];
            for (std::size_t j = 0; j < p; ++j) vmat(j, i) = -vmat(j, i);
        }
    }
    for (std::size_t i = 0; i < p; ++i) {
        std::size_t best = i;
        for (std::size_t j = i + 1; j < p; ++j)
            if (d[j] > d[best]) best = j;
        if (best != i) {
            std::swap(d[i], d[best]);
            for (std::size_t rrow = 0; rrow < n; ++rrow) std::swap(u(rrow, i), u(rrow, best));
            for (std::size_t rrow = 0; rrow < p; ++rrow) std::swap(vmat(rrow, i), vmat(rrow, best));
        }
    }
    return {std::move(u), std::move(d), std::move(vmat)};
}

} // namespace

CompactSVD full_svd(const DenseMatrix& a) {
    if (a.rows() == 0 || a.cols() == 0)
        throw DimensionError("full_svd: empty matrix");
    double maxabs = 0.0;
    for (double x : a.flat()) {
        if (!std::isfinite(x)) throw DomainError("full_svd: non-finite entry");
        maxabs = std::max(maxabs, std::fabs(x));
    }
    // The implicit shift works with squared bidiagonal entries; rescale
    // extreme inputs into a safe range and restore the singular values after.
    const bool rescale = maxabs > 1.0e60 || (maxabs > 0.0 && maxabs < 1.0e-60);
    auto compute = [](const DenseMatrix& m) {
        if (m.rows() >= m.cols()) return svd_tall(m);
        CompactSVD s = svd_tall(transpose(m));
        std::swap(s.U, s.V);
        return s;
    };
    if (!rescale) return compute(a);
    DenseMatrix scaled = a;
    scaled *= 1.0 / maxabs;
    CompactSVD s = compute(scaled);
    for (double& sv : s.S) sv *= maxabs;
    return s;
}

CompactSVD top_r_svd(const DenseMatrix& a, std::size_t r) {
    if (r < 1 || r > std::min(a.rows(), a.cols()))
        throw DimensionError("top_r_svd: rank request exceeds matrix dimensions");
    CompactSVD s = full_svd(a);
    if (r == s.S.size()) return s;
    CompactSVD t;
    t.S.assign(s.S.begin(), s.S.begin() + static_cast<std::ptrdiff_t>(r));
    t.U = DenseMatrix(s.U.rows(), r);
    t.V = DenseMatrix(s.V.rows(), r);
    for (std::size_t i = 0; i < s.U.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) t.U(i, j) = s.U(i, j);
    for (std::size_t i = 0; i < s.V.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) t.V(i, j) = s.V(i, j);
    return t;
}

double spectral_norm(const DenseMatrix& a) {
    if (a.rows() == 0 || a.cols() == 0)
        throw ContractViolation("spectral_norm: empty matrix");
    bool zero = true;
    for (double x : a.flat()) {
        if (!std::isfinite(x)) throw DomainError("spectral_norm: non-finite entry");
        if (x != 0.0) zero = false;
    }
    if (zero) return 0.0;

    const std::size_t n = a.rows();
    const std::size_t p = a.cols();
    std::vector<double> x(p), y(n);
    rng::Stream start(0x5eedULL, 0x9du);
    for (double& v : x) v = start.next_gaussian();
    double xn = vector_norm(x);
    for (double& v : x) v /= xn;

    double lambda_prev = -1.0;
    std::size_t stagnant = 0;
    for (std::size_t it = 0; it < 5000; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* ai = a.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += ai[j] * x[j];
            y[i] = s;
        }
        const double yn = vector_norm(y);
        if (yn == 0.0) break; // start vector in the null space; fall back
        const double lambda = yn * yn;
        std::fill(x.begin(), x.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double yi = y[i];
            const double* ai = a.row(i);
            for (std::size_t j = 0; j < p; ++j) x[j] += ai[j] * yi;
        }
        xn = vector_norm(x);
        if (xn == 0.0) break;
        for (double& v : x) v /= xn;
        if (lambda_prev >= 0.0 && std::fabs(lambda - lambda_prev) <= 1.0e-14 * lambda) {
            if (++stagnant >= 2) return std::sqrt(lambda);
        } else {
            stagnant = 0;
        }
        lambda_prev = lambda;
    }
    return full_svd(a).S[0];
}

DenseMatrix cholesky(const DenseMatrix& g) {
    require(g.rows() == g.cols(), "cholesky: matrix not square");
    const std::size_t n = g.rows();
    DenseMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = g(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (diag <= 0.0 || !std::isfinite(diag))
            throw RankCollapseError("cholesky: non-positive pivot", diag);
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = g(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

namespace {

// Solve (L L^T) z = rhs in place.
void chol_solve_vec(const DenseMatrix& l, std::vector<double>& z) {
    const std::size_t n = l.rows();
    for (std::size_t i = 0; i < n; ++i) {
        double s = z[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * z[k];
        z[i] = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = z[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * z[k];
        z[i] = s / l(i, i);
    }
}

} // namespace

DenseMatrix solve_gram(const DenseMatrix& g, const DenseMatrix& b) {
    require(g.rows() == g.cols(), "solve_gram: G not square");
    require(b.cols() == g.rows(), "solve_gram: B column count != G order");
    const std::size_t r = g.rows();

    double maxabs = 0.0, asym = 0.0, trace = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        trace += g(i, i);
        for (std::size_t j = 0; j < r; ++j) {
            maxabs = std::max(maxabs, std::fabs(g(i, j)));
            asym = std::max(asym, std::fabs(g(i, j) - g(j, i)));
        }
    }
    if (asym > 1.0e-12 * std::max(1.0, maxabs))
        throw ContractViolation("solve_gram: G not symmetric within 1e-12");

    const double sigma_min = full_svd(g).S.back();
    if (!(sigma_min > 1.0e-14 * trace))
        throw RankCollapseError("solve_gram: Gram matrix near singular", sigma_min);

    DenseMatrix sym(r, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) sym(i, j) = 0.5 * (g(i, j) + g(j, i));
    const DenseMatrix l = cholesky(sym);

    DenseMatrix x(b.rows(), r);
    std::vector<double> z(r);
    for (std::size_t i = 0; i < b.rows(); ++i) {
        for (std::size_t j = 0; j < r; ++j) z[j] = b(i, j);
        chol_solve_vec(l, z);
        for (std::size_t j = 0; j < r; ++j) x(i, j) = z[j];
    }
    // One step of iterative refinement on the residual B - X G.
    for (std::size_t i = 0; i < b.rows(); ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            double s = b(i, j);
            for (std::size_t k = 0; k < r; ++k) s -= x(i, k) * g(k, j);
            z[j] = s;
        }
        chol_solve_vec(l, z);
        for (std::size_t j = 0; j < r; ++j) x(i, j) += z[j];
    }
    return x;
}

namespace {

// Householder QR of a (n >= r). Writes the Householder vectors and the signs of
// diag(R); optionally accumulates the full Q (n x n) or the thin Q (n x r).
struct QrFactors {
    std::vector<std::vector<double>> vs;
    std::vector<double> betas;
    std::vector<double> rdiag;
};

QrFactors householder_qr(DenseMatrix& work) {
    const std::size_t n = work.rows();
    const std::size_t r = work.cols();
    QrFactors f;
    f.vs.resize(r);
    f.betas.assign(r, 0.0);
    f.rdiag.assign(r, 0.0);
    for (std::size_t k = 0; k < r; ++k) {
        std::vector<double> v(n - k);
        for (std::size_t i = k; i < n; ++i) v[i - k] = work(i, k);
        f.betas[k] = make_householder(v);
        f.vs[k] = v;
        if (f.betas[k] != 0.0) {
            for (std::size_t j = k; j < r; ++j) {
                double w = 0.0;
                for (std::size_t i = k; i < n; ++i) w += v[i - k] * work(i, j);
                w *= f.betas[k];
                for (std::size_t i = k; i < n; ++i) work(i, j) -= w * v[i - k];
            }
        }
        f.rdiag[k] = work(k, k);
    }
    return f;
}

DenseMatrix accumulate_q(const QrFactors& f, std::size_t n, std::size_t qcols) {
    DenseMatrix q(n, qcols);
    for (std::size_t j = 0; j < std::min(n, qcols); ++j) q(j, j) = 1.0;
    for (std::size_t k = f.vs.size(); k-- > 0;) {
        if (f.betas[k] == 0.0) continue;
        const std::vector<double>& v = f.vs[k];
        for (std::size_t j = 0; j < qcols; ++j) {
            double w = 0.0;
            for (std::size_t i = k; i < n; ++i) w += v[i - k] * q(i, j);
            w *= f.betas[k];
            for (std::size_t i = k; i < n; ++i) q(i, j) -= w * v[i - k];
        }
    }
    return q;
}

} // namespace

DenseMatrix qr_orthonormalize(const DenseMatrix& a) {
    require(a.rows() >= a.cols() && a.cols() > 0, "qr_orthonormalize: need rows >= cols > 0");
    DenseMatrix work = a;
    const QrFactors f = householder_qr(work);
    DenseMatrix q = accumulate_q(f, a.rows(), a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j) {
        if (f.rdiag[j] < 0.0)
            for (std::size_t i = 0; i < a.rows(); ++i) q(i, j) = -q(i, j);
    }
    return q;
}

DenseMatrix orthonormal_complement(const DenseMatrix& u) {
    const std::size_t n = u.rows();
    const std::size_t r = u.cols();
    require(n >= r && r > 0, "orthonormal_complement: need rows >= cols > 0");

    double err = 0.0;
    const DenseMatrix utu = matmul_tn(u, u);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            const double target = (i == j) ? 1.0 : 0.0;
            err += (utu(i, j) - target) * (utu(i, j) - target);
        }
    if (std::sqrt(err) > 1.0e-10)
        throw ContractViolation("orthonormal_complement: input columns not orthonormal");

    if (n == r) return DenseMatrix(n, 0);

    DenseMatrix work = u;
    const QrFactors f = householder_qr(work);
    const DenseMatrix q = accumulate_q(f, n, n);
    DenseMatrix comp(n, n - r);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = r; j < n; ++j) comp(i, j - r) = q(i, j);
    return comp;
}

} // namespace lrx
