#include "lrx/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lrx/rng.hpp"

namespace lrx {

std::string format_operator_header(const OperatorHeader& h) {
    std::ostringstream os;
    os << "n1=" << h.n1 << "\n"
       << "n2=" << h.n2 << "\n"
       << "m=" << h.m << "\n"
       << "seed=" << h.seed << "\n"
       << "backend=" << (h.backend == Backend::Materialized ? "materialized" : "streamed")
       << "\n";
    return os.str();
}

OperatorHeader parse_operator_header(const std::string& text) {
    OperatorHeader h;
    std::istringstream is(text);
    std::string line;
    bool seen[5] = {false, false, false, false, false};
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("operator_header", "malformed line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "n1") { h.n1 = std::stoull(val); seen[0] = true; }
        else if (key == "n2") { h.n2 = std::stoull(val); seen[1] = true; }
        else if (key == "m") { h.m = std::stoull(val); seen[2] = true; }
        else if (key == "seed") { h.seed = std::stoull(val); seen[3] = true; }
        else if (key == "backend") {
            if (val == "materialized") h.backend = Backend::Materialized;
            else if (val == "streamed") h.backend = Backend::Streamed;
            else throw ConfigError("backend", "unknown backend: " + val);
            seen[4] = true;
        } else {
            throw ConfigError(key, "unknown operator header field");
        }
    }
    for (bool s : seen)
        if (!s) throw ConfigError("operator_header", "missing field");
    return h;
}

VirtualDirection VirtualDirection::normalized(std::vector<double> w, std::vector<double> v) {
    const double wn = vector_norm(w);
    const double vn = vector_norm(v);
    if (wn == 0.0 || vn == 0.0)
        throw DomainError("VirtualDirection: zero direction vector");
    for (double& x : w) x /= wn;
    for (double& x : v) x /= vn;
    return {std::move(w), std::move(v)};
}

SensingOperator SensingOperator::gaussian(std::size_t n1, std::size_t n2, std::size_t m,
                                          std::uint64_t seed, std::optional<Backend> backend,
                                          std::size_t materialize_budget) {
    if (n1 == 0 || n2 == 0 || m == 0)
        throw DomainError("SensingOperator: dimensions must be positive");
    SensingOperator op;
    op.n1_ = n1;
    op.n2_ = n2;
    op.m_ = m;
    op.seed_ = seed;
    if (backend.has_value()) {
        op.backend_ = *backend;
    } else {
        const std::size_t bytes = m * n1 * n2 * sizeof(double);
        op.backend_ = bytes <= materialize_budget ? Backend::Materialized : Backend::Streamed;
    }
    if (op.backend_ == Backend::Materialized) {
        DenseMatrix rows(m, n1 * n2);
        for (std::size_t i = 0; i < m; ++i) op.fill_row(i, {rows.row(i), n1 * n2});
        op.rows_ = std::move(rows);
    }
    return op;
}

SensingOperator SensingOperator::forced(std::size_t n1, std::size_t n2,
                                        std::vector<DenseMatrix> mats) {
    if (mats.empty()) throw DomainError("SensingOperator::forced: need at least one matrix");
    for (const DenseMatrix& a : mats)
        if (a.rows() != n1 || a.cols() != n2)
            throw DimensionError("SensingOperator::forced: matrix shape mismatch");
    SensingOperator op;
    op.n1_ = n1;
    op.n2_ = n2;
    op.m_ = mats.size();
    op.backend_ = Backend::Materialized;
    op.forced_ = std::move(mats);
    return op;
}

SensingOperator SensingOperator::forced_identity_basis(std::size_t n1, std::size_t n2) {
    const std::size_t m = n1 * n2;
    const double scale = std::sqrt(static_cast<double>(m));
    std::vector<DenseMatrix> mats;
    mats.reserve(m);
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j) {
            DenseMatrix e(n1, n2);
            e(i, j) = scale;
            mats.push_back(std::move(e));
        }
    return forced(n1, n2, std::move(mats));
}

void SensingOperator::fill_row(std::size_t i, std::span<double> out) const {
    std::size_t k = 0;
    for (std::size_t r = 0; r < n1_; ++r)
        for (std::size_t c = 0; c < n2_; ++c) out[k++] = rng::gaussian(seed_, i, r, c);
}

const double* SensingOperator::row_ptr(std::size_t i, std::vector<double>& scratch) const {
    if (forced_) return (*forced_)[i].data();
    if (rows_) return rows_->row(i);
    scratch.resize(n1_ * n2_);
    fill_row(i, scratch);
    return scratch.data();
}

MeasurementVector SensingOperator::apply(const DenseMatrix& x) const {
    if (x.rows() != n1_ || x.cols() != n2_)
        throw DimensionError("SensingOperator::apply: input shape mismatch");
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m_));
    const double* xp = x.data();
    const std::size_t len = n1_ * n2_;
    MeasurementVector out;
    out.values.resize(m_);
    std::vector<double> scratch;
    for (std::size_t i = 0; i < m_; ++i) {
        const double* row = row_ptr(i, scratch);
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) s += row[k] * xp[k];
        out.values[i] = s * inv_sqrt_m;
    }
    return out;
}

DenseMatrix SensingOperator::adjoint(const MeasurementVector& u) const {
    if (u.size() != m_)
        throw DimensionError("SensingOperator::adjoint: measurement length mismatch");
    const double inv_sqrt_m = 1.0 / std::sqrt(static_cast<double>(m_));
    DenseMatrix out(n1_, n2_);
    double* op = out.data();
    const std::size_t len = n1_ * n2_;
    std::vector<double> scratch;
    for (std::size_t i = 0; i < m_; ++i) {
        const double ui = u[i];
        if (ui == 0.0) continue;
        const double* row = row_ptr(i, scratch);
        for (std::size_t k = 0; k < len; ++k) op[k] += ui * row[k];
    }
    for (std::size_t k = 0; k < len; ++k) op[k] *= inv_sqrt_m;
    return out;
}

DenseMatrix SensingOperator::measurement_matrix(std::size_t i) const {
    if (i >= m_) throw DimensionError("measurement_matrix: index out of range");
    if (forced_) return (*forced_)[i];
    DenseMatrix a(n1_, n2_);
    fill_row(i, a.flat());
    return a;
}

namespace {

void check_direction(const VirtualDirection& d, std::size_t n1, std::size_t n2) {
    if (d.w.size() != n1 || d.v.size() != n2)
        throw DimensionError("VirtualDirection: length mismatch with operator");
    if (std::fabs(vector_norm(d.w) - 1.0) > 1.0e-12 || std::fabs(vector_norm(d.v) - 1.0) > 1.0e-12)
        throw ContractViolation("VirtualDirection: vectors must be unit norm");
}

DenseMatrix outer(const std::vector<double>& w, const std::vector<double>& v) {
    DenseMatrix m(w.size(), v.size());
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = w[i] * v[j];
    return m;
}

} // namespace

DenseMatrix SensingOperator::project_perp(const VirtualDirection& d, std::size_t i) const {
    check_direction(d, n1_, n2_);
    DenseMatrix a = measurement_matrix(i);
    const DenseMatrix wv = outer(d.w, d.v);
    const double coeff = dot(a, wv);
    for (std::size_t k = 0; k < a.size(); ++k) a.data()[k] -= coeff * wv.data()[k];
    return a;
}

MeasurementVector SensingOperator::apply_virtual(const VirtualDirection& d,
                                                 const DenseMatrix& x) const {
    check_direction(d, n1_, n2_);
    if (x.rows() != n1_ || x.cols() != n2_)
        throw DimensionError("apply_virtual: input shape mismatch");
    const DenseMatrix wv = outer(d.w, d.v);
    const double xc = dot(wv, x);
    // <P(A_i), X> = <A_i, X> - <A_i, wv^T><wv^T, X>, so the projected
    // measurements follow from two plain applications.
    const MeasurementVector ax = apply(x);
    const MeasurementVector awv = apply(wv);
    MeasurementVector out;
    out.values.resize(m_ + 1);
    for (std::size_t i = 0; i < m_; ++i) out.values[i] = ax[i] - awv[i] * xc;
    out.values[m_] = xc;
    return out;
}

DenseMatrix SensingOperator::adjoint_virtual(const VirtualDirection& d,
                                             const MeasurementVector& u) const {
    check_direction(d, n1_, n2_);
    if (u.size() != m_ + 1)
        throw DimensionError("adjoint_virtual: expected m+1 coordinates");
    MeasurementVector head;
    head.values.assign(u.values.begin(), u.values.begin() + static_cast<std::ptrdiff_t>(m_));
    DenseMatrix out = adjoint(head);
    const DenseMatrix wv = outer(d.w, d.v);
    // (1/sqrt(m)) sum u_i P(A_i) = A*(u_head) - <A(wv), u_head> wv^T.
    const MeasurementVector awv = apply(wv);
    double proj = 0.0;
    for (std::size_t i = 0; i < m_; ++i) proj += awv[i] * u[i];
    const double last = u[m_];
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data()[k] += (last - proj) * wv.data()[k];
    return out;
}

double SensingOperator::estimate_rip(std::size_t r, std::size_t trials,
                                     std::uint64_t probe_seed) const {
    if (trials < 1) throw DomainError("estimate_rip: trials must be >= 1");
    if (r < 1 || r > std::min(n1_, n2_))
        throw DomainError("estimate_rip: rank out of range");
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::uint64_t ts = rng::derive(probe_seed, {{"rip_trial", t}});
        DenseMatrix gu(n1_, r), gv(n2_, r);
        rng::Stream su(ts, 0x11u), sv(ts, 0x12u), ss(ts, 0x13u);
        for (double& x : gu.flat()) x = su.next_gaussian();
        for (double& x : gv.flat()) x = sv.next_gaussian();
        const DenseMatrix qu = qr_orthonormalize(gu);
        const DenseMatrix qv = qr_orthonormalize(gv);
        // Singular values uniform on the simplex, then normalized to unit
        // Frobenius norm.
        std::vector<double> s(r);
        double sum = 0.0;
        for (double& x : s) {
            x = -std::log(ss.next_uniform());
            sum += x;
        }
        double norm2 = 0.0;
        for (double& x : s) {
            x /= sum;
            norm2 += x * x;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        DenseMatrix z(n1_, n2_);
        for (std::size_t i = 0; i < n1_; ++i)
            for (std::size_t j = 0; j < n2_; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < r; ++k) acc += qu(i, k) * s[k] * inv * qv(j, k);
                z(i, j) = acc;
            }
        const MeasurementVector az = apply(z);
        const double nrm = vector_norm(az.values);
        worst = std::max(worst, std::fabs(nrm * nrm - 1.0));
    }
    return worst;
}

} // namespace lrx
