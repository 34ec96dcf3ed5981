#include "lrx/solvers.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "lrx/io.hpp"

namespace lrx {

std::string method_name(Method m) {
    switch (m) {
        case Method::ScaledGD: return "scaledgd";
        case Method::VanillaGD: return "gd";
        case Method::RGD: return "rgd";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    if (name == "scaledgd") return Method::ScaledGD;
    if (name == "gd" || name == "vanillagd") return Method::VanillaGD;
    if (name == "rgd") return Method::RGD;
    throw ConfigError("method", "unknown method: " + name);
}

std::vector<std::string> step_cost_classes(Method m) {
    switch (m) {
        case Method::ScaledGD: return {"O(n^2 r)", "O(r^3)"};
        case Method::VanillaGD: return {"O(n^2 r)"};
        case Method::RGD: return {"O(n^2 r)", "O(n r^2)", "O(r^3)"};
    }
    return {};
}

namespace {

DenseMatrix scale_columns_sqrt(const DenseMatrix& a, const std::vector<double>& s) {
    DenseMatrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= std::sqrt(s[j]);
    return out;
}

} // namespace

InitReport spectral_init(const SensingOperator& op, const MeasurementVector& y, std::size_t r,
                         const GroundTruth* truth) {
    if (r < 1 || r > std::min(op.n1(), op.n2()))
        throw DimensionError("spectral_init: rank out of range");
    const DenseMatrix m0 = op.adjoint(y);
    const CompactSVD svd = top_r_svd(m0, r);
    if (!(svd.S[r - 1] > 0.0) || svd.S[r - 1] <= 1.0e-14 * svd.S[0])
        throw DegenerateInitError("spectral_init: leading-r spectrum is rank deficient");

    InitReport rep;
    rep.pair.L = scale_columns_sqrt(svd.U, svd.S);
    rep.pair.R = scale_columns_sqrt(svd.V, svd.S);
    rep.balanced_residual = frobenius_norm(gram(rep.pair.L) - gram(rep.pair.R));
    rep.spec_gap = truth ? spectral_norm(assemble(rep.pair) - truth->Xstar)
                         : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

FactorPair scaledgd_step(const FactorPair& p, const SensingOperator& op,
                         const MeasurementVector& y, double mu) {
    const DenseMatrix x = assemble(p);
    MeasurementVector resid = op.apply(x);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = y[i] - resid[i];
    const DenseMatrix g = op.adjoint(resid); // A*(y - A(X_t))

    const DenseMatrix gr = matmul(g, p.R);        // n1 x r
    const DenseMatrix gl = matmul_tn(g, p.L);     // n2 x r
    const DenseMatrix lnew_dir = solve_gram(gram(p.R), gr);
    const DenseMatrix rnew_dir = solve_gram(gram(p.L), gl);

    FactorPair next;
    next.L = p.L;
    next.R = p.R;
    for (std::size_t k = 0; k < next.L.size(); ++k) next.L.data()[k] += mu * lnew_dir.data()[k];
    for (std::size_t k = 0; k < next.R.size(); ++k) next.R.data()[k] += mu * rnew_dir.data()[k];
    return next;
}

FactorPair vanillagd_step(const FactorPair& p, const SensingOperator& op,
                          const MeasurementVector& y, double mu_scaled) {
    const DenseMatrix x = assemble(p);
    MeasurementVector resid = op.apply(x);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = y[i] - resid[i];
    const DenseMatrix g = op.adjoint(resid);

    const DenseMatrix gr = matmul(g, p.R);
    const DenseMatrix gl = matmul_tn(g, p.L);
    FactorPair next;
    next.L = p.L;
    next.R = p.R;
    for (std::size_t k = 0; k < next.L.size(); ++k) next.L.data()[k] += mu_scaled * gr.data()[k];
    for (std::size_t k = 0; k < next.R.size(); ++k) next.R.data()[k] += mu_scaled * gl.data()[k];
    return next;
}

DenseMatrix rgd_step(const DenseMatrix& x, const SensingOperator& op,
                     const MeasurementVector& y, double mu, std::size_t r) {
    const CompactSVD svd = top_r_svd(x, r);
    if (!(svd.S[r - 1] > 1.0e-12 * svd.S[0]))
        throw RankCollapseError("rgd_step: iterate lost numerical rank", svd.S[r - 1]);

    MeasurementVector resid = op.apply(x);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = y[i] - resid[i];
    const DenseMatrix g = op.adjoint(resid);

    // Tangent projection P(G) = U U^T G + G V V^T - U U^T G V V^T.
    const DenseMatrix utg = matmul_tn(svd.U, g);       // r x n2
    const DenseMatrix gv = matmul(g, svd.V);           // n1 x r
    const DenseMatrix utgv = matmul(utg, svd.V);       // r x r
    DenseMatrix pt = matmul(svd.U, utg);               // U U^T G
    pt += matmul_nt(gv, svd.V);                        // + G V V^T
    pt -= matmul(svd.U, matmul_nt(utgv, svd.V));       // - U U^T G V V^T

    DenseMatrix moved = x;
    for (std::size_t k = 0; k < moved.size(); ++k) moved.data()[k] += mu * pt.data()[k];
    const CompactSVD tr = top_r_svd(moved, r);
    DenseMatrix us = tr.U;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) us(i, j) *= tr.S[j];
    return matmul_nt(us, tr.V);
}

namespace {

struct Clock {
    using clock = std::chrono::steady_clock;
    clock::time_point start = clock::now();
    std::uint64_t elapsed() const {
        return static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - start).count());
    }
};

} // namespace

IterateTrace run(const GroundTruth& gt, const SensingOperator& op, const SolverConfig& cfg) {
    if (!(cfg.mu > 0.0)) throw ConfigError("mu", "step size must be positive");
    if (cfg.stop_tol < 0.0) throw ConfigError("stop_tol", "must be >= 0");

    const MeasurementVector y = op.apply(gt.Xstar);
    const double xstar_fro = frobenius_norm(gt.Xstar);
    const double mu_eff =
        cfg.method == Method::VanillaGD ? cfg.mu / gt.sigma_max() : cfg.mu;

    IterateTrace trace;
    std::uint64_t wall = 0;

    FactorPair pair;
    DenseMatrix xmat;

    Clock init_clock;
    try {
        InitReport init = spectral_init(op, y, gt.r);
        pair = std::move(init.pair);
    } catch (const DegenerateInitError& e) {
        trace.failed = true;
        trace.failure_iter = 0;
        trace.failure_reason = e.what();
        return trace;
    }
    if (cfg.method == Method::RGD) xmat = assemble(pair);
    wall += init_clock.elapsed();

    auto record = [&](std::size_t iter, const DenseMatrix& x) {
        IterateRecord rec;
        rec.iter = iter;
        const DenseMatrix diff = x - gt.Xstar;
        rec.fro_rel = frobenius_norm(diff) / xstar_fro;
        if (!std::isfinite(rec.fro_rel)) {
            rec.wall_nanos = wall;
            trace.records.push_back(rec);
            return rec.fro_rel;
        }
        if (cfg.record_spectral) rec.spec_abs = spectral_norm(diff);
        if (cfg.record_dist) {
            if (cfg.method == Method::RGD) {
                // Factor the iterate to evaluate the GL(r) metric.
                const CompactSVD svd = top_r_svd(x, gt.r);
                FactorPair fp;
                fp.L = scale_columns_sqrt(svd.U, svd.S);
                fp.R = scale_columns_sqrt(svd.V, svd.S);
                rec.dist_val = dist(fp, gt).value;
            } else {
                rec.dist_val = dist(pair, gt).value;
            }
        }
        rec.wall_nanos = wall;
        trace.records.push_back(rec);
        return rec.fro_rel;
    };

    double fro = record(0, cfg.method == Method::RGD ? xmat : assemble(pair));
    if (cfg.stop_tol > 0.0 && fro <= cfg.stop_tol) return trace;

    for (std::size_t t = 0; t < cfg.max_iters; ++t) {
        Clock step_clock;
        try {
            switch (cfg.method) {
                case Method::ScaledGD: pair = scaledgd_step(pair, op, y, mu_eff); break;
                case Method::VanillaGD: pair = vanillagd_step(pair, op, y, mu_eff); break;
                case Method::RGD: xmat = rgd_step(xmat, op, y, mu_eff, gt.r); break;
            }
        } catch (const RankCollapseError& e) {
            trace.failed = true;
            trace.failure_iter = t;
            trace.failure_reason =
                "rank collapse at iteration " + std::to_string(t) + ": " + e.what();
            break;
        } catch (const DomainError& e) {
            // Divergence: the iterate overflowed inside the step kernels.
            trace.failed = true;
            trace.failure_iter = t;
            trace.failure_reason =
                "divergence at iteration " + std::to_string(t) + ": " + e.what();
            break;
        }
        wall += step_clock.elapsed();
        fro = record(t + 1, cfg.method == Method::RGD ? xmat : assemble(pair));
        if (!std::isfinite(fro)) {
            trace.failed = true;
            trace.failure_iter = t + 1;
            trace.failure_reason =
                "divergence at iteration " + std::to_string(t + 1) + ": non-finite error";
            break;
        }
        if (cfg.stop_tol > 0.0 && fro <= cfg.stop_tol) break;
    }

    if (cfg.record_dist) {
        for (std::size_t i = 0; i + 1 < trace.records.size(); ++i) {
            const auto& next = trace.records[i + 1].dist_val;
            const auto& cur = trace.records[i].dist_val;
            if (next && cur && *cur > 0.0) trace.records[i].contraction_ratio = *next / *cur;
        }
    }
    return trace;
}

std::vector<FactorPair> scaledgd_trajectory(const GroundTruth& gt, const SensingOperator& op,
                                            double mu, std::size_t T) {
    const MeasurementVector y = op.apply(gt.Xstar);
    std::vector<FactorPair> traj;
    traj.reserve(T + 1);
    traj.push_back(spectral_init(op, y, gt.r).pair);
    for (std::size_t t = 0; t < T; ++t) traj.push_back(scaledgd_step(traj.back(), op, y, mu));
    return traj;
}

ContractionReport contraction_monitor(const IterateTrace& trace, const GroundTruth& gt,
                                      double mu) {
    ContractionReport rep;
    const double basin = 0.1 * gt.sigma_min();
    const double slack = 1.0e-12 * gt.sigma_min();
    const double factor = 1.0 - 0.6 * mu;
    for (std::size_t i = 0; i < trace.records.size(); ++i) {
        if (!trace.records[i].dist_val)
            throw ContractViolation("contraction_monitor: trace lacks dist records");
        if (!rep.entered && *trace.records[i].dist_val <= basin) {
            rep.entered = true;
            rep.entry_iter = i;
        }
        if (rep.entered && i + 1 < trace.records.size()) {
            const double cur = *trace.records[i].dist_val;
            const double next = *trace.records[i + 1].dist_val;
            const double allowed = factor * cur + slack;
            if (next > allowed) rep.violations.push_back({i, next, allowed});
        }
    }
    return rep;
}

void write_trace_csv(std::ostream& os, const IterateTrace& trace, bool include_timing) {
    os << "iter,fro_rel,spec_abs,dist,contraction_ratio";
    if (include_timing) os << ",wall_nanos";
    os << "\n";
    for (const IterateRecord& r : trace.records) {
        os << r.iter << ',' << format_double(r.fro_rel) << ',';
        if (r.spec_abs) os << format_double(*r.spec_abs);
        os << ',';
        if (r.dist_val) os << format_double(*r.dist_val);
        os << ',';
        if (r.contraction_ratio) os << format_double(*r.contraction_ratio);
        if (include_timing) os << ',' << r.wall_nanos;
        os << "\n";
    }
}

} // namespace lrx
