#include "lrx/virtualseq.hpp"

#include <cmath>
#include <ostream>

#include "lrx/io.hpp"
#include "lrx/rng.hpp"
#include "lrx/solvers.hpp"

namespace lrx {

DirectionSample sample_directions(std::size_t n1, std::size_t n2, std::size_t K,
                                  std::uint64_t seed) {
    if (K < 1) throw DomainError("sample_directions: K must be >= 1");
    DirectionSample sample;
    sample.seed = seed;
    sample.directions.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        const std::uint64_t ks = rng::derive(seed, {{"direction", k}});
        rng::Stream sw(ks, 0x21u), sv(ks, 0x22u);
        std::vector<double> w(n1), v(n2);
        for (double& x : w) x = sw.next_gaussian();
        for (double& x : v) x = sv.next_gaussian();
        sample.directions.push_back(VirtualDirection::normalized(std::move(w), std::move(v)));
    }
    return sample;
}

std::size_t horizon_T(double mu, std::size_t r) {
    if (!(mu > 0.0)) throw DomainError("horizon_T: mu must be positive");
    if (r < 1) throw DomainError("horizon_T: r must be >= 1");
    const double t = (10.0 / mu) * std::log(10.0 * std::sqrt(static_cast<double>(r)));
    return static_cast<std::size_t>(std::ceil(t));
}

namespace {

DenseMatrix scale_columns_sqrt(const DenseMatrix& a, const std::vector<double>& s) {
    DenseMatrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= std::sqrt(s[j]);
    return out;
}

// One preconditioned step driven by the virtual operator and its own
// measurements of X*.
FactorPair virtual_step(const FactorPair& p, const SensingOperator& op,
                        const VirtualDirection& d, const MeasurementVector& y_virtual,
                        double mu) {
    const DenseMatrix x = assemble(p);
    MeasurementVector resid = op.apply_virtual(d, x);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] = y_virtual[i] - resid[i];
    const DenseMatrix g = op.adjoint_virtual(d, resid);

    const DenseMatrix lnew_dir = solve_gram(gram(p.R), matmul(g, p.R));
    const DenseMatrix rnew_dir = solve_gram(gram(p.L), matmul_tn(g, p.L));
    FactorPair next;
    next.L = p.L;
    next.R = p.R;
    for (std::size_t k = 0; k < next.L.size(); ++k) next.L.data()[k] += mu * lnew_dir.data()[k];
    for (std::size_t k = 0; k < next.R.size(); ++k) next.R.data()[k] += mu * rnew_dir.data()[k];
    return next;
}

} // namespace

std::vector<FactorPair> run_virtual(const GroundTruth& gt, const SensingOperator& op,
                                    const VirtualDirection& d, double mu, std::size_t T,
                                    VirtualLoopBackend loop) {
    if (T < 1) throw DomainError("run_virtual: T must be >= 1");

    // Spectral initialization from A*_{(w,v)} A_{(w,v)}(X*).
    const MeasurementVector y_virtual = op.apply_virtual(d, gt.Xstar);
    const DenseMatrix z0 = op.adjoint_virtual(d, y_virtual);
    const CompactSVD svd = top_r_svd(z0, gt.r);
    if (!(svd.S[gt.r - 1] > 0.0) || svd.S[gt.r - 1] <= 1.0e-14 * svd.S[0])
        throw DegenerateInitError("run_virtual: degenerate virtual initialization");

    std::vector<FactorPair> traj;
    traj.reserve(T + 1);
    FactorPair p0;
    p0.L = scale_columns_sqrt(svd.U, svd.S);
    p0.R = scale_columns_sqrt(svd.V, svd.S);
    traj.push_back(std::move(p0));

    const MeasurementVector y = op.apply(gt.Xstar);
    for (std::size_t t = 0; t < T; ++t) {
        if (loop == VirtualLoopBackend::RealOperator) {
            traj.push_back(scaledgd_step(traj.back(), op, y, mu));
        } else {
            traj.push_back(virtual_step(traj.back(), op, d, y_virtual, mu));
        }
    }
    return traj;
}

namespace {

DenseMatrix project_rows(const DenseMatrix& vstar, const DenseMatrix& x) {
    return matmul_tn(vstar, x); // V*^T X
}

} // namespace

CoupledTrace coupled_diagnostics(const std::vector<FactorPair>& real_traj,
                                 const std::vector<std::vector<FactorPair>>& virtual_trajs,
                                 const GroundTruth& gt) {
    if (real_traj.empty() || virtual_trajs.empty())
        throw DimensionError("coupled_diagnostics: empty trajectories");
    for (const auto& vt : virtual_trajs)
        if (vt.size() != real_traj.size())
            throw DimensionError("coupled_diagnostics: trajectory lengths differ");

    CoupledTrace out;
    const std::size_t T = real_traj.size();
    const std::size_t K = virtual_trajs.size();
    out.per_direction.reserve(T * K);
    out.per_iterate.reserve(T);

    for (std::size_t t = 0; t < T; ++t) {
        const DenseMatrix xt = assemble(real_traj[t]);
        const DenseMatrix err = gt.Xstar - xt;
        CoupledIterateRecord it;
        it.t = t;
        it.spec_err = spectral_norm(err);
        double max_gap = 0.0, max_pv = 0.0, max_pw = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const DenseMatrix xv = assemble(virtual_trajs[k][t]);
            const DenseMatrix diff = xt - xv;
            CoupledDirectionRecord rec;
            rec.t = t;
            rec.direction_index = k;
            rec.fro_gap = frobenius_norm(diff);
            rec.proj_gap_V = frobenius_norm(project_rows(gt.Vstar, diff));
            rec.proj_gap_W = frobenius_norm(matmul(diff, gt.Wstar));
            max_gap = std::max(max_gap, rec.fro_gap);
            max_pv = std::max(max_pv, rec.proj_gap_V);
            max_pw = std::max(max_pw, rec.proj_gap_W);
            out.per_direction.push_back(rec);
        }
        it.G_t = it.spec_err + max_gap;
        it.G_t_star = spectral_norm(project_rows(gt.Vstar, err)) +
                      spectral_norm(matmul(err, gt.Wstar)) + max_pv + max_pw;
        out.per_iterate.push_back(it);
    }
    return out;
}

DecouplingReport decoupling_audit(const std::vector<FactorPair>& real_traj,
                                  const std::vector<std::vector<FactorPair>>& virtual_trajs,
                                  const SensingOperator& op, const DirectionSample& dirs,
                                  const GroundTruth& gt) {
    if (virtual_trajs.size() != dirs.count())
        throw DimensionError("decoupling_audit: direction count mismatch");
    for (const auto& vt : virtual_trajs)
        if (vt.size() != real_traj.size())
            throw DimensionError("decoupling_audit: trajectory lengths differ");

    DecouplingReport rep;
    const double scale =
        4.0 * std::sqrt(static_cast<double>(op.n1() + op.n2()) / static_cast<double>(op.m()));
    for (std::size_t k = 0; k < dirs.count(); ++k) {
        const VirtualDirection& d = dirs.directions[k];
        DenseMatrix wv(op.n1(), op.n2());
        for (std::size_t i = 0; i < op.n1(); ++i)
            for (std::size_t j = 0; j < op.n2(); ++j) wv(i, j) = d.w[i] * d.v[j];
        for (std::size_t t = 0; t < virtual_trajs[k].size(); ++t) {
            DenseMatrix diff = gt.Xstar - assemble(virtual_trajs[k][t]);
            const double coeff = dot(wv, diff);
            for (std::size_t idx = 0; idx < diff.size(); ++idx)
                diff.data()[idx] -= coeff * wv.data()[idx]; // P_perp(X* - X_t^{(w,v)})
            const MeasurementVector z = op.apply(diff);
            const DenseMatrix back = op.adjoint(z); // (A*A)(P_perp(...))
            AuditRow row;
            row.t = t;
            row.direction_index = k;
            row.lhs = std::fabs(dot(wv, back));
            row.rhs = scale * vector_norm(z.values);
            row.violated = row.lhs > row.rhs;
            rep.rows.push_back(row);
            ++rep.checks;
            if (row.violated) ++rep.violations;
        }
    }
    return rep;
}

ProjectionBoundReport projection_bound_audit(
    const std::vector<FactorPair>& real_traj,
    const std::vector<std::vector<FactorPair>>& virtual_trajs, const GroundTruth& gt) {
    ProjectionBoundReport rep;
    const DenseMatrix vperp = orthonormal_complement(gt.Vstar);
    const DenseMatrix wperp = orthonormal_complement(gt.Wstar);
    const double smin = gt.sigma_min();

    for (std::size_t t = 0; t < real_traj.size(); ++t) {
        const DenseMatrix xt = assemble(real_traj[t]);
        const DenseMatrix err = xt - gt.Xstar;
        const double spec_err = spectral_norm(err);

        // Measured preconditions shared by every direction at this iterate.
        const CompactSVD xsvd = top_r_svd(xt, gt.r);
        const double align_v = spectral_norm(matmul_tn(vperp, xsvd.U));
        const double align_w = spectral_norm(matmul_tn(wperp, xsvd.V));
        const bool shared_ok =
            std::max(align_v, align_w) <= 0.125 && spec_err <= smin / 80.0;

        for (std::size_t k = 0; k < virtual_trajs.size(); ++k) {
            const DenseMatrix diff = xt - assemble(virtual_trajs[k][t]);
            ProjectionBoundRow row;
            row.t = t;
            row.direction_index = k;
            row.lhs = frobenius_norm(diff);
            row.rhs = 1.25 * (frobenius_norm(matmul_tn(gt.Vstar, diff)) +
                              frobenius_norm(matmul(diff, gt.Wstar))) +
                      1.0e-9;
            if (!shared_ok || row.lhs > smin / 80.0) {
                row.skipped = true;
                ++rep.skipped;
            } else {
                row.violated = row.lhs > row.rhs;
                ++rep.checks;
                if (row.violated) ++rep.violations;
            }
            rep.rows.push_back(row);
        }
    }
    return rep;
}

void write_coupled_trace_csv(std::ostream& os, const CoupledTrace& trace) {
    os << "scope,t,direction_index,fro_gap,proj_gap_V,proj_gap_W,spec_err,G_t,G_t_star\n";
    for (const auto& r : trace.per_direction) {
        os << "direction," << r.t << ',' << r.direction_index << ','
           << format_double(r.fro_gap) << ',' << format_double(r.proj_gap_V) << ','
           << format_double(r.proj_gap_W) << ",,,\n";
    }
    for (const auto& r : trace.per_iterate) {
        os << "iterate," << r.t << ",,,,," << format_double(r.spec_err) << ','
           << format_double(r.G_t) << ',' << format_double(r.G_t_star) << "\n";
    }
}

void write_audit_csv(std::ostream& os, const DecouplingReport& dec,
                     const ProjectionBoundReport& proj) {
    os << "t,direction_index,metric_name,lhs,rhs,violated\n";
    for (const AuditRow& r : dec.rows) {
        os << r.t << ',' << r.direction_index << ",decoupling," << format_double(r.lhs) << ','
           << format_double(r.rhs) << ',' << (r.violated ? "true" : "false") << "\n";
    }
    for (const ProjectionBoundRow& r : proj.rows) {
        if (r.skipped) continue;
        os << r.t << ',' << r.direction_index << ",projection_bound," << format_double(r.lhs)
           << ',' << format_double(r.rhs) << ',' << (r.violated ? "true" : "false") << "\n";
    }
}

} // namespace lrx
