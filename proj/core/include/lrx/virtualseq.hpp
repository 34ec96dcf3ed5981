#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lrx/model.hpp"
#include "lrx/sensing.hpp"

namespace lrx {

struct DirectionSample {
    std::vector<VirtualDirection> directions;
    std::uint64_t seed = 0;

    std::size_t count() const noexcept { return directions.size(); }
};

// K independent uniformly-random unit direction pairs (Gaussian, normalized).
DirectionSample sample_directions(std::size_t n1, std::size_t n2, std::size_t K,
                                  std::uint64_t seed);

// T = ceil((10/mu) * log(10 sqrt(r))), natural log.
std::size_t horizon_T(double mu, std::size_t r);

// Which operator drives the virtual iteration loop. RealOperator keeps the
// update rule on the real measurements (the default used by the audits);
// VirtualOperator drives the loop with the projected operator as well, which
// makes the whole trajectory a function of the projected measurement matrices
// alone (the independence mechanism, testable constructively).
enum class VirtualLoopBackend { RealOperator, VirtualOperator };

// Virtual trajectory for direction d: spectral init from the top-r SVD of
// A*_{(w,v)} A_{(w,v)}(X*), then T preconditioned steps.
std::vector<FactorPair> run_virtual(const GroundTruth& gt, const SensingOperator& op,
                                    const VirtualDirection& d, double mu, std::size_t T,
                                    VirtualLoopBackend loop = VirtualLoopBackend::RealOperator);

struct CoupledDirectionRecord {
    std::size_t t = 0;
    std::size_t direction_index = 0;
    double fro_gap = 0.0;    // ||X_t - X_t^{(w,v)}||_F
    double proj_gap_V = 0.0; // ||V*^T (X_t - X_t^{(w,v)})||_F
    double proj_gap_W = 0.0; // ||(X_t - X_t^{(w,v)}) W*||_F
};

struct CoupledIterateRecord {
    std::size_t t = 0;
    double spec_err = 0.0; // ||X* - X_t||_2
    double G_t = 0.0;      // spec_err + max_d fro_gap
    double G_t_star = 0.0;
};

struct CoupledTrace {
    std::vector<CoupledDirectionRecord> per_direction;
    std::vector<CoupledIterateRecord> per_iterate;
};

CoupledTrace coupled_diagnostics(const std::vector<FactorPair>& real_traj,
                                 const std::vector<std::vector<FactorPair>>& virtual_trajs,
                                 const GroundTruth& gt);

struct AuditRow {
    std::size_t t = 0;
    std::size_t direction_index = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool violated = false;
};

struct DecouplingReport {
    std::vector<AuditRow> rows;
    std::size_t checks = 0;
    std::size_t violations = 0;
};

// Checks |<wv^T, (A*A)(P_perp(X* - X_t^{(w,v)}))>| <=
// 4 sqrt((n1+n2)/m) ||A(P_perp(X* - X_t^{(w,v)}))||_2 per direction/iteration.
DecouplingReport decoupling_audit(const std::vector<FactorPair>& real_traj,
                                  const std::vector<std::vector<FactorPair>>& virtual_trajs,
                                  const SensingOperator& op, const DirectionSample& dirs,
                                  const GroundTruth& gt);

struct ProjectionBoundRow {
    std::size_t t = 0;
    std::size_t direction_index = 0;
    double lhs = 0.0; // fro_gap
    double rhs = 0.0; // (5/4)(proj_gap_V + proj_gap_W) + 1e-9
    bool violated = false;
    bool skipped = false; // preconditions not met at this iterate
};

struct ProjectionBoundReport {
    std::vector<ProjectionBoundRow> rows;
    std::size_t checks = 0;
    std::size_t violations = 0;
    std::size_t skipped = 0;
};

// Conditional check of the gap-versus-projections bound: evaluated only where
// the measured preconditions hold (subspace alignment <= 1/8, spectral error
// and gap <= sigma_min/80); other iterations are counted as skipped.
ProjectionBoundReport projection_bound_audit(const std::vector<FactorPair>& real_traj,
                                             const std::vector<std::vector<FactorPair>>& virtual_trajs,
                                             const GroundTruth& gt);

// CSV schemas for the audit artifacts.
void write_coupled_trace_csv(std::ostream& os, const CoupledTrace& trace);
void write_audit_csv(std::ostream& os, const DecouplingReport& dec,
                     const ProjectionBoundReport& proj);

} // namespace lrx
