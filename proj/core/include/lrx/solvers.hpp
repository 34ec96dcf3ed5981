#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lrx/model.hpp"
#include "lrx/sensing.hpp"

namespace lrx {

enum class Method { ScaledGD, VanillaGD, RGD };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Per-iteration flop-class labels (preconditioner solves, retraction, ...).
std::vector<std::string> step_cost_classes(Method m);

struct SolverConfig {
    Method method = Method::ScaledGD;
    double mu = 0.5;            // eta for VanillaGD; the effective step is eta/sigma_1(X*)
    std::size_t max_iters = 100;
    double stop_tol = 0.0;      // on fro_rel; 0 disables early stopping
    bool record_dist = false;
    bool record_spectral = true;
    std::uint64_t seed = 0;     // reserved for randomized variants
};

struct IterateRecord {
    std::size_t iter = 0;
    double fro_rel = 0.0;
    std::optional<double> spec_abs;
    std::optional<double> dist_val;
    std::optional<double> contraction_ratio; // dist[t+1]/dist[t]
    std::uint64_t wall_nanos = 0;            // cumulative time spent in steps
};

struct IterateTrace {
    std::vector<IterateRecord> records;
    bool failed = false;
    std::size_t failure_iter = 0;
    std::string failure_reason;
};

struct InitReport {
    FactorPair pair;
    double spec_gap = 0.0;          // ||X_0 - X*||_2 when the truth is supplied
    double balanced_residual = 0.0; // ||L0^T L0 - R0^T R0||_F
};

// Top-r SVD of A*(y); L0 = V S^{1/2}, R0 = W S^{1/2}.
InitReport spectral_init(const SensingOperator& op, const MeasurementVector& y, std::size_t r,
                         const GroundTruth* truth = nullptr);

// One ScaledGD update with simultaneous (pre-update) preconditioner solves.
FactorPair scaledgd_step(const FactorPair& p, const SensingOperator& op,
                         const MeasurementVector& y, double mu);

FactorPair vanillagd_step(const FactorPair& p, const SensingOperator& op,
                          const MeasurementVector& y, double mu_scaled);

// Riemannian step on the rank-r manifold: tangent projection of the gradient
// followed by a rank-r SVD-truncation retraction.
DenseMatrix rgd_step(const DenseMatrix& x, const SensingOperator& op,
                     const MeasurementVector& y, double mu, std::size_t r);

IterateTrace run(const GroundTruth& gt, const SensingOperator& op, const SolverConfig& cfg);

// The factor iterates themselves (init + T ScaledGD steps); the raw material
// for the virtual-sequence diagnostics.
std::vector<FactorPair> scaledgd_trajectory(const GroundTruth& gt, const SensingOperator& op,
                                            double mu, std::size_t T);

struct ContractionViolationRecord {
    std::size_t iter = 0;
    double observed = 0.0; // dist[t+1]
    double allowed = 0.0;  // (1 - 0.6 mu) dist[t] + slack
};

struct ContractionReport {
    bool entered = false;
    std::size_t entry_iter = 0;
    std::vector<ContractionViolationRecord> violations;
};

// Checks the local linear contraction dist[t+1] <= (1 - 0.6 mu) dist[t] after
// the first iterate inside the 0.1 sigma_min basin.
ContractionReport contraction_monitor(const IterateTrace& trace, const GroundTruth& gt,
                                      double mu);

// CSV columns: iter, fro_rel, spec_abs, dist, contraction_ratio, wall_nanos.
// Empty optional fields are serialized as empty strings.
void write_trace_csv(std::ostream& os, const IterateTrace& trace, bool include_timing = true);

} // namespace lrx
