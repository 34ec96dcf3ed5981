#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrx/io.hpp"
#include "lrx/sensing.hpp"
#include "lrx/solvers.hpp"
#include "lrx/virtualseq.hpp"

namespace lrx {

enum class ExperimentKind { Convergence, KappaSweep, PhaseDiagram, VirtualAudit, RipProbe };

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Convergence;
    std::size_t n1 = 0, n2 = 0;
    std::vector<std::size_t> r_values;
    std::vector<std::size_t> m_values;
    std::vector<double> kappa_values;
    std::vector<Method> methods;
    double mu = 0.5; // eta; VanillaGD runs eta / sigma_1(X*)
    std::size_t max_iters = 100;
    double success_threshold = 1.0e-8;
    std::size_t trials = 1;
    std::uint64_t master_seed = 1;
    std::string out_dir = ".";
    std::size_t threads = 0; // 0 = hardware concurrency
    bool include_timing = true;
    bool record_dist = false;
    std::optional<Backend> backend; // nullopt = auto by memory budget
    std::size_t direction_count = 16; // virtual audit
    std::size_t rip_rank = 2;         // rip probe
    std::size_t rip_trials = 500;

    void validate() const;
};

// Named desk/paper presets (paper-exp1, desk-exp1, ..., desk-audit, desk-rip).
std::vector<std::string> preset_names();
KeyValueConfig preset_config(const std::string& name);

// Builds a spec from key=value entries; unknown keys are rejected.
ExperimentSpec spec_from_config(const KeyValueConfig& cfg);

// Canonical key=value echo of a resolved spec (the manifest payload).
std::string spec_echo(const ExperimentSpec& spec);

// Deterministic collision-resistant derivation from labeled indices.
// Order-sensitive: permuting the labels changes the result.
std::uint64_t seed_derivation(std::uint64_t master,
                              const std::vector<std::pair<std::string, std::uint64_t>>& labels);

struct CellResult {
    std::size_t r = 0;
    std::size_t m = 0;
    double kappa = 0.0;
    std::size_t success_count = 0;
    std::size_t trials = 0;
    double median_iterations = 0.0; // among successful trials; NaN if none
    double median_wall_nanos = 0.0;
};

struct ConvergenceResult {
    std::vector<std::string> csv_paths;
    bool any_failed = false;
};

struct KappaSweepResult {
    std::string csv_path;
    bool any_failed = false;
};

struct PhaseDiagramResult {
    std::string csv_path;
    std::string pgm_path;
    std::vector<CellResult> cells;
};

struct VirtualAuditResult {
    std::string coupled_csv_path;
    std::string audit_csv_path;
    std::size_t decoupling_violations = 0;
    std::size_t projection_violations = 0;
    std::size_t skipped_preconditions = 0;
};

struct RipProbeResult {
    std::string csv_path;
    double estimate = 0.0;
};

ConvergenceResult run_convergence(const ExperimentSpec& spec);
KappaSweepResult run_kappa_sweep(const ExperimentSpec& spec);
PhaseDiagramResult run_phase_diagram(const ExperimentSpec& spec);
VirtualAuditResult run_virtual_audit(const ExperimentSpec& spec);
RipProbeResult run_rip_probe(const ExperimentSpec& spec);

} // namespace lrx
