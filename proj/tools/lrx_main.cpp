#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "lrx/bench.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitAuditViolation = 4;

struct CommonArgs {
    std::string config_path;
    std::string preset;
    std::string out_dir = "lrx-out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t threads = 0;
    bool no_timing = false;
    std::string backend = "auto";
    bool theorem_regime = false;
    bool record_dist = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value configuration file");
    cmd->add_option("--preset", args.preset, "named preset configuration");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--threads", args.threads, "worker thread count (0 = hardware)");
    cmd->add_flag("--no-timing", args.no_timing, "omit timing columns from CSV outputs");
    cmd->add_option("--backend", args.backend, "operator backend: auto|materialized|streamed")
        ->check(CLI::IsMember({"auto", "materialized", "streamed"}));
    cmd->add_flag("--theorem-regime", args.theorem_regime,
                  "use the analysis step size mu = 1/32 instead of the empirical default");
    cmd->add_flag("--record-dist", args.record_dist,
                  "record the GL(r) alignment metric per iteration (convergence runs)");
}

lrx::ExperimentSpec build_spec(const CommonArgs& args, const std::string& default_preset) {
    lrx::KeyValueConfig cfg = args.preset.empty() && args.config_path.empty()
                                  ? lrx::preset_config(default_preset)
                                  : (args.preset.empty()
                                         ? lrx::KeyValueConfig::load(args.config_path)
                                         : lrx::preset_config(args.preset));
    if (!args.config_path.empty() && !args.preset.empty()) {
        // --config refines a preset
        const lrx::KeyValueConfig file = lrx::KeyValueConfig::load(args.config_path);
        for (const auto& [k, v] : file.entries()) cfg.set(k, v);
    }
    cfg.set("out", args.out_dir);
    if (args.seed_set) cfg.set("seed", std::to_string(args.seed));
    if (args.threads) cfg.set("threads", std::to_string(args.threads));
    if (args.no_timing) cfg.set("timing", "off");
    if (args.backend != "auto") cfg.set("backend", args.backend);
    if (args.theorem_regime) cfg.set("mu", "0.03125");
    if (args.record_dist) cfg.set("record_dist", "on");
    return lrx::spec_from_config(cfg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank matrix recovery benchmark harness"};
    app.require_subcommand(1);

    CommonArgs converge_args, sweep_args, phase_args, audit_args, rip_args;
    CLI::App* converge = app.add_subcommand("converge", "relative error vs iteration and time");
    CLI::App* sweep = app.add_subcommand("kappa-sweep", "time to threshold vs condition number");
    CLI::App* phase = app.add_subcommand("phase-diagram", "success rate over the (r, m) grid");
    CLI::App* audit = app.add_subcommand("virtual-audit", "virtual-sequence diagnostics");
    CLI::App* rip = app.add_subcommand("rip-probe", "sampled lower bound on the RIP constant");
    add_common(converge, converge_args);
    add_common(sweep, sweep_args);
    add_common(phase, phase_args);
    add_common(audit, audit_args);
    add_common(rip, rip_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (converge->parsed()) {
            const auto result = lrx::run_convergence(build_spec(converge_args, "desk-exp1"));
            for (const std::string& p : result.csv_paths) std::printf("wrote %s\n", p.c_str());
            if (result.any_failed) {
                std::fprintf(stderr, "converge: a solver run failed (rank collapse)\n");
                return kExitNumerical;
            }
            return kExitOk;
        }
        if (sweep->parsed()) {
            const auto result = lrx::run_kappa_sweep(build_spec(sweep_args, "desk-exp2"));
            std::printf("wrote %s\n", result.csv_path.c_str());
            return kExitOk;
        }
        if (phase->parsed()) {
            const auto result = lrx::run_phase_diagram(build_spec(phase_args, "desk-exp3"));
            std::printf("wrote %s\n", result.csv_path.c_str());
            std::printf("wrote %s\n", result.pgm_path.c_str());
            return kExitOk;
        }
        if (audit->parsed()) {
            const auto result = lrx::run_virtual_audit(build_spec(audit_args, "desk-audit"));
            std::printf("wrote %s\n", result.coupled_csv_path.c_str());
            std::printf("wrote %s\n", result.audit_csv_path.c_str());
            std::printf("decoupling violations: %zu\n", result.decoupling_violations);
            std::printf("projection-bound violations: %zu (skipped %zu)\n",
                        result.projection_violations, result.skipped_preconditions);
            if (result.decoupling_violations + result.projection_violations > 0)
                return kExitAuditViolation;
            return kExitOk;
        }
        if (rip->parsed()) {
            const auto result = lrx::run_rip_probe(build_spec(rip_args, "desk-rip"));
            std::printf("wrote %s\n", result.csv_path.c_str());
            std::printf("rip estimate (lower bound): %s\n",
                        lrx::format_double(result.estimate).c_str());
            return kExitOk;
        }
    } catch (const lrx::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const lrx::RankCollapseError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
