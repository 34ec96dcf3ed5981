#include "lrx/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "lrx/rng.hpp"

namespace lrx {

namespace {

const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Convergence: return "convergence";
        case ExperimentKind::KappaSweep: return "kappa-sweep";
        case ExperimentKind::PhaseDiagram: return "phase-diagram";
        case ExperimentKind::VirtualAudit: return "virtual-audit";
        case ExperimentKind::RipProbe: return "rip-probe";
    }
    return "?";
}

void parallel_for(std::size_t n_tasks, std::size_t threads,
                  const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, std::max<std::size_t>(1, n_tasks));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string methods_string(const std::vector<Method>& methods) {
    std::string s;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (i) s += ",";
        s += method_name(methods[i]);
    }
    return s;
}

} // namespace

std::uint64_t seed_derivation(std::uint64_t master,
                              const std::vector<std::pair<std::string, std::uint64_t>>& labels) {
    if (labels.empty()) throw DomainError("seed_derivation: labels must be non-empty");
    std::uint64_t h = rng::splitmix64(master ^ 0xa0761d6478bd642fULL);
    for (const auto& [name, index] : labels) {
        h = rng::splitmix64(h ^ rng::fnv1a(name));
        h = rng::splitmix64(h ^ (index * 0xe7037ed1a0b428dbULL + 0x1d8e4e27c47d124fULL));
    }
    return h;
}

void ExperimentSpec::validate() const {
    if (n1 == 0) throw ConfigError("n1", "must be positive");
    if (n2 == 0) throw ConfigError("n2", "must be positive");
    if (r_values.empty()) throw ConfigError("r", "range is empty");
    if (!std::is_sorted(r_values.begin(), r_values.end()))
        throw ConfigError("r", "range must be ascending");
    for (std::size_t r : r_values) {
        if (r < 1 || r > std::min(n1, n2)) throw ConfigError("r", "rank out of range");
    }
    if (kind != ExperimentKind::RipProbe) {
        if (m_values.empty()) throw ConfigError("m", "range is empty");
        if (!std::is_sorted(m_values.begin(), m_values.end()))
            throw ConfigError("m", "range must be ascending");
        for (std::size_t m : m_values)
            if (m == 0) throw ConfigError("m", "must be positive");
    }
    if (kappa_values.empty()) throw ConfigError("kappa", "range is empty");
    for (double k : kappa_values)
        if (!(k >= 1.0)) throw ConfigError("kappa", "must be >= 1");
    if (kind == ExperimentKind::Convergence || kind == ExperimentKind::KappaSweep) {
        if (methods.empty()) throw ConfigError("methods", "method list is empty");
    }
    if (kind == ExperimentKind::PhaseDiagram && methods.size() != 1)
        throw ConfigError("methods", "phase diagram runs exactly one method");
    if (!(mu > 0.0)) throw ConfigError("mu", "must be positive");
    if (trials < 1) throw ConfigError("trials", "must be >= 1");
    if (!(success_threshold > 0.0)) throw ConfigError("success_threshold", "must be positive");
    if (kind == ExperimentKind::VirtualAudit && direction_count < 1)
        throw ConfigError("directions", "must be >= 1");
}

std::vector<std::string> preset_names() {
    return {"paper-exp1", "desk-exp1", "paper-exp2", "desk-exp2",
            "paper-exp3", "desk-exp3", "desk-audit", "desk-rip"};
}

KeyValueConfig preset_config(const std::string& name) {
    KeyValueConfig c;
    auto set = [&](const std::string& k, const std::string& v) { c.set(k, v); };
    if (name == "paper-exp1") {
        set("kind", "convergence");
        set("n1", "100"); set("n2", "100"); set("r", "30"); set("kappa", "5");
        set("m", "12000"); // 4 n1 r
        set("methods", "scaledgd,gd,rgd");
        set("mu", "0.5"); set("max_iters", "300"); set("success_threshold", "1e-12");
    } else if (name == "desk-exp1") {
        set("kind", "convergence");
        set("n1", "60"); set("n2", "60"); set("r", "8"); set("kappa", "5");
        set("m", "1920"); // 4 n1 r
        set("methods", "scaledgd,gd,rgd");
        set("mu", "0.5"); set("max_iters", "120"); set("success_threshold", "1e-10");
    } else if (name == "paper-exp2") {
        set("kind", "kappa-sweep");
        set("n1", "100"); set("n2", "100"); set("r", "30");
        set("m", "15000"); // 5 n1 r
        set("kappa_list", "1,2,3,4,5,6,7,8,9,10,11,12,13,14,15");
        set("methods", "scaledgd,gd,rgd");
        set("mu", "0.5"); set("max_iters", "1000"); set("success_threshold", "1e-6");
    } else if (name == "desk-exp2") {
        set("kind", "kappa-sweep");
        set("n1", "60"); set("n2", "60"); set("r", "6");
        set("m", "1800"); // 5 n1 r
        set("kappa_list", "2,5,10,15");
        set("methods", "scaledgd,gd,rgd");
        set("mu", "0.5"); set("max_iters", "5000"); set("success_threshold", "1e-6");
    } else if (name == "paper-exp3") {
        set("kind", "phase-diagram");
        set("n1", "70"); set("n2", "80"); set("kappa", "5");
        set("r_min", "1"); set("r_max", "20"); set("r_step", "1");
        set("m_min", "1000"); set("m_max", "13000"); set("m_step", "1000");
        set("methods", "scaledgd");
        set("mu", "0.5"); set("max_iters", "100"); set("success_threshold", "1e-8");
        set("trials", "10");
    } else if (name == "desk-exp3") {
        set("kind", "phase-diagram");
        set("n1", "40"); set("n2", "44"); set("kappa", "5");
        set("r_min", "1"); set("r_max", "10"); set("r_step", "1");
        set("m_min", "400"); set("m_max", "4000"); set("m_step", "400");
        set("methods", "scaledgd");
        set("mu", "0.5"); set("max_iters", "100"); set("success_threshold", "1e-8");
        set("trials", "5");
    } else if (name == "desk-audit") {
        set("kind", "virtual-audit");
        set("n1", "32"); set("n2", "32"); set("r", "3"); set("kappa", "5");
        set("m", "960"); // 5 (n1+n2) r
        set("methods", "scaledgd");
        set("mu", "0.5"); set("directions", "16");
        set("success_threshold", "1e-8");
    } else if (name == "desk-rip") {
        set("kind", "rip-probe");
        set("n1", "16"); set("n2", "16"); set("r", "2"); set("kappa", "5");
        set("m", "512"); // 8 (n1+n2) r
        set("rip_trials", "500");
        set("success_threshold", "0.5");
    } else {
        throw ConfigError("preset", "unknown preset: " + name);
    }
    return c;
}

namespace {

std::vector<std::size_t> parse_size_range(const KeyValueConfig& cfg, const std::string& key) {
    std::vector<std::size_t> out;
    if (cfg.has(key)) {
        out.push_back(cfg.get_u64(key));
        return out;
    }
    if (!cfg.has(key + "_min")) return out;
    const std::size_t lo = cfg.get_u64(key + "_min");
    const std::size_t hi = cfg.get_u64(key + "_max");
    const std::size_t step = cfg.get_u64_or(key + "_step", 1);
    if (step == 0) throw ConfigError(key + "_step", "must be positive");
    if (hi < lo) throw ConfigError(key + "_max", "must be >= " + key + "_min");
    for (std::size_t v = lo; v <= hi; v += step) out.push_back(v);
    return out;
}

std::vector<double> parse_kappa(const KeyValueConfig& cfg) {
    std::vector<double> out;
    if (cfg.has("kappa_list")) {
        std::istringstream is(cfg.get_string("kappa_list"));
        std::string tok;
        while (std::getline(is, tok, ',')) {
            if (tok.empty()) continue;
            out.push_back(std::stod(tok));
        }
    } else if (cfg.has("kappa")) {
        out.push_back(cfg.get_double("kappa"));
    }
    return out;
}

std::vector<Method> parse_methods(const KeyValueConfig& cfg) {
    std::vector<Method> out;
    if (!cfg.has("methods")) return out;
    std::istringstream is(cfg.get_string("methods"));
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(parse_method(tok));
    }
    return out;
}

const char* const kKnownKeys[] = {
    "kind", "n1", "n2", "r", "r_min", "r_max", "r_step", "m", "m_min", "m_max", "m_step",
    "kappa", "kappa_list", "methods", "mu", "max_iters", "success_threshold", "trials",
    "seed", "out", "threads", "timing", "record_dist", "backend", "directions",
    "rip_rank", "rip_trials"};

} // namespace

ExperimentSpec spec_from_config(const KeyValueConfig& cfg) {
    for (const auto& [key, value] : cfg.entries()) {
        bool known = false;
        for (const char* k : kKnownKeys)
            if (key == k) { known = true; break; }
        if (!known) throw ConfigError(key, "unknown configuration key");
    }

    ExperimentSpec spec;
    const std::string kind = cfg.get_string("kind");
    if (kind == "convergence") spec.kind = ExperimentKind::Convergence;
    else if (kind == "kappa-sweep") spec.kind = ExperimentKind::KappaSweep;
    else if (kind == "phase-diagram") spec.kind = ExperimentKind::PhaseDiagram;
    else if (kind == "virtual-audit") spec.kind = ExperimentKind::VirtualAudit;
    else if (kind == "rip-probe") spec.kind = ExperimentKind::RipProbe;
    else throw ConfigError("kind", "unknown experiment kind: " + kind);

    spec.n1 = cfg.get_u64("n1");
    spec.n2 = cfg.get_u64("n2");
    spec.r_values = parse_size_range(cfg, "r");
    spec.m_values = parse_size_range(cfg, "m");
    spec.kappa_values = parse_kappa(cfg);
    spec.methods = parse_methods(cfg);
    spec.mu = cfg.get_double_or("mu", 0.5);
    // Virtual audits default to the analysis horizon T(mu, r); 0 is the
    // "use the horizon" sentinel.
    spec.max_iters = cfg.get_u64_or(
        "max_iters", spec.kind == ExperimentKind::VirtualAudit ? 0 : 100);
    spec.success_threshold = cfg.get_double_or("success_threshold", 1.0e-8);
    spec.trials = cfg.get_u64_or("trials", 1);
    spec.master_seed = cfg.get_u64_or("seed", 1);
    spec.out_dir = cfg.get_string_or("out", ".");
    spec.threads = cfg.get_u64_or("threads", 0);
    spec.include_timing = cfg.get_string_or("timing", "on") != "off";
    spec.record_dist = cfg.get_string_or("record_dist", "off") == "on";
    spec.direction_count = cfg.get_u64_or("directions", 16);
    spec.rip_rank = cfg.get_u64_or("rip_rank", spec.r_values.empty() ? 2 : spec.r_values[0]);
    spec.rip_trials = cfg.get_u64_or("rip_trials", 500);
    if (cfg.has("backend")) {
        const std::string b = cfg.get_string("backend");
        if (b == "materialized") spec.backend = Backend::Materialized;
        else if (b == "streamed") spec.backend = Backend::Streamed;
        else if (b == "auto") spec.backend = std::nullopt;
        else throw ConfigError("backend", "expected auto|materialized|streamed");
    }
    spec.validate();
    return spec;
}

std::string spec_echo(const ExperimentSpec& spec) {
    std::ostringstream os;
    os << "kind=" << kind_name(spec.kind) << "\n";
    os << "n1=" << spec.n1 << "\n";
    os << "n2=" << spec.n2 << "\n";
    os << "r=";
    for (std::size_t i = 0; i < spec.r_values.size(); ++i)
        os << (i ? "," : "") << spec.r_values[i];
    os << "\n";
    os << "m=";
    for (std::size_t i = 0; i < spec.m_values.size(); ++i)
        os << (i ? "," : "") << spec.m_values[i];
    os << "\n";
    os << "kappa=";
    for (std::size_t i = 0; i < spec.kappa_values.size(); ++i)
        os << (i ? "," : "") << format_double(spec.kappa_values[i]);
    os << "\n";
    os << "methods=" << methods_string(spec.methods) << "\n";
    os << "mu=" << format_double(spec.mu) << "\n";
    os << "max_iters=" << spec.max_iters << "\n";
    os << "success_threshold=" << format_double(spec.success_threshold) << "\n";
    os << "trials=" << spec.trials << "\n";
    os << "seed=" << spec.master_seed << "\n";
    if (spec.kind == ExperimentKind::VirtualAudit) {
        os << "directions=" << spec.direction_count << "\n";
        os << "horizon_log_convention=natural\n";
    }
    if (spec.kind == ExperimentKind::RipProbe) {
        os << "rip_rank=" << spec.rip_rank << "\n";
        os << "rip_trials=" << spec.rip_trials << "\n";
    }
    if (spec.kind == ExperimentKind::KappaSweep)
        os << "m_note=measurement count applied uniformly across kappa\n";
    return os.str();
}

namespace {

SensingOperator make_operator(const ExperimentSpec& spec, std::size_t m, std::uint64_t seed) {
    return SensingOperator::gaussian(spec.n1, spec.n2, m, seed, spec.backend);
}

Backend resolve_backend(const ExperimentSpec& spec, std::size_t m) {
    if (spec.backend) return *spec.backend;
    return m * spec.n1 * spec.n2 * sizeof(double) <= kDefaultMaterializeBudget
               ? Backend::Materialized
               : Backend::Streamed;
}

void write_manifest(const ExperimentSpec& spec, const std::vector<OperatorHeader>& headers,
                    const std::vector<std::string>& header_labels) {
    std::ostringstream os;
    const std::string echo = spec_echo(spec);
    os << echo;
    os << "content_hash=" << sha1_hex(echo) << "\n";
    for (std::size_t i = 0; i < headers.size(); ++i) {
        os << "[operator";
        if (i < header_labels.size() && !header_labels[i].empty()) os << " " << header_labels[i];
        os << "]\n";
        os << format_operator_header(headers[i]);
    }
    write_file((std::filesystem::path(spec.out_dir) / "manifest.txt").string(), os.str());
}

struct TrialOutcome {
    bool succeeded = false;
    double iterations = 0.0;
    double wall_nanos = 0.0;
};

TrialOutcome run_single_trial(const ExperimentSpec& spec, Method method, std::size_t r,
                              std::size_t m, double kappa, std::uint64_t gt_seed,
                              std::uint64_t op_seed) {
    const GroundTruth gt = generate_ground_truth(spec.n1, spec.n2, r, kappa, gt_seed);
    const SensingOperator op = make_operator(spec, m, op_seed);
    SolverConfig cfg;
    cfg.method = method;
    cfg.mu = spec.mu;
    cfg.max_iters = spec.max_iters;
    cfg.stop_tol = spec.success_threshold;
    cfg.record_spectral = false;
    const IterateTrace trace = run(gt, op, cfg);
    TrialOutcome out;
    if (!trace.failed && !trace.records.empty() &&
        trace.records.back().fro_rel <= spec.success_threshold) {
        out.succeeded = true;
        out.iterations = static_cast<double>(trace.records.back().iter);
        out.wall_nanos = static_cast<double>(trace.records.back().wall_nanos);
    }
    return out;
}

} // namespace

ConvergenceResult run_convergence(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.kind != ExperimentKind::Convergence)
        throw ConfigError("kind", "run_convergence requires kind=convergence");
    std::filesystem::create_directories(spec.out_dir);

    const std::size_t r = spec.r_values.front();
    const std::size_t m = spec.m_values.front();
    const double kappa = spec.kappa_values.front();
    const std::uint64_t gt_seed = seed_derivation(spec.master_seed, {{"converge_gt", 0}});
    const std::uint64_t op_seed = seed_derivation(spec.master_seed, {{"converge_op", 0}});

    const GroundTruth gt = generate_ground_truth(spec.n1, spec.n2, r, kappa, gt_seed);
    const SensingOperator op = make_operator(spec, m, op_seed);

    ConvergenceResult result;
    std::vector<IterateTrace> traces(spec.methods.size());
    parallel_for(spec.methods.size(), spec.threads, [&](std::size_t i) {
        SolverConfig cfg;
        cfg.method = spec.methods[i];
        cfg.mu = spec.mu;
        cfg.max_iters = spec.max_iters;
        cfg.stop_tol = spec.success_threshold;
        cfg.record_dist = spec.record_dist;
        traces[i] = run(gt, op, cfg);
    });

    for (std::size_t i = 0; i < spec.methods.size(); ++i) {
        if (traces[i].failed) result.any_failed = true;
        const std::string path =
            (std::filesystem::path(spec.out_dir) /
             ("convergence_" + method_name(spec.methods[i]) + ".csv"))
                .string();
        std::ofstream os(path, std::ios::binary);
        write_trace_csv(os, traces[i], spec.include_timing);
        result.csv_paths.push_back(path);
    }

    // Combined CSV keyed by (method, iter).
    const std::string combined =
        (std::filesystem::path(spec.out_dir) / "convergence_combined.csv").string();
    {
        std::ofstream os(combined, std::ios::binary);
        os << "method,iter,fro_rel,spec_abs,dist,contraction_ratio";
        if (spec.include_timing) os << ",wall_nanos";
        os << "\n";
        for (std::size_t i = 0; i < spec.methods.size(); ++i) {
            for (const IterateRecord& rec : traces[i].records) {
                os << method_name(spec.methods[i]) << ',' << rec.iter << ','
                   << format_double(rec.fro_rel) << ',';
                if (rec.spec_abs) os << format_double(*rec.spec_abs);
                os << ',';
                if (rec.dist_val) os << format_double(*rec.dist_val);
                os << ',';
                if (rec.contraction_ratio) os << format_double(*rec.contraction_ratio);
                if (spec.include_timing) os << ',' << rec.wall_nanos;
                os << "\n";
            }
        }
    }
    result.csv_paths.push_back(combined);
    write_manifest(spec, {op.header()}, {""});
    // Per-iteration cost classes of each method, recorded next to the traces.
    {
        std::ostringstream os;
        for (Method m : spec.methods) {
            os << method_name(m) << "=";
            const auto classes = step_cost_classes(m);
            for (std::size_t i = 0; i < classes.size(); ++i)
                os << (i ? "+" : "") << classes[i];
            os << "\n";
        }
        write_file((std::filesystem::path(spec.out_dir) / "cost_classes.txt").string(),
                   os.str());
    }
    return result;
}

KappaSweepResult run_kappa_sweep(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.kind != ExperimentKind::KappaSweep)
        throw ConfigError("kind", "run_kappa_sweep requires kind=kappa-sweep");
    std::filesystem::create_directories(spec.out_dir);

    const std::size_t r = spec.r_values.front();
    const std::size_t m = spec.m_values.front();

    struct Row {
        Method method;
        double kappa;
        TrialOutcome outcome;
    };
    std::vector<Row> rows(spec.methods.size() * spec.kappa_values.size());
    std::vector<OperatorHeader> headers(spec.kappa_values.size());

    parallel_for(rows.size(), spec.threads, [&](std::size_t idx) {
        const std::size_t mi = idx / spec.kappa_values.size();
        const std::size_t ki = idx % spec.kappa_values.size();
        const double kappa = spec.kappa_values[ki];
        const std::uint64_t kmilli = static_cast<std::uint64_t>(std::llround(kappa * 1000.0));
        const std::uint64_t gt_seed =
            seed_derivation(spec.master_seed, {{"sweep_gt", kmilli}});
        const std::uint64_t op_seed =
            seed_derivation(spec.master_seed, {{"sweep_op", kmilli}});
        rows[idx] = {spec.methods[mi], kappa,
                     run_single_trial(spec, spec.methods[mi], r, m, kappa, gt_seed, op_seed)};
        if (mi == 0)
            headers[ki] = OperatorHeader{spec.n1, spec.n2, m, op_seed, resolve_backend(spec, m)};
    });

    KappaSweepResult result;
    result.csv_path = (std::filesystem::path(spec.out_dir) / "kappa_sweep.csv").string();
    std::ofstream os(result.csv_path, std::ios::binary);
    os << "method,kappa,iterations_to_threshold,succeeded";
    if (spec.include_timing) os << ",wall_nanos";
    os << "\n";
    for (const Row& row : rows) {
        if (!row.outcome.succeeded) result.any_failed = true;
        os << method_name(row.method) << ',' << format_double(row.kappa) << ',';
        if (row.outcome.succeeded) os << static_cast<std::size_t>(row.outcome.iterations);
        os << ',' << (row.outcome.succeeded ? "true" : "false");
        if (spec.include_timing)
            os << ',' << static_cast<std::uint64_t>(row.outcome.wall_nanos);
        os << "\n";
    }
    os.close();

    std::vector<std::string> labels;
    for (double k : spec.kappa_values) labels.push_back("kappa=" + format_double(k));
    write_manifest(spec, headers, labels);
    return result;
}

PhaseDiagramResult run_phase_diagram(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.kind != ExperimentKind::PhaseDiagram)
        throw ConfigError("kind", "run_phase_diagram requires kind=phase-diagram");
    std::filesystem::create_directories(spec.out_dir);

    const Method method = spec.methods.front();
    const double kappa = spec.kappa_values.front();
    const std::size_t nr = spec.r_values.size();
    const std::size_t nm = spec.m_values.size();
    const std::size_t ntr = spec.trials;

    std::vector<TrialOutcome> outcomes(nr * nm * ntr);
    std::vector<OperatorHeader> headers;
    std::vector<std::string> header_labels;
    headers.reserve(nr * nm * ntr);
    header_labels.reserve(nr * nm * ntr);
    for (std::size_t ri = 0; ri < nr; ++ri)
        for (std::size_t mi = 0; mi < nm; ++mi)
            for (std::size_t t = 0; t < ntr; ++t) {
                const std::uint64_t op_seed = seed_derivation(
                    spec.master_seed, {{"cell_r", spec.r_values[ri]},
                                       {"cell_m", spec.m_values[mi]},
                                       {"trial", t},
                                       {"role", 1}});
                headers.push_back(OperatorHeader{spec.n1, spec.n2, spec.m_values[mi], op_seed,
                                                 resolve_backend(spec, spec.m_values[mi])});
                header_labels.push_back("r=" + std::to_string(spec.r_values[ri]) +
                                        " m=" + std::to_string(spec.m_values[mi]) +
                                        " trial=" + std::to_string(t));
            }

    parallel_for(outcomes.size(), spec.threads, [&](std::size_t idx) {
        const std::size_t t = idx % ntr;
        const std::size_t mi = (idx / ntr) % nm;
        const std::size_t ri = idx / (ntr * nm);
        const std::size_t r = spec.r_values[ri];
        const std::size_t m = spec.m_values[mi];
        const std::uint64_t gt_seed = seed_derivation(
            spec.master_seed, {{"cell_r", r}, {"cell_m", m}, {"trial", t}, {"role", 0}});
        const std::uint64_t op_seed = seed_derivation(
            spec.master_seed, {{"cell_r", r}, {"cell_m", m}, {"trial", t}, {"role", 1}});
        outcomes[idx] = run_single_trial(spec, method, r, m, kappa, gt_seed, op_seed);
    });

    PhaseDiagramResult result;
    for (std::size_t ri = 0; ri < nr; ++ri)
        for (std::size_t mi = 0; mi < nm; ++mi) {
            CellResult cell;
            cell.r = spec.r_values[ri];
            cell.m = spec.m_values[mi];
            cell.kappa = kappa;
            cell.trials = ntr;
            std::vector<double> iters, walls;
            for (std::size_t t = 0; t < ntr; ++t) {
                const TrialOutcome& o = outcomes[(ri * nm + mi) * ntr + t];
                if (o.succeeded) {
                    ++cell.success_count;
                    iters.push_back(o.iterations);
                    walls.push_back(o.wall_nanos);
                }
            }
            cell.median_iterations = median(iters);
            cell.median_wall_nanos = median(walls);
            result.cells.push_back(cell);
        }

    result.csv_path = (std::filesystem::path(spec.out_dir) / "phase_cells.csv").string();
    {
        std::ofstream os(result.csv_path, std::ios::binary);
        os << "r,m,success_count,trials,median_iterations";
        if (spec.include_timing) os << ",median_wall_nanos";
        os << "\n";
        for (const CellResult& c : result.cells) {
            os << c.r << ',' << c.m << ',' << c.success_count << ',' << c.trials << ',';
            if (!std::isnan(c.median_iterations)) os << format_double(c.median_iterations);
            if (spec.include_timing) {
                os << ',';
                if (!std::isnan(c.median_wall_nanos)) os << format_double(c.median_wall_nanos);
            }
            os << "\n";
        }
    }

    // 8-bit PGM: rows = descending m, cols = ascending r.
    result.pgm_path = (std::filesystem::path(spec.out_dir) / "phase_diagram.pgm").string();
    {
        std::vector<std::uint8_t> pixels(nr * nm);
        for (std::size_t mi = 0; mi < nm; ++mi) {
            const std::size_t row = nm - 1 - mi; // descending m downwards
            for (std::size_t ri = 0; ri < nr; ++ri) {
                const CellResult& c = result.cells[ri * nm + mi];
                const double frac =
                    static_cast<double>(c.success_count) / static_cast<double>(c.trials);
                pixels[row * nr + ri] = static_cast<std::uint8_t>(std::lround(255.0 * frac));
            }
        }
        std::ofstream os(result.pgm_path, std::ios::binary);
        write_pgm(os, nr, nm, pixels);
    }

    write_manifest(spec, headers, header_labels);
    return result;
}

VirtualAuditResult run_virtual_audit(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.kind != ExperimentKind::VirtualAudit)
        throw ConfigError("kind", "run_virtual_audit requires kind=virtual-audit");
    std::filesystem::create_directories(spec.out_dir);

    const std::size_t r = spec.r_values.front();
    const std::size_t m = spec.m_values.front();
    const double kappa = spec.kappa_values.front();
    const std::uint64_t gt_seed = seed_derivation(spec.master_seed, {{"audit_gt", 0}});
    const std::uint64_t op_seed = seed_derivation(spec.master_seed, {{"audit_op", 0}});
    const std::uint64_t dir_seed = seed_derivation(spec.master_seed, {{"audit_dirs", 0}});

    const GroundTruth gt = generate_ground_truth(spec.n1, spec.n2, r, kappa, gt_seed);
    const SensingOperator op = make_operator(spec, m, op_seed);
    const DirectionSample dirs = sample_directions(spec.n1, spec.n2, spec.direction_count, dir_seed);
    const std::size_t T = spec.max_iters > 0 ? spec.max_iters : horizon_T(spec.mu, r);
    ExperimentSpec resolved = spec;
    resolved.max_iters = T;

    const std::vector<FactorPair> real_traj = scaledgd_trajectory(gt, op, spec.mu, T);
    std::vector<std::vector<FactorPair>> virtual_trajs(dirs.count());
    parallel_for(dirs.count(), spec.threads, [&](std::size_t k) {
        virtual_trajs[k] = run_virtual(gt, op, dirs.directions[k], spec.mu, T);
    });

    const CoupledTrace coupled = coupled_diagnostics(real_traj, virtual_trajs, gt);
    const DecouplingReport dec = decoupling_audit(real_traj, virtual_trajs, op, dirs, gt);
    const ProjectionBoundReport proj = projection_bound_audit(real_traj, virtual_trajs, gt);

    VirtualAuditResult result;
    result.decoupling_violations = dec.violations;
    result.projection_violations = proj.violations;
    result.skipped_preconditions = proj.skipped;

    result.coupled_csv_path =
        (std::filesystem::path(spec.out_dir) / "coupled_trace.csv").string();
    {
        std::ofstream os(result.coupled_csv_path, std::ios::binary);
        write_coupled_trace_csv(os, coupled);
    }
    result.audit_csv_path = (std::filesystem::path(spec.out_dir) / "audit_report.csv").string();
    {
        std::ofstream os(result.audit_csv_path, std::ios::binary);
        write_audit_csv(os, dec, proj);
    }
    {
        std::ostringstream os;
        const std::size_t total = dec.checks + proj.checks;
        const std::size_t viols = dec.violations + proj.violations;
        os << "checks=" << total << " violations=" << viols
           << " skipped_preconditions=" << proj.skipped << "\n";
        write_file((std::filesystem::path(spec.out_dir) / "audit_summary.txt").string(),
                   os.str());
    }
    write_manifest(resolved, {op.header()}, {""});
    return result;
}

RipProbeResult run_rip_probe(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.kind != ExperimentKind::RipProbe)
        throw ConfigError("kind", "run_rip_probe requires kind=rip-probe");
    std::filesystem::create_directories(spec.out_dir);

    const std::size_t m = spec.m_values.empty() ? spec.n1 * spec.n2 : spec.m_values.front();
    const std::uint64_t op_seed = seed_derivation(spec.master_seed, {{"rip_op", 0}});
    const std::uint64_t probe_seed = seed_derivation(spec.master_seed, {{"rip_probe", 0}});
    const SensingOperator op = make_operator(spec, m, op_seed);

    RipProbeResult result;
    result.csv_path = (std::filesystem::path(spec.out_dir) / "rip_probe.csv").string();
    std::ofstream os(result.csv_path, std::ios::binary);
    os << "trials,running_max\n";
    double running = 0.0;
    // Running max is monotone in the trial count by construction; emit a few
    // checkpoints along the way.
    const std::size_t checkpoints[] = {1, 10, 50, 100, 250, 500, 1000};
    std::size_t last = 0;
    for (std::size_t cp : checkpoints) {
        if (cp > spec.rip_trials) break;
        running = std::max(running, op.estimate_rip(spec.rip_rank, cp, probe_seed));
        os << cp << ',' << format_double(running) << "\n";
        last = cp;
    }
    if (last < spec.rip_trials) {
        running = std::max(running, op.estimate_rip(spec.rip_rank, spec.rip_trials, probe_seed));
        os << spec.rip_trials << ',' << format_double(running) << "\n";
    }
    result.estimate = running;
    os.close();
    write_manifest(spec, {op.header()}, {""});
    return result;
}

} // namespace lrx
