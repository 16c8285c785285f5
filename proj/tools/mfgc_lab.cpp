// mfgc_lab: config-driven experiment runner for the coupled solver.
//
//   solve CONFIG     run the continuation solve, write solution CSVs and
//                    a report JSON into the output directory
//   verify DIR       re-run the bound-check suite on a saved solution,
//                    write the check table as CSV and JSON
//   particles DIR    Monte Carlo oracle comparison against a saved run
//   sweep CONFIG     solve + verify across a parameter grid, one long CSV
//
// Exit codes: 0 success; 1 malformed config or missing/corrupt files;
// 2 model rejected by an assumption check; 3 solver non-convergence
// (report still written); 4 checks or comparison out of tolerance.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "mfgc/config.hpp"
#include "mfgc/coupler.hpp"
#include "mfgc/errors.hpp"
#include "mfgc/estimates.hpp"
#include "mfgc/particles.hpp"
#include "mfgc/report.hpp"

namespace {

using namespace mfgc;

int run_solve(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    LabConfig cfg = parse_config(read_file(config_path));
    if (seed) cfg.solver.seed = *seed;
    ModelSpec spec = cfg.model.build();
    SolverConfig sc = cfg.solver_for(spec);
    validate_config(spec, sc);
    std::filesystem::create_directories(out_dir);
    try {
        Solution sol = solve(spec, sc);
        write_solution_dir(out_dir, cfg, sol);
        for (const auto& stage : sol.report.stages)
            std::cout << "stage " << stage.scale << ": " << stage.iterations
                      << " iterations\n";
        std::cout << "converged in " << sol.report.total_iterations
                  << " outer iterations, final residual "
                  << sol.report.final_residual << "\n"
                  << "report: " << out_dir << "/report.json\n";
        return 0;
    } catch (const NonConvergenceError& e) {
        write_file_atomic(
            out_dir + "/report.json",
            failure_report_json(cfg, e.what(), e.history()).dump(2) + "\n");
        std::cerr << "non-convergence: " << e.what() << "\n"
                  << "report: " << out_dir << "/report.json\n";
        return 3;
    }
}

int run_verify(const std::string& dir) {
    LabConfig cfg = load_config_from_report(dir);
    ModelSpec spec = cfg.model.build();
    Solution sol = load_solution_dir(dir, cfg);
    auto checks = run_suite(sol, spec);
    write_file_atomic(dir + "/checks.csv", to_csv(checks));
    write_file_atomic(dir + "/checks.json", to_json(checks));
    bool all_ok = true;
    for (const auto& c : checks) {
        std::cout << (c.satisfied ? "  ok   " : "  FAIL ") << c.name
                  << "  lhs=" << c.lhs << " rhs=" << c.rhs << "\n";
        all_ok = all_ok && c.satisfied;
    }
    std::cout << "check table: " << dir << "/checks.csv\n";
    return all_ok ? 0 : 4;
}

int run_particles(const std::string& dir, std::size_t n_particles,
                  std::size_t n_substeps, std::optional<std::uint64_t> seed) {
    LabConfig cfg = load_config_from_report(dir);
    ModelSpec spec = cfg.model.build();
    Solution sol = load_solution_dir(dir, cfg);
    std::uint64_t s = seed ? *seed : cfg.solver.seed;

    std::vector<ParticleEnsemble> path;
    std::vector<DiscreteMeasure> crowd;
    ParticleComparison cmp =
        compare_particles(spec, sol, n_particles, n_substeps, s, &path,
                          &crowd);
    write_file_atomic(dir + "/particle_report.json",
                      particle_report_json(cmp).dump(2) + "\n");
    write_file_atomic(dir + "/empirical_crowd.csv",
                      empirical_crowd_csv(crowd, sol.mesh));
    // Full trajectories only at desk scale; at oracle scale the file
    // would dwarf every other artifact combined.
    if (n_particles <= 10000)
        write_file_atomic(dir + "/particles.csv",
                          particles_csv(path, sol.mesh));
    std::cout << "crowd distance " << cmp.final_crowd_distance
              << " (tolerance " << cmp.crowd_tolerance << ")\n";
    if (cmp.dirichlet)
        std::cout << "absorbed fraction " << cmp.absorbed_fraction
                  << " vs pde " << 1.0 - cmp.pde_survival << " (tolerance "
                  << cmp.absorbed_tolerance << ")\n";
    std::cout << "report: " << dir << "/particle_report.json\n";
    return cmp.within_tolerance ? 0 : 4;
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

struct SweepPoint {
    double kappa = 0.0;
    double horizon = 0.0;
    Boundary boundary = Boundary::Neumann;
};

struct SweepOutcome {
    bool converged = false;
    std::string error;
    std::vector<BoundCheck> checks;
};

int run_sweep(const std::string& config_path, const std::string& out_dir,
              std::size_t n_threads) {
    LabConfig base = parse_config(read_file(config_path));
    if (!base.has_sweep)
        throw ConfigError("sweep: config declares no sweep section");
    std::vector<double> kappas = base.sweep.kappas.empty()
                                     ? std::vector<double>{base.model.kappa}
                                     : base.sweep.kappas;
    std::vector<double> horizons =
        base.sweep.horizons.empty()
            ? std::vector<double>{base.solver.horizon}
            : base.sweep.horizons;
    std::vector<Boundary> boundaries =
        base.sweep.boundaries.empty()
            ? std::vector<Boundary>{base.model.boundary}
            : base.sweep.boundaries;

    std::vector<SweepPoint> points;
    for (double k : kappas)
        for (double T : horizons)
            for (Boundary b : boundaries) points.push_back({k, T, b});

    std::vector<SweepOutcome> outcomes(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= points.size()) return;
            LabConfig cfg = base;
            cfg.has_sweep = false;
            cfg.model.kappa = points[i].kappa;
            cfg.solver.horizon = points[i].horizon;
            cfg.model.boundary = points[i].boundary;
            try {
                ModelSpec spec = cfg.model.build();
                Solution sol = solve(spec, cfg.solver_for(spec));
                outcomes[i].converged = true;
                outcomes[i].checks = run_suite(sol, spec);
            } catch (const Error& e) {
                outcomes[i].error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    std::size_t spawn = std::min(n_threads, points.size());
    for (std::size_t t = 1; t < spawn; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::string csv =
        "point,kappa,horizon,boundary,converged,error,name,anchor,lhs,rhs,"
        "margin,satisfied\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::string prefix = std::to_string(i);
        prefix += ',';
        detail::append_number(prefix, points[i].kappa);
        prefix += ',';
        detail::append_number(prefix, points[i].horizon);
        prefix += ',';
        prefix += points[i].boundary == Boundary::Neumann ? "neumann"
                                                          : "dirichlet";
        prefix += ',';
        prefix += outcomes[i].converged ? '1' : '0';
        prefix += ',';
        if (!outcomes[i].error.empty()) {
            csv += prefix + csv_quote(outcomes[i].error) + ",,,,,,\n";
            continue;
        }
        for (const auto& c : outcomes[i].checks) {
            csv += prefix;
            csv += ',';
            csv += c.name;
            csv += ',';
            csv += c.anchor;
            csv += ',';
            detail::append_number(csv, c.lhs);
            csv += ',';
            detail::append_number(csv, c.rhs);
            csv += ',';
            detail::append_number(csv, c.margin);
            csv += c.satisfied ? ",1\n" : ",0\n";
        }
    }
    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir + "/sweep.csv", csv);
    std::size_t failures = 0;
    for (const auto& o : outcomes)
        if (!o.error.empty() || !o.converged) ++failures;
    std::cout << points.size() << " points, " << failures
              << " failed; table: " << out_dir << "/sweep.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for mean field games of controls"};
    app.require_subcommand(1);

    std::string config_path;
    std::string dir;
    std::string out_dir = "out";
    std::size_t n_particles = 100000;
    std::size_t n_substeps = 4;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;

    CLI::App* c_solve = app.add_subcommand("solve", "run the coupled solver");
    c_solve->add_option("config", config_path, "configuration file")
        ->required();
    c_solve->add_option("--out", out_dir, "output directory");
    c_solve->add_option("--seed", seed, "override the config seed");

    CLI::App* c_verify =
        app.add_subcommand("verify", "re-run bound checks on a saved run");
    c_verify->add_option("dir", dir, "solve output directory")->required();

    CLI::App* c_particles = app.add_subcommand(
        "particles", "Monte Carlo oracle comparison on a saved run");
    c_particles->add_option("dir", dir, "solve output directory")->required();
    c_particles->add_option("-n,--particles", n_particles, "ensemble size");
    c_particles->add_option("--substeps", n_substeps,
                            "Euler substeps per solver step");
    c_particles->add_option("--seed", seed, "override the config seed");

    CLI::App* c_sweep =
        app.add_subcommand("sweep", "solve + verify over a parameter grid");
    c_sweep->add_option("config", config_path, "configuration file")
        ->required();
    c_sweep->add_option("--out", out_dir, "output directory");
    c_sweep->add_option("--threads", threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (c_solve->parsed()) return run_solve(config_path, out_dir, seed);
        if (c_verify->parsed()) return run_verify(dir);
        if (c_particles->parsed())
            return run_particles(dir, n_particles, n_substeps, seed);
        if (c_sweep->parsed()) {
            std::size_t n = 1;
            if (threads) {
                n = *threads;
            } else if (const char* env = std::getenv("MFGC_LAB_THREADS")) {
                char* end = nullptr;
                unsigned long v = std::strtoul(env, &end, 10);
                if (end == env || *end != '\0' || v == 0)
                    throw ConfigError(
                        "MFGC_LAB_THREADS must be a positive integer");
                n = static_cast<std::size_t>(v);
            }
            if (n == 0) throw ConfigError("--threads must be positive");
            return run_sweep(config_path, out_dir, n);
        }
    } catch (const SpecRejectedError& e) {
        std::cerr << "model rejected: assumption " << e.assumption()
                  << " violated: " << e.what() << "\n";
        return 2;
    } catch (const NonConvergenceError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
