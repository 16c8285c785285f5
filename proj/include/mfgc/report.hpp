#pragma once

// Run artifacts and their loaders: solution CSVs, the solve report JSON,
// and the particle comparison report.  Every file is written atomically
// (temp + rename), so a killed run never leaves a half-written artifact
// that parses.  Numbers are printed with %.17g and therefore round-trip
// exactly: reloading a solution and re-running the checks reproduces the
// original table byte for byte.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfgc/config.hpp"
#include "mfgc/coupler.hpp"
#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/measures.hpp"
#include "mfgc/particles.hpp"

namespace mfgc {

inline void write_file_atomic(const std::string& path,
                              const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ConfigError("cannot open " + tmp + " for writing");
        out.write(content.data(),
                  static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out.good()) throw ConfigError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ConfigError("cannot move " + tmp + " over " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string field_path_csv(const FieldPath& path, const TimeMesh& mesh,
                                  const Grid1D& grid, const char* header) {
    std::string out = header;
    out += '\n';
    for (std::size_t k = 0; k < path.size(); ++k)
        for (std::size_t i = 0; i < path[k].size(); ++i) {
            detail::append_number(out, mesh.time(k));
            out += ',';
            detail::append_number(out, grid.node(i));
            out += ',';
            detail::append_number(out, path[k][i]);
            out += '\n';
        }
    return out;
}

inline std::string mu_path_csv(const std::vector<ControlMeasure>& mu,
                               const TimeMesh& mesh) {
    std::string out = "t,x,alpha,w\n";
    for (std::size_t k = 0; k < mu.size(); ++k)
        for (const auto& a : mu[k].atoms) {
            detail::append_number(out, mesh.time(k));
            out += ',';
            detail::append_number(out, a.x);
            out += ',';
            detail::append_number(out, a.alpha);
            out += ',';
            detail::append_number(out, a.w);
            out += '\n';
        }
    return out;
}

namespace detail {

inline std::vector<double> parse_csv_row(const std::string& line,
                                         std::size_t n_cols,
                                         const std::string& where) {
    std::vector<double> out;
    out.reserve(n_cols);
    const char* p = line.c_str();
    for (std::size_t c = 0; c < n_cols; ++c) {
        char* end = nullptr;
        double v = std::strtod(p, &end);
        if (end == p)
            throw ConfigError(where + ": malformed row \"" + line + "\"");
        out.push_back(v);
        p = end;
        if (c + 1 < n_cols) {
            if (*p != ',')
                throw ConfigError(where + ": expected comma in \"" + line +
                                  "\"");
            ++p;
        }
    }
    if (*p != '\0' && *p != '\r')
        throw ConfigError(where + ": trailing characters in \"" + line +
                          "\"");
    return out;
}

/// Strict CSV body reader: exact header, exact row count, fixed width.
inline std::vector<std::vector<double>> parse_csv(const std::string& text,
                                                  const std::string& header,
                                                  std::size_t n_cols,
                                                  std::size_t n_rows,
                                                  const std::string& where) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError(where + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header)
        throw ConfigError(where + ": expected header \"" + header +
                          "\", got \"" + line + "\"");
    std::vector<std::vector<double>> rows;
    rows.reserve(n_rows);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(parse_csv_row(line, n_cols, where));
    }
    if (rows.size() != n_rows)
        throw ConfigError(where + ": expected " + std::to_string(n_rows) +
                          " rows, found " + std::to_string(rows.size()));
    return rows;
}

}  // namespace detail

inline FieldPath load_field_csv(const std::string& text, const TimeMesh& mesh,
                                const Grid1D& grid, const std::string& header,
                                const std::string& where) {
    const std::size_t nn = grid.n_nodes();
    auto rows = detail::parse_csv(text, header, 3, mesh.n_levels() * nn,
                                  where);
    FieldPath path(mesh.n_levels(), ScalarField(nn));
    for (std::size_t k = 0; k < mesh.n_levels(); ++k)
        for (std::size_t i = 0; i < nn; ++i) {
            const auto& row = rows[k * nn + i];
            if (row[0] != mesh.time(k) || row[1] != grid.node(i))
                throw ConfigError(where + ": row coordinates disagree with "
                                          "the declared meshes");
            path[k][i] = row[2];
        }
    return path;
}

inline std::vector<ControlMeasure> load_mu_csv(const std::string& text,
                                               const TimeMesh& mesh,
                                               const Grid1D& grid,
                                               const std::string& where) {
    const std::size_t nn = grid.n_nodes();
    auto rows = detail::parse_csv(text, "t,x,alpha,w", 4,
                                  mesh.n_levels() * nn, where);
    std::vector<ControlMeasure> mu(mesh.n_levels());
    for (std::size_t k = 0; k < mesh.n_levels(); ++k) {
        mu[k].atoms.reserve(nn);
        for (std::size_t i = 0; i < nn; ++i) {
            const auto& row = rows[k * nn + i];
            if (row[0] != mesh.time(k) || row[1] != grid.node(i))
                throw ConfigError(where + ": row coordinates disagree with "
                                          "the declared meshes");
            mu[k].atoms.push_back({row[1], row[2], row[3]});
        }
    }
    return mu;
}

inline ConfigJson stage_json(const StageReport& stage) {
    ConfigJson j;
    j["scale"] = stage.scale;
    j["iterations"] = stage.iterations;
    j["converged"] = stage.converged;
    j["residuals"] = stage.residuals;
    return j;
}

inline ConfigJson solve_report_json(const LabConfig& cfg,
                                    const SolveReport& report, double scale) {
    ConfigJson j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "solve_report";
    j["config"] = config_to_json(cfg);
    j["converged"] = report.converged;
    j["scale"] = scale;
    j["final_residual"] = report.final_residual;
    j["total_iterations"] = report.total_iterations;
    j["max_mu_iterations"] = report.max_mu_iterations;
    j["max_mu_ratio"] = report.max_mu_ratio;
    j["max_drift"] = report.max_drift;
    ConfigJson stages = ConfigJson::array();
    for (const auto& s : report.stages) stages.push_back(stage_json(s));
    j["stages"] = std::move(stages);
    return j;
}

/// Report for a run that threw before producing a solution.
inline ConfigJson failure_report_json(const LabConfig& cfg,
                                      const std::string& message,
                                      const std::vector<double>& residuals) {
    ConfigJson j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "solve_report";
    j["config"] = config_to_json(cfg);
    j["converged"] = false;
    j["error"] = message;
    j["residuals"] = residuals;
    return j;
}

inline void write_solution_dir(const std::string& dir, const LabConfig& cfg,
                               const Solution& sol) {
    const Grid1D grid = Grid1D::make(cfg.model.x_lo, cfg.model.x_hi,
                                     cfg.model.n_cells, cfg.model.boundary);
    write_file_atomic(dir + "/report.json",
                      solve_report_json(cfg, sol.report, sol.scale).dump(2) +
                          "\n");
    write_file_atomic(dir + "/u.csv",
                      field_path_csv(sol.u, sol.mesh, grid, "t,x,u"));
    write_file_atomic(dir + "/m.csv",
                      field_path_csv(sol.m, sol.mesh, grid, "t,x,m"));
    write_file_atomic(dir + "/mu.csv", mu_path_csv(sol.mu, sol.mesh));
}

/// Rebuilds the configuration a solve ran with from its report, through
/// the same strict parser the original config went through.
inline LabConfig load_config_from_report(const std::string& dir) {
    ConfigJson j;
    try {
        j = ConfigJson::parse(read_file(dir + "/report.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(dir + "/report.json: not valid JSON: " + e.what());
    }
    if (!j.is_object() || j.find("config") == j.end())
        throw ConfigError(dir + "/report.json: missing embedded config");
    return parse_config(j["config"].dump());
}

inline bool report_converged(const std::string& dir) {
    ConfigJson j;
    try {
        j = ConfigJson::parse(read_file(dir + "/report.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(dir + "/report.json: not valid JSON: " + e.what());
    }
    auto it = j.find("converged");
    if (it == j.end() || !it->is_boolean())
        throw ConfigError(dir + "/report.json: missing converged flag");
    return it->get<bool>();
}

inline Solution load_solution_dir(const std::string& dir,
                                  const LabConfig& cfg) {
    Solution sol;
    sol.mesh =
        TimeMesh::make(cfg.solver.horizon, cfg.solver.n_time_steps);
    const Grid1D grid = Grid1D::make(cfg.model.x_lo, cfg.model.x_hi,
                                     cfg.model.n_cells, cfg.model.boundary);
    sol.u = load_field_csv(read_file(dir + "/u.csv"), sol.mesh, grid, "t,x,u",
                           dir + "/u.csv");
    sol.m = load_field_csv(read_file(dir + "/m.csv"), sol.mesh, grid, "t,x,m",
                           dir + "/m.csv");
    sol.mu = load_mu_csv(read_file(dir + "/mu.csv"), sol.mesh, grid,
                         dir + "/mu.csv");
    sol.scale = 1.0;
    sol.report.converged = report_converged(dir);
    return sol;
}

inline std::string empirical_crowd_csv(const std::vector<DiscreteMeasure>& ms,
                                       const TimeMesh& mesh) {
    std::string out = "t,x,w\n";
    for (std::size_t k = 0; k < ms.size(); ++k)
        for (const auto& a : ms[k].atoms) {
            detail::append_number(out, mesh.time(k));
            out += ',';
            detail::append_number(out, a.x);
            out += ',';
            detail::append_number(out, a.w);
            out += '\n';
        }
    return out;
}

struct ParticleComparison {
    std::size_t n_particles = 0;
    std::size_t n_substeps = 1;
    std::uint64_t seed = 0;
    double final_crowd_distance = 0.0;
    double crowd_tolerance = 0.0;
    bool dirichlet = false;
    double absorbed_fraction = 0.0;
    double pde_survival = 1.0;
    double absorbed_error = 0.0;
    double absorbed_tolerance = 0.0;
    bool within_tolerance = false;
};

/// Runs the oracle against a loaded solution and scores the comparison.
inline ParticleComparison compare_particles(
    const ModelSpec& spec, const Solution& sol, std::size_t n_particles,
    std::size_t n_substeps, std::uint64_t seed,
    std::vector<ParticleEnsemble>* path_out = nullptr,
    std::vector<DiscreteMeasure>* crowd_out = nullptr) {
    ParticleComparison cmp;
    cmp.n_particles = n_particles;
    cmp.n_substeps = n_substeps;
    cmp.seed = seed;
    auto path = simulate(spec, sol, n_particles, n_substeps, seed);
    auto [crowd, controls] = empirical_measures(path, sol, spec.grid);

    const double h = spec.grid.h;
    const double dt = sol.mesh.dt;
    const double dt_sub = dt / static_cast<double>(n_substeps);
    const ToleranceCurve curve;
    cmp.final_crowd_distance =
        dstar(crowd.back(), measure_from_field(spec.grid, sol.m.back()));
    cmp.crowd_tolerance = crowd_tolerance(curve, n_particles, h, dt);
    cmp.dirichlet = spec.grid.boundary == Boundary::Dirichlet;
    if (cmp.dirichlet) {
        // Lost mass shifts the flat distance too, so the crowd budget
        // widens by the calibrated absorption bias.
        cmp.crowd_tolerance += curve.c_bias * std::sqrt(spec.nu * dt_sub);
        cmp.absorbed_fraction = 1.0 - path.back().live_fraction();
        cmp.pde_survival = integrate(spec.grid, sol.m.back());
        cmp.absorbed_error =
            std::abs(cmp.absorbed_fraction - (1.0 - cmp.pde_survival));
        cmp.absorbed_tolerance = absorbed_tolerance(
            curve, cmp.pde_survival, n_particles, spec.nu, dt_sub, h, dt);
    }
    cmp.within_tolerance =
        cmp.final_crowd_distance <= cmp.crowd_tolerance &&
        (!cmp.dirichlet || cmp.absorbed_error <= cmp.absorbed_tolerance);
    if (path_out) *path_out = std::move(path);
    if (crowd_out) *crowd_out = std::move(crowd);
    return cmp;
}

inline ConfigJson particle_report_json(const ParticleComparison& cmp) {
    ConfigJson j;
    j["schema_version"] = kSchemaVersion;
    j["kind"] = "particle_report";
    j["n_particles"] = cmp.n_particles;
    j["n_substeps"] = cmp.n_substeps;
    j["seed"] = cmp.seed;
    j["final_crowd_distance"] = cmp.final_crowd_distance;
    j["crowd_tolerance"] = cmp.crowd_tolerance;
    if (cmp.dirichlet) {
        j["absorbed_fraction"] = cmp.absorbed_fraction;
        j["pde_survival"] = cmp.pde_survival;
        j["absorbed_error"] = cmp.absorbed_error;
        j["absorbed_tolerance"] = cmp.absorbed_tolerance;
    }
    j["within_tolerance"] = cmp.within_tolerance;
    return j;
}

}  // namespace mfgc
