#pragma once

// Experiment configuration: one JSON document declares the model family,
// its data, the solver settings, and optionally a sweep grid.  Parsing is
// strict at every nesting level: an unknown key is an error, not a
// warning, because a silently ignored typo (say "dampling") would run a
// different experiment than the one the file claims to describe.
//
// The parsed form keeps field data symbolic (waveform kind, amplitude,
// phase) rather than sampled, so the same configuration can be rebuilt on
// any grid size and any boundary kind during sweeps and refinement runs.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "json.hpp"

#include "mfgc/coupler.hpp"
#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/model.hpp"

namespace mfgc {

using ConfigJson = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Symbolic scalar field on the unit-normalized domain coordinate.
struct FieldSpec {
    enum class Kind { Zero, Constant, Cosine, SinePair };
    Kind kind = Kind::Zero;
    double value = 0.0;
    double amplitude = 0.0;
    int waves = 1;
    double phase = 0.0;

    ScalarField sample(const Grid1D& grid) const {
        constexpr double pi = 3.14159265358979323846;
        ScalarField f(grid.n_nodes(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            double xh = (grid.node(i) - grid.x_lo) / grid.width();
            switch (kind) {
                case Kind::Zero:
                    break;
                case Kind::Constant:
                    f[i] = value;
                    break;
                case Kind::Cosine:
                    f[i] = amplitude * std::cos(2.0 * pi * waves * xh + phase);
                    break;
                case Kind::SinePair:
                    // Vanishes at both walls, asymmetric so the mean-control
                    // channel stays exercised under absorbing boundaries.
                    f[i] = amplitude * (std::sin(pi * xh) +
                                        0.5 * std::sin(2.0 * pi * xh));
                    break;
            }
        }
        return f;
    }
};

/// Initial crowd shapes.  Sampled explicitly so absorbing walls get a
/// concrete density instead of relying on the solver's uniform default.
struct CrowdSpec {
    enum class Kind { Uniform, SineBump };
    Kind kind = Kind::Uniform;

    ScalarField sample(const Grid1D& grid) const {
        constexpr double pi = 3.14159265358979323846;
        ScalarField m0(grid.n_nodes());
        if (kind == Kind::Uniform) {
            m0.assign(grid.n_nodes(), 1.0 / grid.width());
            return m0;
        }
        for (std::size_t i = 0; i < m0.size(); ++i) {
            double xh = (grid.node(i) - grid.x_lo) / grid.width();
            m0[i] = std::sin(pi * xh);
        }
        double mass = integrate(grid, m0);
        for (double& v : m0) v /= mass;
        return m0;
    }
};

/// Everything needed to instantiate a ModelSpec at a chosen resolution.
struct ModelInputs {
    Variant family = Variant::P1Quadratic;
    Boundary boundary = Boundary::Neumann;
    double x_lo = 0.0;
    double x_hi = 1.0;
    std::size_t n_cells = 128;
    double kappa = 0.0;
    double nu = 0.1;
    double kernel_width = 0.1;
    double c_f = 0.0;
    double c_g = 0.0;
    double q0 = 2.0;
    FieldSpec potential;
    FieldSpec terminal;

    ModelSpec build() const {
        Grid1D grid = Grid1D::make(x_lo, x_hi, n_cells, boundary);
        ModelParams params;
        params.variant = family;
        params.kappa = kappa;
        params.nu = nu;
        params.kernel_width = kernel_width;
        params.c_f = c_f;
        params.c_g = c_g;
        params.q0 = q0;
        params.potential = potential.sample(grid);
        params.terminal_base = terminal.sample(grid);
        return ModelSpec::make(grid, params);
    }
};

/// Cartesian sweep axes; an absent axis collapses to the base value.
struct SweepAxes {
    std::vector<double> kappas;
    std::vector<double> horizons;
    std::vector<Boundary> boundaries;
};

struct LabConfig {
    ModelInputs model;
    SolverConfig solver;
    CrowdSpec crowd;
    bool has_sweep = false;
    SweepAxes sweep;

    /// Solver settings with the crowd sampled and the family matched.
    SolverConfig solver_for(const ModelSpec& spec) const {
        SolverConfig c = solver;
        c.problem = spec.variant == Variant::P1Quadratic ? ProblemKind::P1
                                                         : ProblemKind::P2;
        c.m0 = crowd.sample(spec.grid);
        return c;
    }
};

namespace detail {

[[noreturn]] inline void config_fail(const std::string& where,
                                     const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

inline void check_keys(const ConfigJson& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) config_fail(where, "expected an object");
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known) config_fail(where, "unknown key \"" + item.key() + "\"");
    }
}

inline const ConfigJson& member(const ConfigJson& obj,
                                const std::string& where,
                                const std::string& key) {
    auto it = obj.find(key);
    if (it == obj.end()) config_fail(where, "missing key \"" + key + "\"");
    return *it;
}

inline double get_number(const ConfigJson& obj, const std::string& where,
                         const std::string& key) {
    const ConfigJson& v = member(obj, where, key);
    if (!v.is_number()) config_fail(where, "\"" + key + "\" must be a number");
    return v.get<double>();
}

inline double get_number_or(const ConfigJson& obj, const std::string& where,
                            const std::string& key, double fallback) {
    if (obj.find(key) == obj.end()) return fallback;
    return get_number(obj, where, key);
}

inline std::size_t get_count(const ConfigJson& obj, const std::string& where,
                             const std::string& key) {
    const ConfigJson& v = member(obj, where, key);
    if (!v.is_number_unsigned())
        config_fail(where, "\"" + key + "\" must be a nonnegative integer");
    return v.get<std::size_t>();
}

inline std::size_t get_count_or(const ConfigJson& obj,
                                const std::string& where,
                                const std::string& key, std::size_t fallback) {
    if (obj.find(key) == obj.end()) return fallback;
    return get_count(obj, where, key);
}

inline std::string get_string(const ConfigJson& obj, const std::string& where,
                              const std::string& key) {
    const ConfigJson& v = member(obj, where, key);
    if (!v.is_string()) config_fail(where, "\"" + key + "\" must be a string");
    return v.get<std::string>();
}

inline Boundary parse_boundary(const std::string& s,
                               const std::string& where) {
    if (s == "neumann") return Boundary::Neumann;
    if (s == "dirichlet") return Boundary::Dirichlet;
    config_fail(where, "boundary must be \"neumann\" or \"dirichlet\", got \"" +
                           s + "\"");
}

inline Variant parse_family(const std::string& s, const std::string& where) {
    if (s == "p1_quadratic") return Variant::P1Quadratic;
    if (s == "p2_monotone") return Variant::P2Monotone;
    config_fail(where,
                "family must be \"p1_quadratic\" or \"p2_monotone\", got \"" +
                    s + "\"");
}

inline FieldSpec parse_field(const ConfigJson& obj, const std::string& where) {
    FieldSpec f;
    std::string kind = get_string(obj, where, "kind");
    if (kind == "zero") {
        check_keys(obj, where, {"kind"});
        f.kind = FieldSpec::Kind::Zero;
    } else if (kind == "constant") {
        check_keys(obj, where, {"kind", "value"});
        f.kind = FieldSpec::Kind::Constant;
        f.value = get_number(obj, where, "value");
    } else if (kind == "cosine") {
        check_keys(obj, where, {"kind", "amplitude", "waves", "phase"});
        f.kind = FieldSpec::Kind::Cosine;
        f.amplitude = get_number(obj, where, "amplitude");
        f.waves = static_cast<int>(get_count_or(obj, where, "waves", 1));
        f.phase = get_number_or(obj, where, "phase", 0.0);
    } else if (kind == "sine_pair") {
        check_keys(obj, where, {"kind", "amplitude"});
        f.kind = FieldSpec::Kind::SinePair;
        f.amplitude = get_number(obj, where, "amplitude");
    } else {
        config_fail(where, "unknown field kind \"" + kind + "\"");
    }
    return f;
}

inline ConfigJson field_to_json(const FieldSpec& f) {
    ConfigJson j;
    switch (f.kind) {
        case FieldSpec::Kind::Zero:
            j["kind"] = "zero";
            break;
        case FieldSpec::Kind::Constant:
            j["kind"] = "constant";
            j["value"] = f.value;
            break;
        case FieldSpec::Kind::Cosine:
            j["kind"] = "cosine";
            j["amplitude"] = f.amplitude;
            j["waves"] = f.waves;
            j["phase"] = f.phase;
            break;
        case FieldSpec::Kind::SinePair:
            j["kind"] = "sine_pair";
            j["amplitude"] = f.amplitude;
            break;
    }
    return j;
}

}  // namespace detail

inline LabConfig parse_config(const std::string& text) {
    ConfigJson root;
    try {
        root = ConfigJson::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    using detail::check_keys;
    using detail::config_fail;
    using detail::get_count;
    using detail::get_count_or;
    using detail::get_number;
    using detail::get_number_or;
    using detail::get_string;
    using detail::member;

    check_keys(root, "top level",
               {"schema_version", "model", "solver", "sweep"});
    if (get_count(root, "top level", "schema_version") !=
        static_cast<std::size_t>(kSchemaVersion))
        config_fail("top level", "unsupported schema_version, expected " +
                                     std::to_string(kSchemaVersion));

    LabConfig cfg;
    const ConfigJson& model = member(root, "top level", "model");
    check_keys(model, "model",
               {"family", "boundary", "domain", "n_cells", "kappa", "nu",
                "kernel_width", "c_f", "c_g", "q0", "potential", "terminal"});
    cfg.model.family =
        detail::parse_family(get_string(model, "model", "family"), "model");
    cfg.model.boundary = detail::parse_boundary(
        get_string(model, "model", "boundary"), "model");
    if (model.find("domain") != model.end()) {
        const ConfigJson& dom = model["domain"];
        if (!dom.is_array() || dom.size() != 2 || !dom[0].is_number() ||
            !dom[1].is_number())
            config_fail("model", "domain must be [x_lo, x_hi]");
        cfg.model.x_lo = dom[0].get<double>();
        cfg.model.x_hi = dom[1].get<double>();
    }
    cfg.model.n_cells = get_count(model, "model", "n_cells");
    cfg.model.kappa = get_number(model, "model", "kappa");
    cfg.model.nu = get_number(model, "model", "nu");
    cfg.model.kernel_width = get_number(model, "model", "kernel_width");
    cfg.model.c_f = get_number_or(model, "model", "c_f", 0.0);
    cfg.model.c_g = get_number_or(model, "model", "c_g", 0.0);
    cfg.model.q0 = get_number_or(model, "model", "q0", 2.0);
    if (model.find("potential") != model.end())
        cfg.model.potential =
            detail::parse_field(model["potential"], "model.potential");
    if (model.find("terminal") != model.end())
        cfg.model.terminal =
            detail::parse_field(model["terminal"], "model.terminal");

    const ConfigJson& solver = member(root, "top level", "solver");
    check_keys(solver, "solver",
               {"horizon", "n_time_steps", "tol_outer", "max_outer", "damping",
                "continuation", "tol_mu", "max_iter_mu", "drift_bound",
                "initial_crowd", "seed"});
    cfg.solver.horizon = get_number(solver, "solver", "horizon");
    cfg.solver.n_time_steps = get_count(solver, "solver", "n_time_steps");
    cfg.solver.tol_outer =
        get_number_or(solver, "solver", "tol_outer", cfg.solver.tol_outer);
    cfg.solver.max_outer =
        get_count_or(solver, "solver", "max_outer", cfg.solver.max_outer);
    cfg.solver.damping =
        get_number_or(solver, "solver", "damping", cfg.solver.damping);
    if (solver.find("continuation") != solver.end()) {
        const ConfigJson& cont = solver["continuation"];
        if (!cont.is_array() || cont.empty())
            config_fail("solver", "continuation must be a nonempty array");
        cfg.solver.continuation_steps.clear();
        for (const auto& v : cont) {
            if (!v.is_number())
                config_fail("solver", "continuation entries must be numbers");
            cfg.solver.continuation_steps.push_back(v.get<double>());
        }
    }
    cfg.solver.tol_mu =
        get_number_or(solver, "solver", "tol_mu", cfg.solver.tol_mu);
    cfg.solver.max_iter_mu =
        get_count_or(solver, "solver", "max_iter_mu", cfg.solver.max_iter_mu);
    cfg.solver.drift_bound =
        get_number_or(solver, "solver", "drift_bound", cfg.solver.drift_bound);
    if (solver.find("initial_crowd") != solver.end()) {
        std::string crowd = get_string(solver, "solver", "initial_crowd");
        if (crowd == "uniform")
            cfg.crowd.kind = CrowdSpec::Kind::Uniform;
        else if (crowd == "sine_bump")
            cfg.crowd.kind = CrowdSpec::Kind::SineBump;
        else
            config_fail("solver",
                        "initial_crowd must be \"uniform\" or \"sine_bump\", "
                        "got \"" +
                            crowd + "\"");
    }
    cfg.solver.seed = get_count_or(solver, "solver", "seed", 0);

    if (root.find("sweep") != root.end()) {
        const ConfigJson& sweep = root["sweep"];
        check_keys(sweep, "sweep", {"kappa", "horizon", "boundary"});
        cfg.has_sweep = true;
        for (const char* axis : {"kappa", "horizon", "boundary"})
            if (sweep.find(axis) != sweep.end() && !sweep[axis].is_array())
                config_fail("sweep",
                            std::string("\"") + axis + "\" must be an array");
        if (sweep.find("kappa") != sweep.end())
            for (const auto& v : sweep["kappa"]) {
                if (!v.is_number())
                    config_fail("sweep", "kappa entries must be numbers");
                cfg.sweep.kappas.push_back(v.get<double>());
            }
        if (sweep.find("horizon") != sweep.end())
            for (const auto& v : sweep["horizon"]) {
                if (!v.is_number())
                    config_fail("sweep", "horizon entries must be numbers");
                cfg.sweep.horizons.push_back(v.get<double>());
            }
        if (sweep.find("boundary") != sweep.end())
            for (const auto& v : sweep["boundary"]) {
                if (!v.is_string())
                    config_fail("sweep", "boundary entries must be strings");
                cfg.sweep.boundaries.push_back(detail::parse_boundary(
                    v.get<std::string>(), "sweep.boundary"));
            }
        if (cfg.sweep.kappas.empty() && cfg.sweep.horizons.empty() &&
            cfg.sweep.boundaries.empty())
            config_fail("sweep", "declare at least one axis");
    }
    return cfg;
}

/// Fully resolved mirror of the configuration, defaults included.  This is
/// what reports embed, so a report always pins down the exact experiment.
inline ConfigJson config_to_json(const LabConfig& cfg) {
    ConfigJson root;
    root["schema_version"] = kSchemaVersion;
    ConfigJson model;
    model["family"] = cfg.model.family == Variant::P1Quadratic
                          ? "p1_quadratic"
                          : "p2_monotone";
    model["boundary"] =
        cfg.model.boundary == Boundary::Neumann ? "neumann" : "dirichlet";
    model["domain"] = {cfg.model.x_lo, cfg.model.x_hi};
    model["n_cells"] = cfg.model.n_cells;
    model["kappa"] = cfg.model.kappa;
    model["nu"] = cfg.model.nu;
    model["kernel_width"] = cfg.model.kernel_width;
    model["c_f"] = cfg.model.c_f;
    model["c_g"] = cfg.model.c_g;
    model["q0"] = cfg.model.q0;
    model["potential"] = detail::field_to_json(cfg.model.potential);
    model["terminal"] = detail::field_to_json(cfg.model.terminal);
    root["model"] = std::move(model);

    ConfigJson solver;
    solver["horizon"] = cfg.solver.horizon;
    solver["n_time_steps"] = cfg.solver.n_time_steps;
    solver["tol_outer"] = cfg.solver.tol_outer;
    solver["max_outer"] = cfg.solver.max_outer;
    solver["damping"] = cfg.solver.damping;
    solver["continuation"] = cfg.solver.continuation_steps;
    solver["tol_mu"] = cfg.solver.tol_mu;
    solver["max_iter_mu"] = cfg.solver.max_iter_mu;
    solver["drift_bound"] = cfg.solver.drift_bound;
    solver["initial_crowd"] =
        cfg.crowd.kind == CrowdSpec::Kind::Uniform ? "uniform" : "sine_bump";
    solver["seed"] = cfg.solver.seed;
    root["solver"] = std::move(solver);

    if (cfg.has_sweep) {
        ConfigJson sweep;
        if (!cfg.sweep.kappas.empty()) sweep["kappa"] = cfg.sweep.kappas;
        if (!cfg.sweep.horizons.empty()) sweep["horizon"] = cfg.sweep.horizons;
        if (!cfg.sweep.boundaries.empty()) {
            std::vector<std::string> names;
            for (Boundary b : cfg.sweep.boundaries)
                names.push_back(b == Boundary::Neumann ? "neumann"
                                                       : "dirichlet");
            sweep["boundary"] = names;
        }
        root["sweep"] = std::move(sweep);
    }
    return root;
}

}  // namespace mfgc
