#pragma once

// Outer solver: damped Picard on (u, m) with continuation in the coupling
// strength.
//
// One sweep applies the textbook composition.  From the incoming pair the
// crowd is normalized (mass capped at 1 so every slice solve stays a strict
// contraction), the per-slice measures are solved from the old gradient,
// the crowd is pushed forward with drift D_pH, the measures are re-solved
// from the fresh crowd for the quadratic family, and the value is swept
// backward from the re-coupled terminal.  The damped blend then mixes old
// and fresh u and m; the data slices are consequences of the pair rather
// than averages, so the initial density and the terminal value are
// re-imposed from the blended fields, and the returned measure path is
// re-solved from the blended pair so its fixed-point relation holds at
// every level by construction.
//
// Iteration counts follow the same convention as the slice solver: a sweep
// counts when it moves the pair by more than tol_outer, so a stage whose
// first sweep already lands on the fixed point reports one iteration.
// After a damped stage accepts, the blend is replaced by one undamped
// application of the map, so the returned crowd is an exact forward flow
// (a blend conserves mass only to the outer tolerance).  That application
// appears in the residual record but is not an iteration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mfgc/errors.hpp"
#include "mfgc/fp.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/hjb.hpp"
#include "mfgc/measures.hpp"
#include "mfgc/model.hpp"
#include "mfgc/mu_fixed_point.hpp"
#include "mfgc/rng.hpp"

namespace mfgc {

enum class ProblemKind { P1, P2 };

inline const char* to_string(ProblemKind p) {
    return p == ProblemKind::P1 ? "P1" : "P2";
}

/// Outer-loop knobs.  The positivity budget couples three of them: the
/// forward solver keeps densities nonnegative for Courant numbers up to
/// one half, so dt * drift_bound / h <= 1/2 is validated up front and the
/// computed drift is checked against drift_bound every sweep.
struct SolverConfig {
    ProblemKind problem = ProblemKind::P1;
    double tol_outer = 1e-8;
    std::size_t max_outer = 400;
    double damping = 0.5;
    std::vector<double> continuation_steps = {0.25, 0.5, 0.75, 1.0};
    double tol_mu = 1e-10;
    std::size_t max_iter_mu = 200;
    double horizon = 1.0;
    std::size_t n_time_steps = 0;
    double drift_bound = 1.0;
    /// Initial crowd density; empty means uniform (reflecting walls only).
    ScalarField m0;
    /// Seed for randomized probes; plain solves are seed independent.
    std::uint64_t seed = 0;
};

/// One continuation stage: how hard the outer loop had to work at `scale`.
struct StageReport {
    double scale = 0.0;
    /// Sweeps that moved the pair by more than tol_outer.
    std::size_t iterations = 0;
    /// Residual of every sweep applied, the accepting one included.
    std::vector<double> residuals;
    bool converged = false;
};

struct SolveReport {
    std::vector<StageReport> stages;
    bool converged = false;
    double final_residual = 0.0;
    std::size_t total_iterations = 0;
    /// Worst slice-solve statistics observed across the whole run.
    std::size_t max_mu_iterations = 0;
    double max_mu_ratio = 0.0;
    /// Largest |D_pH| fed to the forward solver.
    double max_drift = 0.0;
};

struct Solution {
    FieldPath u;
    FieldPath m;
    std::vector<ControlMeasure> mu;
    SolveReport report;
    TimeMesh mesh;
    double scale = 1.0;
};

inline void validate_config(const ModelSpec& spec, const SolverConfig& c) {
    const bool p1 = spec.variant == Variant::P1Quadratic;
    if ((c.problem == ProblemKind::P1) != p1)
        throw ConfigError(std::string("solver config: problem ") +
                          to_string(c.problem) +
                          " does not match the model family " +
                          to_string(spec.variant));
    if (!(c.tol_outer > 0.0) || !std::isfinite(c.tol_outer))
        throw ConfigError("solver config: tol_outer must be positive");
    if (c.max_outer == 0)
        throw ConfigError("solver config: max_outer must be at least 1");
    if (!(c.damping > 0.0 && c.damping <= 1.0))
        throw ConfigError("solver config: damping must lie in (0, 1]");
    if (!(c.tol_mu > 0.0))
        throw ConfigError("solver config: tol_mu must be positive");
    if (c.max_iter_mu == 0)
        throw ConfigError("solver config: max_iter_mu must be at least 1");
    if (!(c.horizon > 0.0) || c.n_time_steps == 0)
        throw ConfigError("solver config: need a positive horizon and at "
                          "least one time step");
    if (c.continuation_steps.empty())
        throw ConfigError("solver config: continuation schedule is empty");
    for (std::size_t i = 0; i < c.continuation_steps.size(); ++i) {
        double s = c.continuation_steps[i];
        if (!(s >= 0.0 && s <= 1.0))
            throw ConfigError(
                "solver config: continuation values must lie in [0, 1]");
        if (i > 0 && !(s > c.continuation_steps[i - 1]))
            throw ConfigError(
                "solver config: continuation values must increase");
    }
    if (c.continuation_steps.back() != 1.0)
        throw ConfigError(
            "solver config: the continuation schedule must end at 1");
    if (!(c.drift_bound > 0.0))
        throw ConfigError("solver config: drift_bound must be positive");
    const double dt = c.horizon / static_cast<double>(c.n_time_steps);
    const double budget = dt * c.drift_bound / spec.grid.h;
    if (budget > 0.5 + 1e-12)
        throw ConfigError(
            "solver config: dt * drift_bound / h = " + std::to_string(budget) +
            " exceeds the positivity budget 1/2; refine the time mesh or "
            "lower drift_bound");
    if (!c.m0.empty()) {
        if (c.m0.size() != spec.grid.n_nodes())
            throw ConfigError("solver config: m0 has " +
                              std::to_string(c.m0.size()) +
                              " values, the grid has " +
                              std::to_string(spec.grid.n_nodes()) + " nodes");
        for (double v : c.m0)
            if (!std::isfinite(v) || v < -1e-12)
                throw ConfigError(
                    "solver config: m0 must be a nonnegative density");
        double mass = integrate(spec.grid, c.m0);
        if (std::abs(mass - 1.0) > 1e-8)
            throw ConfigError(
                "solver config: m0 must carry unit mass, integrates to " +
                std::to_string(mass));
        if (spec.grid.boundary == Boundary::Dirichlet &&
            (std::abs(c.m0.front()) > 1e-12 ||
             std::abs(c.m0.back()) > 1e-12))
            throw ConfigError(
                "solver config: absorbing walls need m0 to vanish at the "
                "boundary");
    } else if (spec.grid.boundary == Boundary::Dirichlet) {
        throw ConfigError(
            "solver config: absorbing walls need an explicit m0 that "
            "vanishes at the boundary");
    }
}

namespace detail {

inline ScalarField initial_density(const ModelSpec& spec,
                                   const SolverConfig& config) {
    if (config.m0.empty())
        return ScalarField(spec.grid.n_nodes(), 1.0 / spec.grid.width());
    ScalarField m0 = config.m0;
    if (spec.grid.boundary == Boundary::Dirichlet) {
        m0.front() = 0.0;
        m0.back() = 0.0;
    }
    return m0;
}

}  // namespace detail

/// One application of the outer map at coupling strength `scale`.
/// Inner-solver failures carry their own diagnostics; solve() adds the
/// sweep index on the way out.
inline Solution picard_sweep(const ModelSpec& spec, const SolverConfig& config,
                             double scale, const Solution& state) {
    const Grid1D& grid = spec.grid;
    const TimeMesh& mesh = state.mesh;
    const std::size_t levels = mesh.n_levels();
    if (!(scale >= 0.0 && scale <= 1.0))
        throw ConfigError("picard_sweep: scale must lie in [0, 1]");
    if (state.u.size() != levels || state.m.size() != levels)
        throw ShapeError("picard_sweep: state paths do not match the mesh");
    const bool p1 = spec.variant == Variant::P1Quadratic;

    SolveReport rep = state.report;
    auto slice_mu = [&](double t, const VectorField& p,
                        const DiscreteMeasure& md) {
        auto r = (!p1 && scale > 0.0)
                     ? solve_mu_monotone(spec, t, scale, p, md, config.tol_mu,
                                         config.max_iter_mu)
                     : solve_mu(spec, t, scale, p, md, config.tol_mu,
                                config.max_iter_mu);
        rep.max_mu_iterations =
            std::max(rep.max_mu_iterations, r.second.iterations);
        rep.max_mu_ratio = std::max(rep.max_mu_ratio, r.second.observed_ratio);
        return std::move(r.first);
    };

    std::vector<VectorField> p_old(levels);
    for (std::size_t k = 0; k < levels; ++k)
        p_old[k] = gradient(grid, state.u[k]);

    // Slice measures from the normalized crowd, then the transport drift.
    const ScaledModel scaled =
        p1 ? lambda_scale(spec, scale) : theta_scale(spec, scale);
    std::vector<ControlMeasure> mu_tilde(levels);
    std::vector<VectorField> drift(levels,
                                   VectorField(grid.n_nodes(), 0.0));
    for (std::size_t k = 0; k < levels; ++k) {
        const double t = mesh.time(k);
        ScalarField mbar = restrict_normalize(grid, state.m[k]);
        mu_tilde[k] = slice_mu(t, p_old[k], measure_from_field(grid, mbar));
        double sup = 0.0;
        for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
            drift[k][i] = scaled.dp_hamiltonian(t, grid.node(i), p_old[k][i],
                                                mu_tilde[k]);
            sup = std::max(sup, std::abs(drift[k][i]));
        }
        if (sup > config.drift_bound + 1e-12)
            throw ConfigError(
                "picard_sweep: computed feedback |D_pH| = " +
                std::to_string(sup) + " exceeds drift_bound = " +
                std::to_string(config.drift_bound) +
                " at level " + std::to_string(k) +
                "; the data is too aggressive for this mesh");
        rep.max_drift = std::max(rep.max_drift, sup);
    }

    // Forward crowd.  The quadratic family starts from scale * m0; the
    // forward equation is linear in m for a fixed drift, so solve at unit
    // mass and rescale the whole path.
    const ScalarField m0 = detail::initial_density(spec, config);
    FieldPath m_fresh = fp_solve(spec, m0, drift, mesh);
    if (p1 && scale != 1.0)
        for (auto& slice : m_fresh)
            for (double& v : slice) v *= scale;

    std::vector<DiscreteMeasure> m_meas(levels);
    for (std::size_t k = 0; k < levels; ++k)
        m_meas[k] = measure_from_field(grid, m_fresh[k]);

    // The quadratic family distinguishes the measure driving transport
    // (from the normalized old crowd) from the one driving the value
    // equation (from the fresh crowd); the monotone family uses one.
    std::vector<ControlMeasure> mu_hjb;
    if (p1) {
        mu_hjb.resize(levels);
        for (std::size_t k = 0; k < levels; ++k)
            mu_hjb[k] = slice_mu(mesh.time(k), p_old[k], m_meas[k]);
    } else {
        mu_hjb = std::move(mu_tilde);
    }

    ScalarField terminal = coupling_g(spec, m_fresh.back());
    for (double& v : terminal) v *= scale;
    FieldPath u_fresh = hjb_solve(spec, terminal, mu_hjb, m_meas, mesh, scale);

    Solution out;
    out.mesh = mesh;
    out.scale = scale;
    out.u.resize(levels);
    out.m.resize(levels);
    const double d = config.damping;
    for (std::size_t k = 0; k < levels; ++k) {
        out.u[k].resize(grid.n_nodes());
        out.m[k].resize(grid.n_nodes());
        for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
            out.u[k][i] = (1.0 - d) * state.u[k][i] + d * u_fresh[k][i];
            out.m[k][i] = (1.0 - d) * state.m[k][i] + d * m_fresh[k][i];
        }
    }
    // Data slices are re-imposed, not blended: the initial crowd is given,
    // and the terminal value must equal the coupled terminal of the pair's
    // own final crowd.
    out.m[0] = m0;
    if (p1)
        for (double& v : out.m[0]) v *= scale;
    out.u.back() = coupling_g(spec, out.m.back());
    for (double& v : out.u.back()) v *= scale;

    out.mu.resize(levels);
    for (std::size_t k = 0; k < levels; ++k)
        out.mu[k] = slice_mu(mesh.time(k), gradient(grid, out.u[k]),
                             measure_from_field(grid, out.m[k]));
    out.report = std::move(rep);
    return out;
}

namespace detail {

/// Shared continuation driver: warm-starts each stage from the previous
/// one and throws NonConvergenceError (with the stage's residuals) when a
/// stage exhausts max_outer without settling.
inline Solution run_continuation(const ModelSpec& spec,
                                 const SolverConfig& config, Solution state) {
    SolveReport report;
    double last_residual = 0.0;
    for (double stage_scale : config.continuation_steps) {
        StageReport stage;
        stage.scale = stage_scale;
        for (std::size_t sweep = 0; sweep < config.max_outer; ++sweep) {
            Solution next;
            try {
                next = picard_sweep(spec, config, stage_scale, state);
            } catch (const ConfigError& e) {
                throw ConfigError("sweep " + std::to_string(sweep) +
                                  " at scale " + std::to_string(stage_scale) +
                                  ": " + e.what());
            }
            double res = std::max(sup_distance(next.u, state.u),
                                  sup_distance(next.m, state.m));
            stage.residuals.push_back(res);
            state = std::move(next);
            if (res > config.tol_outer) {
                ++stage.iterations;
            } else {
                stage.converged = true;
                last_residual = res;
                break;
            }
        }
        if (stage.converged && config.damping < 1.0) {
            // Replace the accepted blend with the pure image of itself, so
            // the returned crowd is an exact forward flow: a blend
            // conserves mass only to the outer tolerance, the flow to
            // roundoff.  Recorded in the residuals as one more
            // application; it moves at most tol/damping, so the state
            // stays a converged point.
            SolverConfig undamped = config;
            undamped.damping = 1.0;
            Solution image;
            try {
                image = picard_sweep(spec, undamped, stage_scale, state);
            } catch (const ConfigError& e) {
                throw ConfigError("finalization at scale " +
                                  std::to_string(stage_scale) + ": " +
                                  e.what());
            }
            stage.residuals.push_back(
                std::max(sup_distance(image.u, state.u),
                         sup_distance(image.m, state.m)));
            state = std::move(image);
        }
        report.total_iterations += stage.iterations;
        const bool stage_ok = stage.converged;
        auto residuals = stage.residuals;
        report.stages.push_back(std::move(stage));
        if (!stage_ok)
            throw NonConvergenceError(
                "outer Picard loop stalled at continuation value " +
                    std::to_string(stage_scale) + " after " +
                    std::to_string(config.max_outer) + " sweeps",
                residuals);
    }
    report.converged = true;
    report.final_residual = last_residual;
    report.max_mu_iterations = state.report.max_mu_iterations;
    report.max_mu_ratio = state.report.max_mu_ratio;
    report.max_drift = state.report.max_drift;
    state.report = std::move(report);
    return state;
}

inline Solution blank_state(const ModelSpec& spec, const SolverConfig& config,
                            const TimeMesh& mesh) {
    Solution state;
    state.mesh = mesh;
    const ScalarField m0 = initial_density(spec, config);
    state.u.assign(mesh.n_levels(),
                   ScalarField(spec.grid.n_nodes(), 0.0));
    state.m.assign(mesh.n_levels(), m0);
    DiscreteMeasure md = measure_from_field(spec.grid, m0);
    ControlMeasure rest;
    for (const auto& a : md.atoms) rest.atoms.push_back({a.x, 0.0, a.w});
    state.mu.assign(mesh.n_levels(), rest);
    return state;
}

}  // namespace detail

/// Continuation solve from the canonical cold start (u = 0, m = m0).
/// Throws NonConvergenceError when any stage exhausts max_outer; that is a
/// recorded finding about the data, not a crash.
inline Solution solve(const ModelSpec& spec, const SolverConfig& config) {
    validate_config(spec, config);
    TimeMesh mesh = TimeMesh::make(config.horizon, config.n_time_steps);
    return detail::run_continuation(spec, config,
                                    detail::blank_state(spec, config, mesh));
}

/// Max pairwise sup-distance in (u, m) across solves from randomized
/// starts.  The continuation schedule is forced to the single stage {1}:
/// warm-started continuation would erase the initial-guess diversity the
/// probe exists to exercise.  Monotone couplings should report a distance
/// within 10 * tol_outer; the caller asserts, the probe only measures.
inline double uniqueness_probe(const ModelSpec& spec,
                               const SolverConfig& config,
                               std::size_t n_starts) {
    if (n_starts < 2)
        throw ConfigError("uniqueness_probe: need at least 2 starts");
    validate_config(spec, config);
    SolverConfig probe = config;
    probe.continuation_steps = {1.0};
    TimeMesh mesh = TimeMesh::make(probe.horizon, probe.n_time_steps);

    std::vector<Solution> solutions;
    solutions.reserve(n_starts);
    const double pi = 3.14159265358979323846;
    const double width = spec.grid.width();
    const double amp = 0.08 * probe.drift_bound * width;
    for (std::size_t s = 0; s < n_starts; ++s) {
        Solution state = detail::blank_state(spec, probe, mesh);
        if (s > 0) {
            SplitRng rng(probe.seed, s);
            const double a = rng.next_uniform(-amp, amp);
            const double b = rng.next_uniform(-amp, amp);
            for (auto& slice : state.u)
                for (std::size_t i = 0; i < slice.size(); ++i) {
                    double xh = (spec.grid.node(i) - spec.grid.x_lo) / width;
                    double bump = a * std::cos(pi * xh) +
                                  b * std::sin(pi * xh);
                    // Pinned walls keep the guess admissible for the value
                    // equation's boundary rows.
                    if (spec.grid.boundary == Boundary::Dirichlet)
                        bump *= std::sin(pi * xh);
                    slice[i] = bump;
                }
        }
        solutions.push_back(
            detail::run_continuation(spec, probe, std::move(state)));
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < solutions.size(); ++i)
        for (std::size_t j = i + 1; j < solutions.size(); ++j)
            worst = std::max(
                worst,
                std::max(sup_distance(solutions[i].u, solutions[j].u),
                         sup_distance(solutions[i].m, solutions[j].m)));
    return worst;
}

}  // namespace mfgc
