#pragma once

// Monte-Carlo oracle: simulate the controlled diffusion whose law the
// forward solver evolves, then compare empirical measures against the PDE
// output.
//
//   dX = -D_pH(t, X, D_xu(t, X), mu(t)) dt + sqrt(2 nu) dB
//
// The oracle consumes the solver's value gradient and measure path; it
// never re-derives the coupling.  The gradient is interpolated linearly in
// x and held piecewise-constant in t over each mesh step.  Absorbing walls
// mark a particle ABSORBED at the first substep whose endpoint leaves the
// domain (no bridge correction; comparison tolerances budget the O(sqrt dt)
// exit-time bias).  Reflecting walls fold the endpoint across the violated
// wall once per substep, which is exact in law up to multi-crossing events;
// the substep count is validated so four noise standard deviations fit
// inside the domain, making those events negligible.
//
// Determinism: particle j draws from a stream seeded by (seed, j), so any
// subset of particles, in any partition, reproduces bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "mfgc/coupler.hpp"
#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/measures.hpp"
#include "mfgc/model.hpp"
#include "mfgc/rng.hpp"

namespace mfgc {

/// Marks an absorbed particle inside ParticleEnsemble::positions.
inline constexpr double kAbsorbedMarker =
    std::numeric_limits<double>::quiet_NaN();

inline bool is_absorbed(double position) { return std::isnan(position); }

/// One time slice of the particle system.  positions[j] is either a point
/// of the closed domain or kAbsorbedMarker.
struct ParticleEnsemble {
    std::vector<double> positions;
    std::size_t n_total = 0;
    std::uint64_t rng_seed = 0;

    std::size_t live_count() const {
        std::size_t n = 0;
        for (double p : positions)
            if (!is_absorbed(p)) ++n;
        return n;
    }

    double live_fraction() const {
        return n_total == 0
                   ? 0.0
                   : static_cast<double>(live_count()) /
                         static_cast<double>(n_total);
    }
};

namespace detail {

/// Inverse-CDF sampler for a node-valued density read as piecewise linear
/// between nodes (the same reading the trapezoid quadrature uses).
struct DensitySampler {
    const Grid1D* grid = nullptr;
    std::vector<double> cum;  // normalized cumulative cell masses

    static DensitySampler make(const Grid1D& grid, const ScalarField& m) {
        require_shape(grid, m, "particle sampler");
        DensitySampler s;
        s.grid = &grid;
        s.cum.resize(grid.n_cells);
        double total = 0.0;
        for (std::size_t j = 0; j < grid.n_cells; ++j) {
            double a = std::max(m[j], 0.0);
            double b = std::max(m[j + 1], 0.0);
            if (m[j] < -1e-12 || m[j + 1] < -1e-12)
                throw InvalidMeasureError(
                    "particle sampler: negative initial density");
            total += 0.5 * grid.h * (a + b);
            s.cum[j] = total;
        }
        if (!(total > 0.0))
            throw ConfigError(
                "particle sampler: the initial crowd has no mass to draw "
                "from");
        for (double& c : s.cum) c /= total;
        s.cum.back() = 1.0;
        return s;
    }

    double sample(double u, const ScalarField& m) const {
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        std::size_t j = std::min(
            static_cast<std::size_t>(it - cum.begin()), grid->n_cells - 1);
        double lo = j == 0 ? 0.0 : cum[j - 1];
        double span = cum[j] - lo;
        double y = span > 0.0 ? (u - lo) / span : 0.5;
        y = std::clamp(y, 0.0, 1.0);
        double a = std::max(m[j], 0.0);
        double d = std::max(m[j + 1], 0.0) - a;
        // Invert a s + d s^2 / 2 = y (a + d / 2) on [0, 1].
        double target = y * (a + 0.5 * d);
        double s;
        if (std::abs(d) <= 1e-14 * (a + std::abs(d)))
            s = a > 0.0 ? target / a : y;
        else
            s = (-a + std::sqrt(std::max(a * a + 2.0 * d * target, 0.0))) / d;
        s = std::clamp(s, 0.0, 1.0);
        return grid->node(j) + s * grid->h;
    }
};

}  // namespace detail

/// Euler-Maruyama paths of the controlled diffusion, one ensemble per mesh
/// level, initial positions drawn from the solution's first crowd slice.
/// Each mesh step is split into n_substeps equal substeps that reuse that
/// level's gradient and measure.
inline std::vector<ParticleEnsemble> simulate(const ModelSpec& spec,
                                              const Solution& solution,
                                              std::size_t n_particles,
                                              std::size_t n_substeps,
                                              std::uint64_t seed) {
    const Grid1D& grid = spec.grid;
    const TimeMesh& mesh = solution.mesh;
    const std::size_t levels = mesh.n_levels();
    if (n_particles < 1)
        throw ConfigError("simulate: need at least one particle");
    if (n_substeps < 1)
        throw ConfigError("simulate: need at least one substep");
    if (levels < 2 || solution.u.size() != levels ||
        solution.m.size() != levels || solution.mu.size() != levels)
        throw ShapeError("simulate: solution paths do not match its mesh");

    const double dts = mesh.dt / static_cast<double>(n_substeps);
    const double sigma = std::sqrt(2.0 * spec.nu * dts);
    if (!(4.0 * sigma < grid.width()))
        throw ConfigError(
            "simulate: substep noise " + std::to_string(sigma) +
            " is too coarse for single-fold reflection; raise n_substeps");

    std::vector<VectorField> du(levels);
    for (std::size_t k = 0; k < levels; ++k)
        du[k] = gradient(grid, solution.u[k]);
    const ScaledModel scaled = spec.variant == Variant::P1Quadratic
                                   ? lambda_scale(spec, solution.scale)
                                   : theta_scale(spec, solution.scale);
    const bool absorbing = grid.boundary == Boundary::Dirichlet;
    const auto sampler = detail::DensitySampler::make(grid, solution.m.front());

    std::vector<ParticleEnsemble> path(levels);
    for (auto& e : path) {
        e.positions.assign(n_particles, 0.0);
        e.n_total = n_particles;
        e.rng_seed = seed;
    }

    for (std::size_t j = 0; j < n_particles; ++j) {
        SplitRng rng(seed, j);
        double x = sampler.sample(rng.next_uniform(), solution.m.front());
        path[0].positions[j] = x;
        bool alive = true;
        for (std::size_t k = 0; k + 1 < levels; ++k) {
            if (alive) {
                const double t = mesh.time(k);
                for (std::size_t s = 0; s < n_substeps; ++s) {
                    double p = interpolate(grid, du[k], x);
                    double b =
                        -scaled.dp_hamiltonian(t, x, p, solution.mu[k]);
                    x += b * dts + sigma * rng.next_normal();
                    if (x < grid.x_lo || x > grid.x_hi) {
                        if (absorbing) {
                            alive = false;
                            break;
                        }
                        x = x < grid.x_lo ? 2.0 * grid.x_lo - x
                                          : 2.0 * grid.x_hi - x;
                        x = std::clamp(x, grid.x_lo, grid.x_hi);
                    }
                }
            }
            path[k + 1].positions[j] = alive ? x : kAbsorbedMarker;
        }
    }
    return path;
}

/// Histograms of the live particles, one pair of measures per level: the
/// crowd measure bins positions to the node-centered cells with mass
/// 1/n_total per particle, and the control measure attaches each occupied
/// node's realized control from the solution's own slice measure (the
/// drift is affine in the gradient, so the node value coincides with the
/// evaluation the dynamics used).  Only occupied nodes carry atoms, so the
/// weights sum to the live fraction.
inline std::pair<std::vector<DiscreteMeasure>, std::vector<ControlMeasure>>
empirical_measures(const std::vector<ParticleEnsemble>& path,
                   const Solution& solution, const Grid1D& grid) {
    const std::size_t levels = solution.mesh.n_levels();
    if (path.size() != levels || solution.mu.size() != levels)
        throw ShapeError(
            "empirical_measures: ensemble path does not match the solution "
            "mesh");

    std::vector<DiscreteMeasure> crowd(levels);
    std::vector<ControlMeasure> controls(levels);
    std::vector<std::size_t> counts(grid.n_nodes());
    for (std::size_t k = 0; k < levels; ++k) {
        const ParticleEnsemble& e = path[k];
        if (e.n_total == 0 || e.positions.size() != e.n_total)
            throw InvalidMeasureError(
                "empirical_measures: malformed ensemble at level " +
                std::to_string(k));
        const ControlMeasure& mu = solution.mu[k];
        if (mu.atoms.size() != grid.n_nodes())
            throw InvalidMeasureError(
                "empirical_measures: solution measure at level " +
                std::to_string(k) + " is not node-aligned");

        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (double x : e.positions) {
            if (is_absorbed(x)) continue;
            auto bin = static_cast<std::size_t>(
                std::llround((x - grid.x_lo) / grid.h));
            ++counts[std::min(bin, grid.n_cells)];
        }
        const double unit = 1.0 / static_cast<double>(e.n_total);
        for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
            if (counts[i] == 0) continue;
            double w = static_cast<double>(counts[i]) * unit;
            crowd[k].atoms.push_back({grid.node(i), w});
            controls[k].atoms.push_back(
                {grid.node(i), mu.atoms[i].alpha, w});
        }
    }
    return {std::move(crowd), std::move(controls)};
}

/// Calibrated comparison tolerances.  The constants are frozen from
/// zero-drift measurement runs: the flat distance between an empirical
/// crowd and the solver's is statistics-dominated (observed below
/// 0.6/sqrt(n)), and the endpoint absorption test under-absorbs by about
/// 1.3 sqrt(nu dt_sub).  Each constant carries at least triple headroom
/// over the worst observation.
struct ToleranceCurve {
    double c_stat = 2.0;
    double c_bin = 0.5;
    double c_disc = 2.0;
    double c_bias = 1.5;
};

inline double crowd_tolerance(const ToleranceCurve& c, std::size_t n_particles,
                              double h, double dt) {
    return c.c_stat / std::sqrt(static_cast<double>(n_particles)) +
           c.c_bin * h + c.c_disc * (h * h + dt);
}

inline double absorbed_tolerance(const ToleranceCurve& c, double survival,
                                 std::size_t n_particles, double nu,
                                 double dt_sub, double h, double dt) {
    double se = std::sqrt(survival * (1.0 - survival) /
                          static_cast<double>(n_particles));
    return 3.0 * se + c.c_bias * std::sqrt(nu * dt_sub) +
           c.c_disc * (h * h + dt);
}

/// Trajectory snapshot export, one row per (level, particle).
inline std::string particles_csv(const std::vector<ParticleEnsemble>& path,
                                 const TimeMesh& mesh) {
    if (path.size() != mesh.n_levels())
        throw ShapeError("particles_csv: path does not match the mesh");
    std::string out = "t,particle_id,x,alive\n";
    for (std::size_t k = 0; k < path.size(); ++k) {
        for (std::size_t j = 0; j < path[k].positions.size(); ++j) {
            double x = path[k].positions[j];
            detail::append_number(out, mesh.time(k));
            out += ',';
            out += std::to_string(j);
            out += ',';
            detail::append_number(out, x);
            out += is_absorbed(x) ? ",0\n" : ",1\n";
        }
    }
    return out;
}

}  // namespace mfgc
