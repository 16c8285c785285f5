#pragma once

// Backward semi-implicit finite differences for the value function.
//
// Each step from level k+1 to level k treats diffusion implicitly (one
// tridiagonal solve, unconditionally stable) and the Hamiltonian plus the
// state coupling explicitly at the known level's gradient.  The explicit
// term rides on a transport budget: dt * sup|D_pH| * 2/h must stay at or
// below 1, checked against the actual evaluated states every step.
//
// Wall treatment matches the diffusion stencil everywhere else in the
// library: Dirichlet rows are pinned to zero, Neumann rows use a mirrored
// ghost node, which makes the discrete normal derivative vanish identically
// and keeps constants exact solutions of the pure-diffusion step.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/measures.hpp"
#include "mfgc/model.hpp"
#include "mfgc/tridiag.hpp"

namespace mfgc {

namespace detail {

/// Scaling family used by the value equation: plain multiplication for the
/// quadratic variant, theta semantics for the monotone one.
inline ScaledModel hjb_scaling(const ModelSpec& spec, double scale) {
    return spec.variant == Variant::P1Quadratic ? lambda_scale(spec, scale)
                                                : theta_scale(spec, scale);
}

/// Bands of (I + dt nu A) where A is the negative second difference with
/// the selected wall closure.  Dirichlet rows are identity rows.
struct DiffusionBands {
    std::vector<double> lower, diag, upper;
};

inline DiffusionBands implicit_diffusion_bands(const Grid1D& grid, double nu,
                                               double dt) {
    const std::size_t n = grid.n_nodes();
    const double c = nu * dt / (grid.h * grid.h);
    DiffusionBands b{std::vector<double>(n, -c),
                     std::vector<double>(n, 1.0 + 2.0 * c),
                     std::vector<double>(n, -c)};
    if (grid.boundary == Boundary::Dirichlet) {
        b.diag[0] = b.diag[n - 1] = 1.0;
        b.upper[0] = b.lower[n - 1] = 0.0;
    } else {
        b.upper[0] = -2.0 * c;
        b.lower[n - 1] = -2.0 * c;
    }
    b.lower[0] = 0.0;
    b.upper[n - 1] = 0.0;
    return b;
}

}  // namespace detail

/// One backward step of length dt ending at time t.
///
/// u_next is the value at t + dt; mu and m are the slice data the explicit
/// terms consume (evaluated together with u_next's centered gradient).
/// Throws ConfigError when dt * sup|D_pH| * 2/h exceeds 1 at the evaluated
/// states: refining the mesh, not ignoring the budget, is the fix.
inline ScalarField hjb_step(const ModelSpec& spec, const ScalarField& u_next,
                            const ControlMeasure& mu, const DiscreteMeasure& m,
                            double t, double dt, double scale) {
    const Grid1D& grid = spec.grid;
    require_shape(grid, u_next, "hjb_step u_next");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ConfigError("hjb_step: dt must be positive and finite");

    const ScaledModel scaled = detail::hjb_scaling(spec, scale);
    const VectorField p = gradient(grid, u_next);

    double lip = 0.0;
    for (std::size_t i = 0; i < grid.n_nodes(); ++i)
        lip = std::max(lip, std::abs(scaled.dp_hamiltonian(
                                t, grid.node(i), p[i], mu)));
    if (dt * lip * 2.0 / grid.h > 1.0 + 1e-12)
        throw ConfigError(
            "hjb_step: explicit Hamiltonian term breaks its transport "
            "budget, dt * Lip * 2/h = " +
            std::to_string(dt * lip * 2.0 / grid.h) +
            " > 1; shrink dt or coarsen the feedback");

    ScalarField rhs(grid.n_nodes());
    ScalarField source;
    if (spec.variant == Variant::P2Monotone && spec.c_f != 0.0 &&
        scale != 0.0) {
        source = coupling_f(spec, t, density_from_measure(grid, m));
        for (double& v : source) v *= scale;
    }
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        rhs[i] = u_next[i] -
                 dt * scaled.hamiltonian(t, grid.node(i), p[i], mu);
        if (!source.empty()) rhs[i] += dt * source[i];
    }
    if (grid.boundary == Boundary::Dirichlet) {
        rhs.front() = 0.0;
        rhs.back() = 0.0;
    }
    auto bands = detail::implicit_diffusion_bands(grid, spec.nu, dt);
    return solve_tridiagonal(bands.lower, bands.diag, bands.upper,
                             std::move(rhs));
}

/// Full backward sweep from the terminal condition.
///
/// mu_path and m_path carry one slice per time level; step k consumes the
/// slices at level k+1, where the explicit data lives.  Returns u at every
/// level, terminal included.  Dirichlet terminals must vanish at the walls,
/// which the terminal coupling guarantees by construction.
inline FieldPath hjb_solve(const ModelSpec& spec, const ScalarField& terminal,
                           const std::vector<ControlMeasure>& mu_path,
                           const std::vector<DiscreteMeasure>& m_path,
                           const TimeMesh& mesh, double scale) {
    const Grid1D& grid = spec.grid;
    require_shape(grid, terminal, "hjb_solve terminal");
    if (mu_path.size() != mesh.n_levels() || m_path.size() != mesh.n_levels())
        throw ShapeError(
            "hjb_solve: measure paths must have one slice per time level");
    if (grid.boundary == Boundary::Dirichlet &&
        (std::abs(terminal.front()) > 1e-12 ||
         std::abs(terminal.back()) > 1e-12))
        throw ConfigError(
            "hjb_solve: Dirichlet terminal data must vanish at the walls");

    FieldPath u(mesh.n_levels());
    u.back() = terminal;
    if (grid.boundary == Boundary::Dirichlet) {
        // Validated to vanish up to roundoff above; store exact zeros so
        // walls are bitwise 0 at every level, terminal included.
        u.back().front() = 0.0;
        u.back().back() = 0.0;
    }
    for (std::size_t k = mesh.n_steps; k-- > 0;) {
        u[k] = hjb_step(spec, u[k + 1], mu_path[k + 1], m_path[k + 1],
                        mesh.time(k + 1), mesh.dt, scale);
    }
    return u;
}

}  // namespace mfgc
