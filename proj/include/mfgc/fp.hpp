#pragma once

// Forward conservative finite volumes for the crowd density.
//
// Control volumes sit around the nodes: interior cells have width h, wall
// cells h/2, which is exactly the trapezoid weighting used for integrals,
// so "discrete mass" below always means integrate(grid, m).  Faces live at
// the midpoints between nodes plus one face on each wall.
//
// Per step the advective flux (velocity -drift, first-order upwind) is
// divergenced explicitly, then diffusion is folded in implicitly with the
// same tridiagonal bands the value solver uses.  No-flux walls zero both
// wall-face fluxes, which conserves mass to roundoff by telescoping.
// Absorbing walls pin the wall nodes to zero; mass entering a wall cell is
// discarded, so total mass never increases.
//
// Stability: the hard error triggers above Courant number dt*|b|/h = 1.
// Positivity of the upwind update additionally needs Courant <= 1/2 on the
// half-width wall cells; the solver budget (drift bound 1 with dt = h/2)
// keeps production runs inside that, and the tests pin it.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/hjb.hpp"
#include "mfgc/model.hpp"
#include "mfgc/tridiag.hpp"

namespace mfgc {

/// One forward step of length dt.
///
/// drift carries D_pH at the current value gradient and slice measure; the
/// transport velocity is its negative.  m_prev entries below -1e-12 or NaN
/// are rejected; small negative roundoff is propagated untouched so that
/// conservation stays exact.
inline ScalarField fp_step(const ModelSpec& spec, const ScalarField& m_prev,
                           const VectorField& drift, double dt) {
    const Grid1D& grid = spec.grid;
    require_shape(grid, m_prev, "fp_step density");
    require_shape(grid, drift, "fp_step drift");
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ConfigError("fp_step: dt must be positive and finite");

    const std::size_t n = grid.n_nodes();
    double b_max = 0.0;
    for (double b : drift) {
        if (!std::isfinite(b))
            throw ConfigError("fp_step: drift must be finite");
        b_max = std::max(b_max, std::abs(b));
    }
    const double courant = dt * b_max / grid.h;
    if (courant > 1.0 + 1e-12)
        throw ConfigError("fp_step: advective Courant number dt*|b|/h = " +
                          std::to_string(courant) +
                          " exceeds 1; shrink dt or the drift");
    for (double v : m_prev)
        if (std::isnan(v) || v < -1e-12)
            throw InvalidMeasureError(
                "fp_step: density entry " + std::to_string(v) +
                " is not a (roundoff-)nonnegative value");

    // Upwind advective flux through interior face i+1/2.
    std::vector<double> flux(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double v = -0.5 * (drift[i] + drift[i + 1]);
        flux[i] = v > 0.0 ? v * m_prev[i] : v * m_prev[i + 1];
    }

    ScalarField rhs(n);
    for (std::size_t i = 1; i + 1 < n; ++i)
        rhs[i] = m_prev[i] - dt / grid.weight(i) * (flux[i] - flux[i - 1]);
    if (grid.boundary == Boundary::Neumann) {
        rhs[0] = m_prev[0] - dt / grid.weight(0) * flux[0];
        rhs[n - 1] = m_prev[n - 1] + dt / grid.weight(n - 1) * flux[n - 2];
    } else {
        rhs[0] = 0.0;
        rhs[n - 1] = 0.0;
    }

    auto bands = detail::implicit_diffusion_bands(grid, spec.nu, dt);
    return solve_tridiagonal(bands.lower, bands.diag, bands.upper,
                             std::move(rhs));
}

/// Full forward sweep from a unit-mass initial density.
///
/// drift_path holds one nodal drift per time level; step k consumes the
/// slice at level k, where the data is known.  Returns the density at all
/// levels, initial slice stored verbatim.
inline FieldPath fp_solve(const ModelSpec& spec, const ScalarField& m0,
                          const std::vector<VectorField>& drift_path,
                          const TimeMesh& mesh) {
    require_shape(spec.grid, m0, "fp_solve initial density");
    if (drift_path.size() != mesh.n_levels())
        throw ShapeError(
            "fp_solve: drift path must have one slice per time level");
    const double mass = integrate(spec.grid, m0);
    if (std::abs(mass - 1.0) > 1e-8)
        throw ConfigError("fp_solve: initial density must carry unit mass, "
                          "integrates to " +
                          std::to_string(mass));

    FieldPath m(mesh.n_levels());
    m[0] = m0;
    for (std::size_t k = 0; k < mesh.n_steps; ++k)
        m[k + 1] = fp_step(spec, m[k], drift_path[k], mesh.dt);
    return m;
}

}  // namespace mfgc
