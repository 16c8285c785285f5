#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mfgc/errors.hpp"

namespace mfgc {

enum class Boundary { Dirichlet, Neumann };

inline std::string to_string(Boundary b) {
    return b == Boundary::Dirichlet ? "dirichlet" : "neumann";
}

/// Node-centered scalar samples, one value per grid node.
using ScalarField = std::vector<double>;
/// Node-centered values of a spatial derivative or drift.
using VectorField = std::vector<double>;

/**
 * Uniform 1-D grid on [x_lo, x_hi] with n_cells cells and n_cells+1 nodes.
 * Fields live on nodes; finite-volume fluxes live on the n_cells faces.
 */
struct Grid1D {
    double x_lo = 0.0;
    double x_hi = 1.0;
    std::size_t n_cells = 0;
    double h = 0.0;  // (x_hi - x_lo) / n_cells
    Boundary boundary = Boundary::Neumann;

    static Grid1D make(double x_lo, double x_hi, std::size_t n_cells,
                       Boundary boundary) {
        if (!(x_hi > x_lo))
            throw ConfigError("grid: x_hi must exceed x_lo");
        if (n_cells < 2)
            throw ConfigError("grid: need at least 2 cells");
        Grid1D g;
        g.x_lo = x_lo;
        g.x_hi = x_hi;
        g.n_cells = n_cells;
        g.h = (x_hi - x_lo) / static_cast<double>(n_cells);
        g.boundary = boundary;
        return g;
    }

    std::size_t n_nodes() const { return n_cells + 1; }

    double node(std::size_t i) const {
        return x_lo + static_cast<double>(i) * h;
    }

    double width() const { return x_hi - x_lo; }

    /// Trapezoid quadrature weight of node i (h interior, h/2 at the walls).
    double weight(std::size_t i) const {
        return (i == 0 || i == n_cells) ? 0.5 * h : h;
    }

    bool contains(double x) const {
        return x >= x_lo - 1e-12 * width() && x <= x_hi + 1e-12 * width();
    }
};

/// Uniform time mesh on [0, T] with n_steps steps of size dt.
struct TimeMesh {
    double horizon = 1.0;
    std::size_t n_steps = 0;
    double dt = 0.0;

    static TimeMesh make(double horizon, std::size_t n_steps) {
        if (!(horizon > 0.0))
            throw ConfigError("time mesh: horizon must be positive");
        if (n_steps == 0)
            throw ConfigError("time mesh: need at least 1 step");
        TimeMesh m;
        m.horizon = horizon;
        m.n_steps = n_steps;
        m.dt = horizon / static_cast<double>(n_steps);
        return m;
    }

    std::size_t n_levels() const { return n_steps + 1; }

    double time(std::size_t k) const {
        return dt * static_cast<double>(k);
    }
};

/// One scalar field per time level, index 0 = t=0, index n_steps = t=T.
using FieldPath = std::vector<ScalarField>;

inline void require_shape(const Grid1D& grid, const ScalarField& f,
                          const char* what) {
    if (f.size() != grid.n_nodes())
        throw ShapeError(std::string(what) + ": field has " +
                         std::to_string(f.size()) + " values, grid has " +
                         std::to_string(grid.n_nodes()) + " nodes");
}

/**
 * Second-order spatial derivative samples: centered differences at interior
 * nodes, one-sided three-point stencils at the walls. Exact for quadratics.
 */
inline VectorField gradient(const Grid1D& grid, const ScalarField& f) {
    require_shape(grid, f, "gradient");
    const std::size_t n = grid.n_cells;
    VectorField df(n + 1);
    const double inv2h = 1.0 / (2.0 * grid.h);
    df[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv2h;
    for (std::size_t i = 1; i < n; ++i)
        df[i] = (f[i + 1] - f[i - 1]) * inv2h;
    df[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) * inv2h;
    return df;
}

/// Trapezoid quadrature over the domain.
inline double integrate(const Grid1D& grid, const ScalarField& f) {
    require_shape(grid, f, "integrate");
    double acc = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i < grid.n_cells; ++i) acc += f[i];
    return acc * grid.h;
}

/// Linear interpolation of a node field; x must lie in the domain.
inline double interpolate(const Grid1D& grid, const ScalarField& f, double x) {
    require_shape(grid, f, "interpolate");
    if (!grid.contains(x))
        throw InterpolationError("interpolate: x = " + std::to_string(x) +
                                 " outside [" + std::to_string(grid.x_lo) +
                                 ", " + std::to_string(grid.x_hi) + "]");
    double s = (x - grid.x_lo) / grid.h;
    if (s <= 0.0) return f.front();
    auto i = static_cast<std::size_t>(s);
    if (i >= grid.n_cells) return f.back();
    double frac = s - static_cast<double>(i);
    return f[i] * (1.0 - frac) + f[i + 1] * frac;
}

inline double sup_norm(const ScalarField& f) {
    double m = 0.0;
    for (double v : f) m = std::max(m, std::abs(v));
    return m;
}

inline double sup_distance(const ScalarField& a, const ScalarField& b) {
    if (a.size() != b.size())
        throw ShapeError("sup_distance: field lengths differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double sup_distance(const FieldPath& a, const FieldPath& b) {
    if (a.size() != b.size())
        throw ShapeError("sup_distance: path lengths differ");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        m = std::max(m, sup_distance(a[k], b[k]));
    return m;
}

}  // namespace mfgc
