#pragma once

#include <cstddef>
#include <vector>

#include "mfgc/errors.hpp"

namespace mfgc {

/**
 * Tridiagonal system solver (Thomas algorithm).
 * lower[i] multiplies x[i-1] in row i (lower[0] unused), upper[i] multiplies
 * x[i+1] (upper[n-1] unused). Assumes the diagonally dominant systems the
 * implicit diffusion steps produce; a vanishing pivot is a logic error.
 */
inline std::vector<double> solve_tridiagonal(const std::vector<double>& lower,
                                             const std::vector<double>& diag,
                                             const std::vector<double>& upper,
                                             std::vector<double> rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n)
        throw ShapeError("solve_tridiagonal: band lengths differ");
    std::vector<double> scratch(n, 0.0);
    double pivot = diag[0];
    if (pivot == 0.0) throw Error("solve_tridiagonal: zero pivot at row 0");
    scratch[0] = upper[0] / pivot;
    rhs[0] /= pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = diag[i] - lower[i] * scratch[i - 1];
        if (pivot == 0.0)
            throw Error("solve_tridiagonal: zero pivot at row " +
                        std::to_string(i));
        scratch[i] = upper[i] / pivot;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / pivot;
    }
    for (std::size_t i = n - 1; i-- > 0;)
        rhs[i] -= scratch[i] * rhs[i + 1];
    return rhs;
}

}  // namespace mfgc
