#pragma once

// Per-slice joint state-control measure via Banach iteration.
//
// At a frozen time slice the optimal feedback alpha(x) = -D_pH(t, x, p(x), mu)
// depends on mu = (I, alpha)#m, which depends on alpha again.  Both model
// families make that self-reference a contraction in the control mean with
// factor kappa * total_mass(m) < 1, so plain fixed-point iteration from
// alpha == 0 converges geometrically and we can report the observed
// contraction factor alongside the moment statistics of the result.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/measures.hpp"
#include "mfgc/model.hpp"

namespace mfgc {

/// Convergence record for one per-slice measure solve.
struct MuSolveReport {
    /// Applications of the iteration map that moved the iterate by more
    /// than tol_mu.  A solve that starts at the fixed point reports 0.
    std::size_t iterations = 0;
    /// Sup-norm displacement of the accepting application; <= tol_mu.
    double final_delta = 0.0;
    /// Geometric-mean contraction factor over the recorded displacements;
    /// 0 when fewer than two applications were needed.
    double observed_ratio = 0.0;
    /// lambda_q(mu, q_prime) of the returned measure.
    double lambda_qprime = 0.0;
    /// lambda_q(mu, infinity) of the returned measure.
    double lambda_inf = 0.0;
};

namespace detail {

/// Shared Banach loop.  `start` seeds every control coordinate; the public
/// entry points pass 0 except for the dual-start uniqueness probe.
inline std::pair<ControlMeasure, MuSolveReport> iterate_mu(
    const ModelSpec& spec, const ScaledModel& scaled, double t,
    const VectorField& p_field, const DiscreteMeasure& m, double tol_mu,
    std::size_t max_iter, double start) {
    if (!(tol_mu > 0.0)) {
        throw ConfigError("solve_mu: tol_mu must be positive, got " +
                          std::to_string(tol_mu));
    }
    if (max_iter == 0) {
        throw ConfigError("solve_mu: max_iter must be at least 1");
    }
    require_shape(spec.grid, p_field, "solve_mu momentum field");

    const std::size_t n = m.atoms.size();
    std::vector<double> px(n);
    for (std::size_t i = 0; i < n; ++i) {
        px[i] = interpolate(spec.grid, p_field, m.atoms[i].x);
    }

    auto assemble = [&](const std::vector<double>& alpha) {
        ControlMeasure mu;
        mu.atoms.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            mu.atoms.push_back({m.atoms[i].x, alpha[i], m.atoms[i].w});
        }
        return mu;
    };

    std::vector<double> alpha(n, start);
    std::vector<double> next(n);
    ControlMeasure mu = assemble(alpha);
    MuSolveReport report;
    std::vector<double> deltas;
    bool converged = (n == 0);
    while (!converged && deltas.size() < max_iter) {
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            next[i] =
                -scaled.dp_hamiltonian(t, m.atoms[i].x, px[i], mu);
            delta = std::max(delta, std::abs(next[i] - alpha[i]));
        }
        alpha.swap(next);
        mu = assemble(alpha);
        deltas.push_back(delta);
        if (delta > tol_mu) {
            ++report.iterations;
        } else {
            converged = true;
        }
    }
    if (!converged) {
        throw NonConvergenceError(
            "solve_mu: displacement still above tol_mu after " +
                std::to_string(max_iter) + " applications",
            deltas);
    }
    report.final_delta = deltas.empty() ? 0.0 : deltas.back();
    if (deltas.size() >= 2 && deltas.front() > 0.0) {
        report.observed_ratio =
            std::pow(deltas.back() / deltas.front(),
                     1.0 / static_cast<double>(deltas.size() - 1));
    }
    report.lambda_qprime = lambda_q(mu, spec.q_prime);
    report.lambda_inf = lambda_q(mu, kInfiniteOrder);
    return {std::move(mu), report};
}

/// Max of |p| sampled at the atom positions of m (the L^inf(m) norm).
inline double sup_p_on_support(const ModelSpec& spec,
                               const VectorField& p_field,
                               const DiscreteMeasure& m) {
    double s = 0.0;
    for (const auto& a : m.atoms) {
        if (a.w > 0.0) {
            s = std::max(s,
                         std::abs(interpolate(spec.grid, p_field, a.x)));
        }
    }
    return s;
}

}  // namespace detail

/// Solve alpha(x) = -scale * D_pH(t, x, p(x), (I, alpha)#m) from alpha == 0.
///
/// `scale` in [0, 1] multiplies the whole momentum gradient, so scale == 0
/// returns m (x) delta_0 exactly with zero iterations.  An all-zero or empty
/// m decouples the mean feedback and the map lands on alpha = -scale * p in
/// a single application; no special casing is required for that.
/// Throws NonConvergenceError (carrying the displacement history) when
/// max_iter applications do not reach tol_mu.
inline std::pair<ControlMeasure, MuSolveReport> solve_mu(
    const ModelSpec& spec, double t, double scale,
    const VectorField& p_field, const DiscreteMeasure& m,
    double tol_mu = 1e-10, std::size_t max_iter = 200) {
    const ScaledModel scaled = lambda_scale(spec, scale);
    return detail::iterate_mu(spec, scaled, t, p_field, m, tol_mu, max_iter,
                              0.0);
}

/// P2 variant of solve_mu along the theta homotopy, theta in (0, 1].
///
/// Runs the same iteration for alpha = -D_pH^theta and then re-runs it from
/// the constant field C0 * theta * (1 + |p|_inf + lambda_qprime), the a
/// priori ceiling on any fixed point.  Monotone couplings admit exactly one
/// fixed point, so the two runs must agree; a gap above 10 * tol_mu raises
/// MonotonicityViolationError.  The q_prime moment of the result is checked
/// against its a priori ceiling before returning.
inline std::pair<ControlMeasure, MuSolveReport> solve_mu_monotone(
    const ModelSpec& spec, double t, double theta,
    const VectorField& p_field, const DiscreteMeasure& m,
    double tol_mu = 1e-10, std::size_t max_iter = 200) {
    detail::require_p2(spec, "solve_mu_monotone");
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw ConfigError(
            "solve_mu_monotone: theta must lie in (0, 1], got " +
            std::to_string(theta));
    }
    const ScaledModel scaled = theta_scale(spec, theta);
    auto primary = detail::iterate_mu(spec, scaled, t, p_field, m, tol_mu,
                                      max_iter, 0.0);

    const ModelConstants& c = spec.constants;
    const double p_inf = detail::sup_p_on_support(spec, p_field, m);
    const double ceiling =
        c.C0 * theta * (1.0 + p_inf + primary.second.lambda_qprime);
    auto probe = detail::iterate_mu(spec, scaled, t, p_field, m, tol_mu,
                                    max_iter, ceiling);
    double gap = 0.0;
    for (std::size_t i = 0; i < primary.first.atoms.size(); ++i) {
        gap = std::max(gap, std::abs(primary.first.atoms[i].alpha -
                                     probe.first.atoms[i].alpha));
    }
    if (gap > 10.0 * tol_mu) {
        throw MonotonicityViolationError(
            "solve_mu_monotone: iteration from 0 and from the a priori "
            "ceiling reached fixed points " +
            std::to_string(gap) +
            " apart; the coupling is not monotone at this slice");
    }

    // Moment ceiling lambda_qprime^q' <= 4 C0^2 theta^q'
    //   + (q'^(q-1) (2 C0)^q / q) theta^q' * |p|^q_{L^q(m)}.
    double p_q = 0.0;
    for (const auto& a : m.atoms) {
        p_q += a.w * std::pow(std::abs(interpolate(spec.grid, p_field, a.x)),
                              spec.q);
    }
    const double theta_pow = std::pow(theta, spec.q_prime);
    const double rhs =
        4.0 * c.C0 * c.C0 * theta_pow +
        std::pow(spec.q_prime, spec.q - 1.0) *
            std::pow(2.0 * c.C0, spec.q) / spec.q * theta_pow * p_q;
    const double lhs =
        std::pow(primary.second.lambda_qprime, spec.q_prime);
    if (lhs > rhs + 2.0 * tol_mu) {
        throw Error(
            "solve_mu_monotone: q_prime moment " + std::to_string(lhs) +
            " exceeds its a priori ceiling " + std::to_string(rhs));
    }
    return primary;
}

}  // namespace mfgc
