#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"
#include "mfgc/measures.hpp"

namespace mfgc {

enum class Variant { P1Quadratic, P2Monotone };

inline const char* to_string(Variant v) {
    return v == Variant::P1Quadratic ? "P1Quadratic" : "P2Monotone";
}

/**
 * Structural constants of the model family, quoted by the estimate checker.
 * C0 bounds the data (potential, terminal data, couplings and their first
 * derivatives); lambda0 is the slope of the control interaction in the
 * moment bounds; lambda1, lambda2 weight the moment terms in the coercivity
 * inequality. The chain is feasible only when
 *     lambda1 < (1 - lambda0)^q' / C0^q' - C0 * lambda2   (A6),
 * with q' the conjugate growth exponent (2 for this family).
 */
struct ModelConstants {
    double C0 = 2.0;
    double lambda0 = 1e-9;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

/// Feasibility margin of the constant chain; the spec is accepted iff > 0.
inline double constants_feasibility_margin(const ModelConstants& c,
                                           double q_prime) {
    return std::pow(1.0 - c.lambda0, q_prime) / std::pow(c.C0, q_prime) -
           c.C0 * c.lambda2 - c.lambda1;
}

/**
 * Constants derived once by hand for the quadratic family with linear
 * control interaction kappa * Z:
 *   - lambda0 = kappa: the interaction enters every moment bound through
 *     |Z(mu1) - Z(mu2)| <= ||alpha1 - alpha2||_{L1(m)}, slope kappa;
 *     floored at 1e-9 so it stays in the open interval (0,1) when kappa = 0.
 *   - lambda1 = lambda2 = 0: coercivity D_pH.p - H = p^2/2 - phi (problem 1)
 *     needs no moment term, and the feasibility margin is then positive for
 *     every kappa < 1.
 *   - C0: envelope of 2, the data sup-norms plus Lipschitz bounds, and the
 *     coupling amplitudes; sup(eta * eta) <= 1/(2 sigma sqrt(pi)) for the
 *     Gaussian kernel, inflated 1% for the truncation renormalization.
 */
inline ModelConstants derive_constants(const Grid1D& grid, double kappa,
                                       const ScalarField& potential,
                                       const ScalarField& terminal_base,
                                       double c_f, double c_g,
                                       double kernel_width) {
    ModelConstants c;
    c.lambda0 = std::max(kappa, 1e-9);
    c.lambda1 = 0.0;
    c.lambda2 = 0.0;
    double kernel_sup =
        1.01 / (2.0 * kernel_width * std::sqrt(3.14159265358979323846));
    double data = 1.0 + sup_norm(potential) + sup_norm(gradient(grid, potential));
    double coupling = 1.0 + sup_norm(terminal_base) +
                      sup_norm(gradient(grid, terminal_base)) +
                      kernel_sup * (c_f + c_g);
    c.C0 = std::max({2.0, data, coupling});
    return c;
}

/// Construction arguments for ModelSpec::make; empty fields mean zeros.
struct ModelParams {
    Variant variant = Variant::P1Quadratic;
    double kappa = 0.0;
    double nu = 0.1;
    ScalarField potential;
    ScalarField terminal_base;
    double c_f = 0.0;
    double c_g = 0.0;
    double kernel_width = 0.1;
    double q0 = 2.0;
    std::optional<ModelConstants> constants;
};

/**
 * Immutable model instance: the quadratic Hamiltonian family with linear
 * control interaction, on a fixed grid.
 *
 *   P1Quadratic:  H(t,x,p,mu) = p^2/2 + kappa p Z(mu) + phi(x)
 *   P2Monotone:   L(t,x,a,mu) = a^2/2 + kappa a Z(mu) + phi(x),
 *                 whose dual is H(t,x,p,mu) = (p + kappa Z)^2/2 - phi(x)
 *
 * where Z(mu) is the raw first moment of the control marginal. Both
 * variants share D_pH = p + kappa Z. Couplings are doubly smoothed
 * densities: f = c_f (eta*eta*m), g = chi (G0 + c_g (eta*eta*m)) with eta a
 * renormalized truncated Gaussian (support 4 sigma, reflected across the
 * walls under Neumann, zero-padded under Dirichlet) and chi a cutoff that
 * vanishes at the walls under Dirichlet so the terminal data respects the
 * boundary condition.
 */
struct ModelSpec {
    Grid1D grid;
    Variant variant = Variant::P1Quadratic;
    double kappa = 0.0;
    double nu = 0.1;
    ScalarField potential;
    ScalarField terminal_base;
    double c_f = 0.0;
    double c_g = 0.0;
    double kernel_width = 0.1;
    double q = 2.0;
    double q_prime = 2.0;
    double q0 = 2.0;
    ModelConstants constants;
    ScalarField cutoff;  // chi, ones under Neumann

    static ModelSpec make(const Grid1D& grid, ModelParams params) {
        ModelSpec s;
        s.grid = grid;
        s.variant = params.variant;

        if (!(params.kappa >= 0.0) || !std::isfinite(params.kappa))
            throw ConfigError("model: kappa must be finite and >= 0");
        if (params.kappa >= 1.0)
            throw SpecRejectedError(
                "A7", "model: kappa = " + std::to_string(params.kappa) +
                          " rejected by A7; the control interaction must be "
                          "a contraction (kappa < 1)");
        s.kappa = params.kappa;

        if (!(params.nu > 0.0) || !std::isfinite(params.nu))
            throw ConfigError("model: nu must be finite and > 0");
        s.nu = params.nu;

        auto take_field = [&](ScalarField f, const char* name) {
            if (f.empty()) return ScalarField(grid.n_nodes(), 0.0);
            require_shape(grid, f, name);
            return f;
        };
        s.potential = take_field(std::move(params.potential), "model potential");
        s.terminal_base =
            take_field(std::move(params.terminal_base), "model terminal_base");

        if (!(params.c_f >= 0.0) || !(params.c_g >= 0.0))
            throw ConfigError("model: coupling strengths must be >= 0");
        if (params.variant == Variant::P1Quadratic && params.c_f != 0.0)
            throw ConfigError(
                "model: the P1Quadratic family has no state coupling; "
                "set c_f = 0");
        if (params.variant == Variant::P2Monotone &&
            grid.boundary == Boundary::Dirichlet && params.c_g != 0.0)
            throw ConfigError(
                "model: P2Monotone with Dirichlet walls requires c_g = 0; "
                "the boundary cutoff breaks the terminal coupling's "
                "monotonicity, which f carries alone");
        s.c_f = params.c_f;
        s.c_g = params.c_g;

        if (!(params.kernel_width > 0.0))
            throw ConfigError("model: kernel_width must be > 0");
        if (4.0 * params.kernel_width > grid.width())
            throw ConfigError(
                "model: kernel support 4*kernel_width exceeds the domain "
                "width; the single-reflection smoothing is exact only below "
                "that");
        s.kernel_width = params.kernel_width;

        if (!(params.q0 >= 1.0 && params.q0 <= 2.0))
            throw ConfigError("model: q0 must lie in [1, 2]");
        s.q0 = params.q0;

        s.constants = params.constants.has_value()
                          ? *params.constants
                          : derive_constants(grid, s.kappa, s.potential,
                                             s.terminal_base, s.c_f, s.c_g,
                                             s.kernel_width);
        if (!(s.constants.C0 > 0.0) || !(s.constants.lambda1 >= 0.0) ||
            !(s.constants.lambda2 >= 0.0))
            throw ConfigError("model: C0 must be > 0 and lambda1, lambda2 >= 0");
        if (!(s.constants.lambda0 > 0.0 && s.constants.lambda0 < 1.0))
            throw ConfigError("model: lambda0 must lie in (0, 1)");
        if (constants_feasibility_margin(s.constants, s.q_prime) <= 0.0)
            throw SpecRejectedError(
                "A6", "model: constant chain infeasible (A6): lambda1 = " +
                          std::to_string(s.constants.lambda1) +
                          " is not below (1-lambda0)^q'/C0^q' - C0 lambda2 = " +
                          std::to_string(std::pow(1.0 - s.constants.lambda0,
                                                  s.q_prime) /
                                             std::pow(s.constants.C0,
                                                      s.q_prime) -
                                         s.constants.C0 * s.constants.lambda2));

        s.cutoff = make_cutoff(grid, s.kernel_width);
        s.kernel_ = make_kernel(grid, s.kernel_width);
        return s;
    }

    /// One pass of the smoothing operator, (eta * v)(x_i) by quadrature.
    ScalarField smooth(const ScalarField& v) const {
        std::size_t n = grid.n_nodes();
        ScalarField out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            const double* row = kernel_.data() + i * n;
            for (std::size_t j = 0; j < n; ++j)
                acc += row[j] * grid.weight(j) * v[j];
            out[i] = acc;
        }
        return out;
    }

    ScalarField smooth_twice(const ScalarField& v) const {
        return smooth(smooth(v));
    }

  private:
    // Symmetric kernel values k(x_i, x_j), row-major. Symmetry is what makes
    // the coupling monotonicity identity exact in the node quadrature.
    std::vector<double> kernel_;

    static ScalarField make_cutoff(const Grid1D& grid, double sigma) {
        std::size_t n = grid.n_nodes();
        ScalarField chi(n, 1.0);
        if (grid.boundary == Boundary::Neumann) return chi;
        double margin = std::min(4.0 * sigma, grid.width() / 4.0);
        auto smooth_step = [](double t) {
            t = std::clamp(t, 0.0, 1.0);
            return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
        };
        for (std::size_t i = 0; i < n; ++i) {
            double x = grid.node(i);
            chi[i] = smooth_step((x - grid.x_lo) / margin) *
                     smooth_step((grid.x_hi - x) / margin);
        }
        return chi;
    }

    static std::vector<double> make_kernel(const Grid1D& grid, double sigma) {
        std::size_t n = grid.n_nodes();
        // Truncated Gaussian on [-4 sigma, 4 sigma], renormalized to unit
        // mass: the erf factor restores what the truncation removes.
        double norm = sigma * std::sqrt(2.0 * 3.14159265358979323846) *
                      std::erf(4.0 / std::sqrt(2.0));
        auto eta = [&](double z) {
            if (std::abs(z) > 4.0 * sigma) return 0.0;
            return std::exp(-0.5 * z * z / (sigma * sigma)) / norm;
        };
        std::vector<double> k(n * n);
        bool reflect = grid.boundary == Boundary::Neumann;
        for (std::size_t i = 0; i < n; ++i) {
            double xi = grid.node(i);
            for (std::size_t j = i; j < n; ++j) {
                double xj = grid.node(j);
                double v = eta(xi - xj);
                if (reflect)
                    v += eta(xi + xj - 2.0 * grid.x_lo) +
                         eta(2.0 * grid.x_hi - xi - xj);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        return k;
    }
};

namespace detail {

// Family evaluators with the control moment Z already extracted; shared by
// the plain and the homotopy-scaled entry points.

inline double hamiltonian_with_mean(const ModelSpec& s, double x, double p,
                                    double z) {
    double phi = interpolate(s.grid, s.potential, x);
    if (s.variant == Variant::P1Quadratic)
        return 0.5 * p * p + s.kappa * p * z + phi;
    double v = p + s.kappa * z;
    return 0.5 * v * v - phi;
}

inline double dp_hamiltonian_with_mean(const ModelSpec& s, double p, double z) {
    return p + s.kappa * z;
}

inline double lagrangian_with_mean(const ModelSpec& s, double x, double a,
                                   double z) {
    return 0.5 * a * a + s.kappa * a * z +
           interpolate(s.grid, s.potential, x);
}

inline double d_alpha_lagrangian_with_mean(const ModelSpec& s, double a,
                                           double z) {
    return a + s.kappa * z;
}

inline void require_p2(const ModelSpec& s, const char* op) {
    if (s.variant != Variant::P2Monotone)
        throw UnsupportedVariantError(
            std::string(op) +
            ": only the P2Monotone family exposes a Lagrangian");
}

}  // namespace detail

inline double hamiltonian(const ModelSpec& spec, double t, double x, double p,
                          const ControlMeasure& mu) {
    static_cast<void>(t);  // the family is time-homogeneous
    return detail::hamiltonian_with_mean(spec, x, p, mu.control_mean());
}

/// Gradient in p; equals p + kappa Z(mu) for both variants.
inline double dp_hamiltonian(const ModelSpec& spec, double t, double x,
                             double p, const ControlMeasure& mu) {
    static_cast<void>(t);
    static_cast<void>(x);
    return detail::dp_hamiltonian_with_mean(spec, p, mu.control_mean());
}

inline double lagrangian(const ModelSpec& spec, double t, double x,
                         double alpha, const ControlMeasure& mu) {
    static_cast<void>(t);
    detail::require_p2(spec, "lagrangian");
    return detail::lagrangian_with_mean(spec, x, alpha, mu.control_mean());
}

inline double d_alpha_lagrangian(const ModelSpec& spec, double t, double x,
                                 double alpha, const ControlMeasure& mu) {
    static_cast<void>(t);
    static_cast<void>(x);
    detail::require_p2(spec, "d_alpha_lagrangian");
    return detail::d_alpha_lagrangian_with_mean(spec, alpha,
                                                mu.control_mean());
}

/**
 * Evaluators at homotopy scale s in [0, 1]. Two scalings share this type:
 *
 *   - Theta semantics (theta_scale): H^s(t,x,p,mu) = s H(t,x,p,Theta mu)
 *     where Theta divides the control coordinate by s, so for this family
 *     Z(Theta mu) = Z(mu)/s and D_pH^s = s p + kappa Z. The interaction
 *     keeps its full strength along the homotopy.
 *   - Plain semantics (lambda_scale): every evaluator is multiplied by s
 *     with mu untouched, the continuation used for problem 1.
 *
 * Both are identically zero at s = 0. The scaled Lagrangian
 * L^s(a) = s L(a/s, Theta mu) is undefined at s = 0 (it degenerates to the
 * indicator of a = 0) and throws there.
 */
struct ScaledModel {
    const ModelSpec* spec;
    double scale;
    bool theta_semantics;

    double hamiltonian(double t, double x, double p,
                       const ControlMeasure& mu) const {
        static_cast<void>(t);
        if (scale == 0.0) return 0.0;
        double z = mu.control_mean();
        if (theta_semantics)
            return scale *
                   detail::hamiltonian_with_mean(*spec, x, p, z / scale);
        return scale * detail::hamiltonian_with_mean(*spec, x, p, z);
    }

    double dp_hamiltonian(double t, double x, double p,
                          const ControlMeasure& mu) const {
        static_cast<void>(t);
        static_cast<void>(x);
        if (scale == 0.0) return 0.0;
        double z = mu.control_mean();
        if (theta_semantics) return scale * p + spec->kappa * z;
        return scale * (p + spec->kappa * z);
    }

    double lagrangian(double t, double x, double alpha,
                      const ControlMeasure& mu) const {
        static_cast<void>(t);
        detail::require_p2(*spec, "scaled lagrangian");
        require_positive_scale("lagrangian");
        double z = mu.control_mean();
        if (theta_semantics)
            return scale * detail::lagrangian_with_mean(*spec, x, alpha / scale,
                                                        z / scale);
        return scale * detail::lagrangian_with_mean(*spec, x, alpha, z);
    }

    double d_alpha_lagrangian(double t, double x, double alpha,
                              const ControlMeasure& mu) const {
        static_cast<void>(t);
        static_cast<void>(x);
        detail::require_p2(*spec, "scaled d_alpha_lagrangian");
        require_positive_scale("d_alpha_lagrangian");
        double z = mu.control_mean();
        if (theta_semantics) return (alpha + spec->kappa * z) / scale;
        return scale * (alpha + spec->kappa * z);
    }

  private:
    void require_positive_scale(const char* op) const {
        if (scale == 0.0)
            throw Error(std::string("scaled ") + op +
                        " is undefined at scale 0; the Lagrangian "
                        "degenerates while H and D_pH vanish");
    }
};

/// Theta homotopy of the second problem: H^theta(t,x,p,mu) =
/// theta H(t,x,p,Theta mu) with the control coordinate divided by theta.
inline ScaledModel theta_scale(const ModelSpec& spec, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0))
        throw ConfigError("theta_scale: theta must lie in [0, 1]");
    return ScaledModel{&spec, theta, true};
}

/// Lambda homotopy of the first problem: plain multiplication of H by
/// lambda, the measure argument untouched.
inline ScaledModel lambda_scale(const ModelSpec& spec, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ConfigError("lambda_scale: lambda must lie in [0, 1]");
    return ScaledModel{&spec, lambda, false};
}

namespace detail {

/// Clamp a density to [0, inf); entries below -1e-12 or NaN are rejected.
inline ScalarField require_density(const Grid1D& grid, const ScalarField& m,
                                   const char* op) {
    require_shape(grid, m, op);
    ScalarField out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (std::isnan(m[i]) || m[i] < -1e-12)
            throw InvalidMeasureError(std::string(op) +
                                      ": density has entry " +
                                      std::to_string(m[i]) + " at node " +
                                      std::to_string(i));
        out[i] = std::max(m[i], 0.0);
    }
    return out;
}

}  // namespace detail

/// State coupling f(t,x,m) = c_f (eta * eta * m)(x).
inline ScalarField coupling_f(const ModelSpec& spec, double t,
                              const ScalarField& m) {
    static_cast<void>(t);
    ScalarField d = detail::require_density(spec.grid, m, "coupling_f");
    if (spec.c_f == 0.0) return ScalarField(spec.grid.n_nodes(), 0.0);
    ScalarField out = spec.smooth_twice(d);
    for (double& v : out) v *= spec.c_f;
    return out;
}

/// Terminal coupling g(x,m) = chi(x) (G0(x) + c_g (eta * eta * m)(x)).
inline ScalarField coupling_g(const ModelSpec& spec, const ScalarField& m_T) {
    ScalarField d = detail::require_density(spec.grid, m_T, "coupling_g");
    std::size_t n = spec.grid.n_nodes();
    ScalarField out(n);
    if (spec.c_g == 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            out[i] = spec.cutoff[i] * spec.terminal_base[i];
        return out;
    }
    ScalarField s = spec.smooth_twice(d);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = spec.cutoff[i] * (spec.terminal_base[i] + spec.c_g * s[i]);
    return out;
}

/// Brute-force Legendre probe: grid maximum of -p a - L(t,x,a,mu).
struct LegendreCheck {
    double value;        // grid maximum
    double discrepancy;  // value - hamiltonian(...)
    double argmax;       // maximizing alpha; the dual predicts -D_pH
};

inline LegendreCheck legendre_check(const ModelSpec& spec, double t, double x,
                                    double p, const ControlMeasure& mu,
                                    double alpha_grid_halfwidth, int n_alpha) {
    detail::require_p2(spec, "legendre_check");
    if (n_alpha < 3)
        throw ConfigError("legendre_check: need at least 3 grid points");
    double z = mu.control_mean();
    double best = -std::numeric_limits<double>::infinity();
    double best_a = 0.0;
    double step = 2.0 * alpha_grid_halfwidth / (n_alpha - 1);
    for (int j = 0; j < n_alpha; ++j) {
        double a = -alpha_grid_halfwidth + step * j;
        double v = -p * a - detail::lagrangian_with_mean(spec, x, a, z);
        if (v > best) {
            best = v;
            best_a = a;
        }
    }
    return {best, best - hamiltonian(spec, t, x, p, mu), best_a};
}

}  // namespace mfgc
