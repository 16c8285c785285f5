#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "mfgc/errors.hpp"
#include "mfgc/grid.hpp"

namespace mfgc {

/// Sentinel for the essential-sup moment Λ_∞.
inline constexpr double kInfiniteOrder =
    std::numeric_limits<double>::infinity();

/**
 * Nonnegative atomic measure on the domain. Weights are quadrature masses,
 * so a density field m maps to w_i = m(x_i) * node weight. Sub-probability
 * throughout: total mass stays within 1 + 1e-10 everywhere it is produced.
 */
struct DiscreteMeasure {
    struct Atom {
        double x;
        double w;
    };
    std::vector<Atom> atoms;

    double total_mass() const {
        double m = 0.0;
        for (const auto& a : atoms) m += a.w;
        return m;
    }
};

/**
 * Atomic measure on state-control pairs (x_i, alpha_i) with masses w_i.
 * Treat as immutable once filled: control_mean() caches on first call and
 * mutating atoms afterwards would leave the cache stale.
 */
struct ControlMeasure {
    struct Atom {
        double x;
        double alpha;
        double w;
    };
    std::vector<Atom> atoms;

    double total_mass() const {
        double m = 0.0;
        for (const auto& a : atoms) m += a.w;
        return m;
    }

    /// First control moment ∫ alpha dμ (not normalized). O(1) after the
    /// first call; evaluators query it once per node.
    double control_mean() const {
        if (!mean_valid_) {
            double z = 0.0;
            for (const auto& a : atoms) z += a.w * a.alpha;
            mean_ = z;
            mean_valid_ = true;
        }
        return mean_;
    }

    /// State marginal.
    DiscreteMeasure marginal_x() const {
        DiscreteMeasure m;
        m.atoms.reserve(atoms.size());
        for (const auto& a : atoms) m.atoms.push_back({a.x, a.w});
        return m;
    }

  private:
    mutable double mean_ = 0.0;
    mutable bool mean_valid_ = false;
};

/// Node-weighted measure of a density field: w_i = m_i * trapezoid weight.
inline DiscreteMeasure measure_from_field(const Grid1D& grid,
                                          const ScalarField& m) {
    require_shape(grid, m, "measure_from_field");
    DiscreteMeasure mu;
    mu.atoms.reserve(grid.n_nodes());
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        double v = m[i];
        if (std::isnan(v) || v < -1e-12)
            throw InvalidMeasureError(
                "measure_from_field: negative density " + std::to_string(v) +
                " at node " + std::to_string(i));
        mu.atoms.push_back({grid.node(i), std::max(v, 0.0) * grid.weight(i)});
    }
    return mu;
}

/// Density field of a node-aligned measure: v_i = w_i / node weight.
/// Inverse of measure_from_field; atoms must sit on the grid nodes in order.
inline ScalarField density_from_measure(const Grid1D& grid,
                                        const DiscreteMeasure& m) {
    if (m.atoms.size() != grid.n_nodes())
        throw InvalidMeasureError(
            "density_from_measure: expected one atom per node, got " +
            std::to_string(m.atoms.size()));
    ScalarField v(grid.n_nodes());
    for (std::size_t i = 0; i < grid.n_nodes(); ++i) {
        if (std::abs(m.atoms[i].x - grid.node(i)) > 1e-12 * grid.width())
            throw InvalidMeasureError(
                "density_from_measure: atom " + std::to_string(i) +
                " is not on its node");
        v[i] = m.atoms[i].w / grid.weight(i);
    }
    return v;
}

/**
 * Joint measure (I, alpha)#m: each atom of m paired with the control field
 * value at its location (linear interpolation, exact at grid nodes).
 */
inline ControlMeasure pushforward(const Grid1D& grid, const DiscreteMeasure& m,
                                  const VectorField& alpha) {
    ControlMeasure mu;
    mu.atoms.reserve(m.atoms.size());
    for (const auto& a : m.atoms)
        mu.atoms.push_back({a.x, interpolate(grid, alpha, a.x), a.w});
    return mu;
}

/**
 * Control moment Λ_q(μ) = (∫ |alpha|^q dμ)^(1/q); Λ_∞ is the largest |alpha|
 * carried by an atom of positive mass. Zero measure gives 0 by convention.
 */
inline double lambda_q(const ControlMeasure& mu, double q) {
    if (mu.atoms.empty()) return 0.0;
    if (q == kInfiniteOrder) {
        double m = 0.0;
        for (const auto& a : mu.atoms)
            if (a.w > 0.0) m = std::max(m, std::abs(a.alpha));
        return m;
    }
    if (q < 1.0) throw MetricDomainError("lambda_q: order must be >= 1");
    double acc = 0.0;
    for (const auto& a : mu.atoms) acc += a.w * std::pow(std::abs(a.alpha), q);
    if (acc <= 0.0) return 0.0;
    return std::pow(acc, 1.0 / q);
}

namespace detail {

/// Signed weight per distinct position, positions ascending.
inline std::vector<std::pair<double, double>> merged_difference(
    const DiscreteMeasure& a, const DiscreteMeasure& b) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(a.atoms.size() + b.atoms.size());
    for (const auto& at : a.atoms) pts.emplace_back(at.x, at.w);
    for (const auto& at : b.atoms) pts.emplace_back(at.x, -at.w);
    std::sort(pts.begin(), pts.end(),
              [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<std::pair<double, double>> merged;
    for (const auto& p : pts) {
        if (!merged.empty() && merged.back().first == p.first)
            merged.back().second += p.second;
        else
            merged.push_back(p);
    }
    return merged;
}

/**
 * Concave piecewise-linear function on [-1, 1] as a breakpoint polyline.
 * Used by the chain LP: all three transformations below (add a linear term,
 * sliding-window max, clip) preserve concavity and piecewise linearity.
 */
struct Polyline {
    std::vector<double> xs;
    std::vector<double> ys;

    double eval(double x) const {
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t j = static_cast<std::size_t>(it - xs.begin());
        double t = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
        return ys[j - 1] * (1.0 - t) + ys[j] * t;
    }

    double max_value() const {
        return *std::max_element(ys.begin(), ys.end());
    }

    void add_linear(double c) {
        for (std::size_t j = 0; j < xs.size(); ++j) ys[j] += c * xs[j];
    }

    /// r(x) = max over the window [x-d, x+d] of this function, on [-1, 1].
    Polyline window_max(double d) const {
        double peak = max_value();
        std::size_t lo = 0;
        while (ys[lo] < peak) ++lo;
        std::size_t hi = xs.size() - 1;
        while (ys[hi] < peak) --hi;
        Polyline wide;
        for (std::size_t j = 0; j <= lo; ++j) {
            wide.xs.push_back(xs[j] - d);
            wide.ys.push_back(ys[j]);
        }
        if (wide.xs.back() < xs[hi] + d) {
            wide.xs.push_back(xs[hi] + d);
            wide.ys.push_back(peak);
        }
        for (std::size_t j = hi + 1; j < xs.size(); ++j) {
            wide.xs.push_back(xs[j] + d);
            wide.ys.push_back(ys[j]);
        }
        return wide.clip(-1.0, 1.0);
    }

    Polyline clip(double lo, double hi) const {
        Polyline out;
        out.xs.push_back(lo);
        out.ys.push_back(eval(lo));
        for (std::size_t j = 0; j < xs.size(); ++j) {
            if (xs[j] > lo && xs[j] < hi) {
                out.xs.push_back(xs[j]);
                out.ys.push_back(ys[j]);
            }
        }
        out.xs.push_back(hi);
        out.ys.push_back(eval(hi));
        return out;
    }
};

}  // namespace detail

/**
 * Order-1 Wasserstein distance between probability measures on the line,
 * computed exactly as the integral of |CDF_a - CDF_b|.
 */
inline double w1(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    if (std::abs(a.total_mass() - 1.0) > 1e-8 ||
        std::abs(b.total_mass() - 1.0) > 1e-8)
        throw MetricDomainError(
            "w1: defined for probability measures; masses are " +
            std::to_string(a.total_mass()) + " and " +
            std::to_string(b.total_mass()));
    auto diff = detail::merged_difference(a, b);
    double dist = 0.0, cdf = 0.0;
    for (std::size_t j = 0; j + 1 < diff.size(); ++j) {
        cdf += diff[j].second;
        dist += std::abs(cdf) * (diff[j + 1].first - diff[j].first);
    }
    return dist;
}

/**
 * Bounded-Lipschitz (flat) distance restricted to the atom positions:
 * sup of ∫φ d(a-b) over |φ| ≤ 1 with |φ(x)-φ(y)| ≤ |x-y| on consecutive
 * support points. The chain-constrained linear program is solved exactly by
 * dynamic programming over concave piecewise-linear value functions.
 */
inline double dstar(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    auto diff = detail::merged_difference(a, b);
    if (diff.empty()) return 0.0;
    detail::Polyline value;
    value.xs = {-1.0, 1.0};
    value.ys = {0.0, 0.0};
    for (std::size_t j = 0; j + 1 < diff.size(); ++j) {
        value.add_linear(diff[j].second);
        value = value.window_max(diff[j + 1].first - diff[j].first);
    }
    value.add_linear(diff.back().second);
    return value.max_value();
}

/**
 * Sub-probability restriction: absolute value of the weights, rescaled to
 * unit mass when the total exceeds 1; the zero measure maps to itself.
 */
inline DiscreteMeasure restrict_normalize(const DiscreteMeasure& m) {
    DiscreteMeasure out;
    out.atoms.reserve(m.atoms.size());
    double mass = 0.0;
    for (const auto& a : m.atoms) mass += std::abs(a.w);
    double scale = mass > 1.0 ? 1.0 / mass : 1.0;
    for (const auto& a : m.atoms)
        out.atoms.push_back({a.x, std::abs(a.w) * scale});
    return out;
}

/// Field version of the sub-probability restriction (L1 norm by trapezoid).
inline ScalarField restrict_normalize(const Grid1D& grid,
                                      const ScalarField& m) {
    require_shape(grid, m, "restrict_normalize");
    ScalarField absd(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) absd[i] = std::abs(m[i]);
    double mass = integrate(grid, absd);
    if (mass > 1.0) {
        double inv = 1.0 / mass;
        for (double& v : absd) v *= inv;
    }
    return absd;
}

namespace detail {
inline void append_number(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}
}  // namespace detail

inline std::string to_csv(const DiscreteMeasure& m) {
    std::string out = "x,w\n";
    for (const auto& a : m.atoms) {
        detail::append_number(out, a.x);
        out += ',';
        detail::append_number(out, a.w);
        out += '\n';
    }
    return out;
}

inline std::string to_csv(const ControlMeasure& mu) {
    std::string out = "x,alpha,w\n";
    for (const auto& a : mu.atoms) {
        detail::append_number(out, a.x);
        out += ',';
        detail::append_number(out, a.alpha);
        out += ',';
        detail::append_number(out, a.w);
        out += '\n';
    }
    return out;
}

}  // namespace mfgc
