#pragma once

// Named reference experiments.  Tests, the acceptance gate, and the sample
// configuration files all build from these, so a constant changed here
// changes everywhere at once and the sample files can be diffed against
// the code that claims to match them.
//
// The coupled presets use phase-shifted waves: with even data the crowd
// stays symmetric, the mean control vanishes identically, and the
// interaction channel would go unexercised.

#include <cstddef>

#include "mfgc/config.hpp"
#include "mfgc/model.hpp"

namespace mfgc {
namespace presets {

inline FieldSpec cosine(double amplitude, int waves, double phase) {
    FieldSpec f;
    f.kind = FieldSpec::Kind::Cosine;
    f.amplitude = amplitude;
    f.waves = waves;
    f.phase = phase;
    return f;
}

inline FieldSpec sine_pair(double amplitude) {
    FieldSpec f;
    f.kind = FieldSpec::Kind::SinePair;
    f.amplitude = amplitude;
    return f;
}

/// Reflecting quadratic family, moderate interaction through the terminal
/// coupling.  The workhorse: most bound checks run on this.
inline LabConfig standard_p1(std::size_t n_cells = 128,
                             std::size_t n_steps = 256) {
    LabConfig cfg;
    cfg.model.family = Variant::P1Quadratic;
    cfg.model.boundary = Boundary::Neumann;
    cfg.model.n_cells = n_cells;
    cfg.model.kappa = 0.3;
    cfg.model.nu = 0.2;
    cfg.model.kernel_width = 0.05;
    cfg.model.c_g = 0.2;
    cfg.model.potential = cosine(0.05, 1, 0.3);
    cfg.model.terminal = cosine(0.1, 1, 0.9);
    cfg.solver.horizon = 1.0;
    cfg.solver.n_time_steps = n_steps;
    return cfg;
}

/// Monotone family with a running-cost coupling.
inline LabConfig standard_p2(std::size_t n_cells = 128,
                             std::size_t n_steps = 256) {
    LabConfig cfg = standard_p1(n_cells, n_steps);
    cfg.model.family = Variant::P2Monotone;
    cfg.model.c_f = 0.5;
    cfg.model.c_g = 0.0;
    return cfg;
}

/// Absorbing walls.  Terminal data must vanish at the walls: a cosine
/// would fight the boundary cutoff, whose ramp is steep enough to blow
/// the drift budget.  The crowd starts as a sine bump for the same reason.
inline LabConfig standard_dirichlet(std::size_t n_cells = 128,
                                    std::size_t n_steps = 256) {
    LabConfig cfg = standard_p1(n_cells, n_steps);
    cfg.model.boundary = Boundary::Dirichlet;
    cfg.model.c_g = 0.0;
    cfg.model.terminal = sine_pair(0.04);
    cfg.crowd.kind = CrowdSpec::Kind::SineBump;
    return cfg;
}

/// No interaction and flat data: the exact value is constant in space, its
/// gradient vanishes, and the sweep map lands on its fixed point in one
/// application, so every continuation stage reports a single iteration.
/// Damping is off because a damped blend would creep instead of jump.
inline LabConfig decoupled_sample(std::size_t n_cells = 64,
                                  std::size_t n_steps = 64) {
    LabConfig cfg;
    cfg.model.family = Variant::P1Quadratic;
    cfg.model.boundary = Boundary::Neumann;
    cfg.model.n_cells = n_cells;
    cfg.model.kappa = 0.0;
    cfg.model.nu = 0.2;
    cfg.model.kernel_width = 0.05;
    cfg.model.terminal.kind = FieldSpec::Kind::Constant;
    cfg.model.terminal.value = 0.1;
    cfg.solver.horizon = 0.5;
    cfg.solver.n_time_steps = n_steps;
    cfg.solver.damping = 1.0;
    return cfg;
}

}  // namespace presets
}  // namespace mfgc
