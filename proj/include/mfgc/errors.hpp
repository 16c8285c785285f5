#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfgc {

/** Base class for all library errors. */
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Mismatched field/grid lengths.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Evaluation outside the grid domain.
class InterpolationError : public Error {
public:
    using Error::Error;
};

/// Metric called outside its domain (e.g. w1 on measures of unequal mass).
class MetricDomainError : public Error {
public:
    using Error::Error;
};

/// Negative-mass density or malformed measure input.
class InvalidMeasureError : public Error {
public:
    using Error::Error;
};

/// Operation not defined for the given model variant.
class UnsupportedVariantError : public Error {
public:
    using Error::Error;
};

/// Model data violates a structural assumption; carries the assumption id.
class SpecRejectedError : public Error {
public:
    SpecRejectedError(std::string assumption, const std::string& what)
        : Error(what), assumption_(std::move(assumption)) {}

    const std::string& assumption() const { return assumption_; }

private:
    std::string assumption_;
};

/// Malformed configuration, stability-budget or CFL violation.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Two distinct fixed points were found where monotonicity promises one.
class MonotonicityViolationError : public Error {
public:
    using Error::Error;
};

/// Iteration failed to converge; carries the residual history.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}

    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace mfgc
