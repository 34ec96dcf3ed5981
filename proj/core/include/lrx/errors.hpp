#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrx {

// Shape or arity mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A precondition stated by an operation's contract was violated.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid parameter value (e.g. condition number below 1).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A Gram matrix lost positive definiteness; carries the offending
// smallest singular value and, when known, the solver iteration.
class RankCollapseError : public std::runtime_error {
public:
    RankCollapseError(const std::string& what, double sigma_min)
        : std::runtime_error(what), sigma_min_(sigma_min) {}
    RankCollapseError(const std::string& what, double sigma_min, std::size_t iteration)
        : std::runtime_error(what), sigma_min_(sigma_min), iteration_(iteration), has_iteration_(true) {}

    double sigma_min() const noexcept { return sigma_min_; }
    bool has_iteration() const noexcept { return has_iteration_; }
    std::size_t iteration() const noexcept { return iteration_; }

private:
    double sigma_min_ = 0.0;
    std::size_t iteration_ = 0;
    bool has_iteration_ = false;
};

// Spectral initialization produced a rank-deficient factor pair.
class DegenerateInitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Experiment configuration problem; carries the offending field name.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config field '" + field + "': " + what), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace lrx
