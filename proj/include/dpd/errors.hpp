#pragma once

#include <stdexcept>
#include <string>

namespace dpd {

/// Non-finite or out-of-family parameter values.
class InvalidParameter : public std::invalid_argument {
public:
    explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

/// A point lies outside the support where the operation is undefined.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Natural parameters outside the range representable by the unconstrained map.
class RangeError : public std::range_error {
public:
    explicit RangeError(const std::string& what) : std::range_error(what) {}
};

/// Inconsistent configuration: unsupported backend, proposal/support mismatch, bad CLI input.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Objective cannot be evaluated (e.g. log of a zero power mean).
class ObjectiveUndefined : public std::runtime_error {
public:
    explicit ObjectiveUndefined(const std::string& what) : std::runtime_error(what) {}
};

/// A maximum likelihood initializer could not produce an estimate.
class InitFailure : public std::runtime_error {
public:
    explicit InitFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpd
