#pragma once

#include <stdexcept>
#include <string>

namespace mudich {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A point lies outside the domain on which a map is defined (trumpet,
/// tubular neighborhood, stencil box, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Quadrature, integration or iteration failed to converge.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// The computation cannot decide the question at the configured horizon
/// or resolution; carries a trend / diagnostic message.
class InconclusiveError : public Error {
public:
    explicit InconclusiveError(const std::string& what, double where = 0.0)
        : Error(what), where_(where) {}
    [[nodiscard]] double where() const noexcept { return where_; }

private:
    double where_;
};

/// The spectral search window does not contain the whole spectrum.
class WindowError : public Error {
public:
    using Error::Error;
};

/// A combinatorial enumeration exceeded its configured budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Scenario file could not be parsed or validated.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace mudich
