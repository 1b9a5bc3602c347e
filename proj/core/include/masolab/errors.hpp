#pragma once

#include <stdexcept>
#include <string>

namespace masolab {

/// Operand shapes do not chain (matrix/vector/layer dimension mismatch).
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A parameter lies outside its admissible domain (e.g. beta outside (0,1)).
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An enumeration would exceed its configured budget.
class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A least-squares system has no exact solution; carries the worst residual.
class InconsistentSystemError : public std::runtime_error {
public:
    InconsistentSystemError(const std::string& what, double max_residual)
        : std::runtime_error(what), max_residual_(max_residual) {}
    double max_residual() const noexcept { return max_residual_; }

private:
    double max_residual_;
};

/// An iterative method did not meet its tolerance within the iteration budget.
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace masolab
