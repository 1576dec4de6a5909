#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace frgrav {

// Argument outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Incompatible grids, axis counts or array shapes.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Metric block with (near) vanishing determinant.
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input violates a family-specific requirement of a constructor.
struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct OutOfRangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Grid crosses a zero of the lapse-type coefficient without excision.
struct HorizonError : std::runtime_error {
    HorizonError(const std::string& msg, double root)
        : std::runtime_error(msg), root(root) {}
    double root;
};

// Iterative solver failed to reach its tolerance.
struct SolverError : std::runtime_error {
    SolverError(const std::string& msg, std::vector<double> history)
        : std::runtime_error(msg), history(std::move(history)) {}
    double final_residual() const { return history.empty() ? 0.0 : history.back(); }
    std::vector<double> history;
};

// Series partial sums stopped converging.
struct DivergenceError : SolverError {
    using SolverError::SolverError;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace frgrav
