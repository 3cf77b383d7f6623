#pragma once

#include <stdexcept>
#include <string>

namespace semiqed {

/// Base class of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (dimension mismatch, missing jet order, ...).
struct ContractError : Error {
    using Error::Error;
};

/// Malformed or inconsistent configuration / model file.
struct ConfigError : Error {
    using Error::Error;
};

/// A quadrature grid cannot resolve what was asked of it.
struct ResolutionError : Error {
    using Error::Error;
};

/// Quadrature did not converge; carries the node-doubling error estimate.
struct QuadratureError : Error {
    QuadratureError(const std::string& what, double estimate_)
        : Error(what + " (estimated error " + std::to_string(estimate_) + ")"), estimate(estimate_) {}
    double estimate;
};

/// ODE or eigen solver failure.
struct SolverError : Error {
    using Error::Error;
};

/// Coherent-state truncation mass above the configured threshold.
struct TruncationError : Error {
    TruncationError(const std::string& what, double tail_)
        : Error(what + " (truncation tail " + std::to_string(tail_) + ")"), tail(tail_) {}
    double tail;
};

/// The model lacks a capability required by the operation (e.g. no rotation representation).
struct CapabilityError : Error {
    using Error::Error;
};

/// Requested expansion order or method is not supported.
struct UnsupportedError : Error {
    using Error::Error;
};

} // namespace semiqed
