#pragma once

#include <stdexcept>
#include <string>

namespace istanet {

// Error taxonomy shared by every module. All derive from std::runtime_error
// so callers that only care about "something failed" can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible extents (channel mismatch, vector length, matrix dims).
struct ShapeError : Error {
  using Error::Error;
};

// Argument outside the mathematical domain (negative threshold, M > N, ...).
struct DomainError : Error {
  using Error::Error;
};

// Caller broke an API precondition (non-scalar loss, empty batch, wrong variant).
struct ContractError : Error {
  using Error::Error;
};

// Malformed or unreadable files, empty corpora.
struct InputError : Error {
  using Error::Error;
};

// Inconsistent configuration (dataset vs phi, model ratio vs phi).
struct ConfigError : Error {
  using Error::Error;
};

// Numerical breakdown: ill-conditioned systems, NaN gradients, divergence.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace istanet
