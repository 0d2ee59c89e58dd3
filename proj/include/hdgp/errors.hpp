#pragma once

#include <stdexcept>
#include <string>

namespace hdgp {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid kernel spec or hyperparameter values (non-positive lengthscale,
// wrong vector sizes, unknown family, ...).
struct SpecError : Error {
  using Error::Error;
};

// Mismatched array shapes between inputs.
struct DimensionError : Error {
  using Error::Error;
};

// Cholesky (or block) factorization failed even after jitter escalation.
struct FactorizationError : Error {
  using Error::Error;
};

// Data carries no signal to fit (constant y, empty design, ...).
struct DegenerateDataError : Error {
  using Error::Error;
};

// Eigenvalue gap too small for the eigenvector derivative formula.
struct EigenDegeneracyError : Error {
  using Error::Error;
};

// A model mode was requested that the given configuration cannot provide.
struct ConstructionError : Error {
  using Error::Error;
};

// CSV / JSON input could not be parsed or is out of contract.
struct IoError : Error {
  using Error::Error;
};

}  // namespace hdgp
