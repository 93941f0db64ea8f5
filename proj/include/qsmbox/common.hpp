// Shared error types. Solver outcomes (infeasible, max-iterations, ...) are
// reported through status enums, not exceptions; exceptions are reserved for
// contract violations and unusable inputs.
#pragma once

#include <stdexcept>
#include <string>

namespace qsmbox {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between arguments (vector length vs matrix dimension, ...).
struct DimensionError : Error {
  using Error::Error;
};

// Construction input fails the symmetry tolerance.
struct AsymmetryError : Error {
  using Error::Error;
};

// Symmetric eigen-iteration failed to converge within its sweep cap.
struct EigenFailure : Error {
  using Error::Error;
};

// Exact oracle requested beyond its enumeration cap.
struct DimensionTooLarge : Error {
  using Error::Error;
};

// Two-point construction probability outside its admissible interval.
struct PIntervalError : Error {
  using Error::Error;
};

// A documented operation precondition does not hold; `which` names the clause.
struct PreconditionViolated : Error {
  std::string which;
  PreconditionViolated(std::string which_, const std::string& msg)
      : Error(msg), which(std::move(which_)) {}
};

// File-system problems (missing input, unwritable output).
struct IoError : Error {
  using Error::Error;
};

// Input parsed but does not match the documented schema or its invariants.
struct ParseError : Error {
  using Error::Error;
};

}  // namespace qsmbox
