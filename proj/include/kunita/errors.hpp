#pragma once

#include <stdexcept>
#include <string>

namespace kunita {

// Invalid kernel/process parameters or malformed inputs.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numerical failure: indefinite matrix beyond jitter, degenerate grids, ...
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FactorizationError : NumericalError {
  using NumericalError::NumericalError;
};

// Landmarks closer than the collision tolerance.
struct CollisionError : NumericalError {
  using NumericalError::NumericalError;
};

// Point left the padded quadrature domain.
struct DomainCoverageError : NumericalError {
  using NumericalError::NumericalError;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

}  // namespace kunita
