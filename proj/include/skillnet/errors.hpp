#pragma once

#include <stdexcept>
#include <string>

namespace skillnet {

// Operand dimensions do not conform (matmul inner dims, conv kernel vs input, ...).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent or incomplete model / run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raw input rejected before any processing (too short, unreadable, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Persisted artifact failed validation (bad magic, truncation, version).
struct IntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace skillnet
