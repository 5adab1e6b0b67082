// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kinediff {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an operation's precondition.
struct ContractError : Error {
  using Error::Error;
};

// Operand shapes are inconsistent.
struct DimensionError : Error {
  using Error::Error;
};

// Geometrically degenerate input (zero vector, parallel columns, ...).
struct DegeneracyError : Error {
  using Error::Error;
};

// A joint state is outside its limits.
struct JointLimitError : Error {
  using Error::Error;
};

// The adaptive ODE solver cannot make progress.
struct SolverStallError : Error {
  using Error::Error;
};

// File / serialization failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace kinediff
