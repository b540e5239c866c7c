#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fairvit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/mask dimensions that do not line up.
struct ShapeError : Error {
  using Error::Error;
};

// Bad hyperparameters, unknown keys, missing attributes.
struct ConfigError : Error {
  using Error::Error;
};

// A caller broke an operation's precondition (non-scalar backward root, unfitted plane, ...).
struct ContractError : Error {
  using Error::Error;
};

// A fairness metric whose conditioning stratum is empty.
struct UndefinedMetricError : Error {
  using Error::Error;
};

// NaN/Inf showed up in a loss.
struct NumericalError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace fairvit
