#pragma once

#include <stdexcept>
#include <string>

namespace dynaconf {

/// Violated precondition or shape mismatch at a module boundary.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// NaN/Inf or other numeric breakdown during a computation.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user-supplied configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dynaconf
