#pragma once

#include <stdexcept>
#include <string>

namespace depthint {

// Data errors: malformed files, violated preconditions on inputs.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Argument outside an operation's domain (empty cloud, point outside the unit cube, ...).
class DomainError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite losses or gradients during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace depthint
