#pragma once

#include <stdexcept>
#include <string>

namespace sparsect {

/// Shape or rank contract violated.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid scalar argument or configuration value.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Network graph could not be resolved for the requested input.
class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File access or parse failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sparsect
