#pragma once

#include <stdexcept>
#include <string>

namespace sfit {

// Shapes that do not compose (matmul inner dims, conv windows, pooling).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: backward on a non-scalar, replaying a consumed tape, optimizer
// state that does not match the parameters, model/data mismatches.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Batch statistics that cannot be formed (batchnorm with B < 2 in training).
class StatisticsError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid scalar hyperparameter (temperature <= 0, epsilon outside [0, 1]).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Architecture or run configuration that cannot be built.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A forward op produced a non-finite value from finite inputs.
class NumericError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

// Training loss became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File decoding failures. The subclasses let callers tell the cases apart.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace sfit
