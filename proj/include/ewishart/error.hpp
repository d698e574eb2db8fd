#pragma once

#include <stdexcept>
#include <string>

namespace ewishart {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite or malformed numeric input.
class NumericInputError : public Error {
 public:
  using Error::Error;
};

// Result would overflow the representable range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Matrix that must be SPD is singular, indefinite or numerically degenerate.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied parameter (nu <= 0, Z > K, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Statistical model is ill-posed (n <= p, invalid metric coefficients).
class ModelError : public Error {
 public:
  using Error::Error;
};

// Iterative estimator produced a non-finite cost.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Supervised training could not proceed (empty class).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent configuration file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File could not be read, parsed or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ewishart
