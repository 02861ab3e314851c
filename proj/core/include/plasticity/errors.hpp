#pragma once

#include <stdexcept>
#include <string>

namespace plasticity {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached an operation boundary.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Misuse of a gradient tape (non-scalar backward, reuse after backward, foreign variable).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// A loss callback returned different values for identical inputs.
class NonDeterministicError : public Error {
 public:
  using Error::Error;
};

/// Training loss exceeded the divergence bound.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (checkpoint, dataset, trace).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace plasticity
