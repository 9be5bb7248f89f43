#pragma once

#include <stdexcept>
#include <string>

namespace lcpvae {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor or vector shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of an operation (log of a non-positive value,
// division by zero).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or Inf, or a gradient check found
// non-deterministic evaluation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or argument combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or version-mismatched input file.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace lcpvae
