#pragma once

#include <stdexcept>
#include <string>

namespace meta_rdre {

// Base of every error raised by the toolkit. The CLI maps the subclasses
// onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or dataset dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, failed factorizations, diverging training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem and checkpoint I/O failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace meta_rdre
