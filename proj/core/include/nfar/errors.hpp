#pragma once

#include <stdexcept>
#include <string>

namespace nfar {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Incompatible grid sizes or array shapes.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Circulant embedding produced an eigenvalue below tolerance.
class EmbeddingError : public Error {
public:
  using Error::Error;
};

/// Malformed or out-of-contract configuration input.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// File read/write failure.
class IoError : public Error {
public:
  using Error::Error;
};

/// Non-finite values encountered during simulation or training.
class NumericError : public Error {
public:
  using Error::Error;
};

} // namespace nfar
