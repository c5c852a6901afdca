#pragma once

#include <stdexcept>
#include <string>

namespace mslu {

// Base of every error thrown by the library. The CLI maps the subclasses onto
// exit codes: ConfigError -> 2, DataError -> 3, anything else -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Bad or missing input data: audio, manifests, grammars, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Shape or argument contract violated by a caller.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mslu
