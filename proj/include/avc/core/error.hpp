#pragma once

#include <stdexcept>
#include <string>

namespace avc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input data is missing, malformed or cannot satisfy a request.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numeric invariant broke at runtime (NaN input, non-finite gradient, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace avc
