#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hyperinf {

// Base of every error raised by the library. The CLI maps InvalidArgument to
// exit code 1 and every other Error to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  SingularMatrixError(std::size_t pivot, double value)
      : Error("matrix is singular to working precision at pivot " + std::to_string(pivot)),
        pivot_(pivot),
        value_(value) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

class NumericalBreakdown : public Error {
 public:
  using Error::Error;
};

// Raised when a request would materialize more than the configured element cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, manifests, gradient values).
class DataError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace hyperinf
