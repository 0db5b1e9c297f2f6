#pragma once

#include <stdexcept>
#include <string>

namespace omdt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition (bad dimensions, unknown names, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterative method stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// A file could not be parsed or failed validation on read.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace omdt
