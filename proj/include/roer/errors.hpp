#pragma once

#include <stdexcept>
#include <string>

namespace roer {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violated a documented precondition (domain, shape, finiteness).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of range or an id is unknown.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A byte stream or text file could not be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptyBufferError : public Error {
 public:
  EmptyBufferError() : Error("replay buffer is empty") {}
};

class UnsupportedMode : public Error {
 public:
  using Error::Error;
};

// Environment stepped after a terminal transition without a reset.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace roer
