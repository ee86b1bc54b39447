#pragma once

#include <stdexcept>
#include <string>

namespace robust_ctrl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A KL term would be infinite (policy mass where the reference has none).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Simulator produced a non-finite state.
class PhysicsError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unknown configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse (e.g. differentiating a non-scalar).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (NaN loss, constraint blow-up).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace robust_ctrl
