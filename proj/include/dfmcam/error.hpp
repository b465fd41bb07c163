#pragma once

#include <stdexcept>
#include <string>

namespace dfmcam {

/// Base of every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, violated precondition or inconsistent configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer shapes that do not chain.
class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// File missing, unreadable, truncated or carrying a bad header.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training, or a sampler that cannot meet its
/// constraints.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dfmcam
