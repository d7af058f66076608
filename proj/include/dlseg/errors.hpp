#pragma once

#include <stdexcept>
#include <string>

namespace dlseg {

/// Base of every error the library throws. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, missing or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Data that violates a declared invariant (shape mismatch, out-of-range label, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An operation was called before its inputs exist (exit code 3).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// An upstream artifact was produced with a different configuration.
class StalenessError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Non-finite loss or probability outside its domain.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dlseg
