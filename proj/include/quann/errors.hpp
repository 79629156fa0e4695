#pragma once

#include <stdexcept>
#include <string>

namespace quann {

// Every failure raised by the library derives from Error so callers can
// catch one type at the boundary (the CLI maps these onto exit codes).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Input outside the real domain of an operation (log of a non-positive
// value, division by zero, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// An operation produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class TapeError : public Error {
 public:
  using Error::Error;
};

class EmptySetError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SingularJacobianError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace quann
