#pragma once

#include <stdexcept>
#include <string>

namespace pda {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not chain.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value lies outside the domain an operation accepts (label index, progress, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// The caller broke an API contract (non-scalar loss, empty set, ...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// The empirical intermediate inequality failed. This can only mean a bug.
class BoundViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace pda
