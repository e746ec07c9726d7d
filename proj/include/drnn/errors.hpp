#pragma once

#include <stdexcept>
#include <string>

namespace drnn {

// Base of every error raised by the library. The CLI maps these onto exit
// codes: ConfigError/InvalidArgument are usage errors, the rest data errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// The panel (or the relevant slice of it) has no observation to average.
class NoDataError : public Error {
 public:
  using Error::Error;
};

// One of the three CI denominators is zero, so only a point estimate exists.
class DegenerateInterval : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

// Raised by checked accessors when code reads an outcome at a masked cell.
class MaskedAccess : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace drnn
