#pragma once

#include <stdexcept>
#include <string>

namespace cpr {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor file could not be decoded (bad magic, header, dtype, shape...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed at the OS level.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or values violate an operation's precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A reduction has nothing to reduce over (empty prototype set, empty mask...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration: unknown key, unparsable value, out-of-range setting.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cpr
