#pragma once

#include <stdexcept>
#include <string>

namespace ect {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible extents, ranks or divisibility constraints.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or division by zero surfaced in checked mode.
class NumericError : public Error {
 public:
  using Error::Error;
};

class AutodiffError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: bad magic, truncated payloads, shape mismatches.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ect
