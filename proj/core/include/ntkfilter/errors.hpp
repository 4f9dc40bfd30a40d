#pragma once

#include <stdexcept>
#include <string>

namespace ntkf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, arguments or input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mismatched image or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// The architecture is valid but the requested operation cannot handle it
/// (e.g. column mode on a deep network).
class UnsupportedArchitecture : public Error {
 public:
  using Error::Error;
};

/// An iteration produced a non-finite value or a filter whose spectrum makes
/// twicing diverge.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long iteration)
      : Error(what), iteration_(iteration) {}

  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

}  // namespace ntkf
