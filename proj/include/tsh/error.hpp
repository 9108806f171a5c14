#pragma once

#include <stdexcept>
#include <string>

namespace tsh {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented precondition or type invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Two inputs that must agree in size do not.
class DimensionMismatch : public ValidationError {
public:
  using ValidationError::ValidationError;
};

/// Filesystem or decode failure.
class IoError : public Error {
public:
  using Error::Error;
};

/// A cached artifact was produced under a different configuration.
class CacheMismatch : public Error {
public:
  CacheMismatch(const std::string& what, std::string expected, std::string found)
      : Error(what + " (expected " + expected + ", found " + found + ")"),
        expected_(std::move(expected)), found_(std::move(found)) {}

  const std::string& expected() const { return expected_; }
  const std::string& found() const { return found_; }

private:
  std::string expected_;
  std::string found_;
};

}  // namespace tsh
