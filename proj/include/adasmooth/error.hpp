#pragma once

#include <stdexcept>
#include <string>

namespace adasmooth {

/// Base of every error thrown by the library. The exit code is what the
/// command-line front end reports for an uncaught error of this type.
class Error : public std::runtime_error {
 public:
  Error(int exit_code, const std::string& what)
      : std::runtime_error(what), exit_code_(exit_code) {}

  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

/// Bad arguments or violated preconditions at the API surface.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(1, what) {}
};

/// Malformed files, inconsistent datasets, degenerate inputs.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(2, what) {}
};

/// Non-finite values during training.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(3, what) {}
};

}  // namespace adasmooth
