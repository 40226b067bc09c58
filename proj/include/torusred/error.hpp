#pragma once

#include <stdexcept>
#include <string>

namespace torusred {

/// Base class for every failure raised by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (domain violations, resonance guards,
/// malformed config files). Maps to exit status 2 in the CLI.
class config_error : public error {
 public:
  using error::error;
};

/// Mismatched torus or value dimensions between operands.
class dimension_error : public error {
 public:
  using error::error;
};

/// A numerical operation could not produce a trustworthy result. Carries the
/// name of the operation that failed.
class numerical_error : public error {
 public:
  numerical_error(std::string operation, const std::string& what)
      : error(operation + ": " + what), operation_(std::move(operation)) {}

  const std::string& operation() const noexcept { return operation_; }

 private:
  std::string operation_;
};

}  // namespace torusred
