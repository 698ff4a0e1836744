#pragma once

#include <stdexcept>
#include <string>

namespace madda {

// Root of every error the library raises. The CLI maps the concrete
// subclasses onto process exit codes (see exit_code_for).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Violated precondition of a library call (bad k, empty input, n > N ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Incompatible tensor shapes inside a graph; the message names the node.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Non-finite values, invalid probabilities.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents: bad magic, bad version, bad CSV rows.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Unreadable, unwritable or truncated files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Two inputs that are individually valid but disagree (image/label counts).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Bad command-line or configuration values.
class UsageError : public Error {
 public:
  using Error::Error;
};

enum class ExitCode : int {
  success = 0,
  failure = 1,
  usage = 2,
  data = 3,
  numeric = 4,
};

inline ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return ExitCode::usage;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const ConsistencyError*>(&e)) {
    return ExitCode::data;
  }
  if (dynamic_cast<const NumericError*>(&e)) return ExitCode::numeric;
  return ExitCode::failure;
}

}  // namespace madda
