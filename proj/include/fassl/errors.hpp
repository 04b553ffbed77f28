// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace fassl {

/// Violated precondition of a public operation.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor shapes that cannot be combined.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Malformed configuration input; carries the 1-based line number (0 when
/// the error is not tied to a line, e.g. a command-line flag).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace fassl
