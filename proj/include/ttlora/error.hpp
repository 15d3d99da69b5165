#pragma once

#include <stdexcept>
#include <string>

namespace ttlora {

/// Raised when a caller breaks an operation's preconditions (bad extents,
/// mismatched ranks, malformed files). Maps to CLI exit code 1.
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised on divergence or non-finite values during numerical work.
/// Maps to CLI exit code 2.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

/// File could not be opened, read or written. Maps to CLI exit code 1.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace ttlora
