#pragma once

#include <stdexcept>
#include <string>

namespace ergolab {

// Invalid configuration; `constraint` names the violated relation.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string constraint, const std::string& detail)
      : std::invalid_argument(constraint + ": " + detail), constraint_(std::move(constraint)) {}
  const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

// A computation could not produce a trustworthy number (empty sample,
// exhausted horizon, failed pull-back).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A search over a bounded budget (horizon, tree depth) came up empty.
class NotFound : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A recorded artifact failed an independent check.
class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ergolab
