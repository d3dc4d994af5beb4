#pragma once

#include <stdexcept>
#include <string>

namespace commgate {

/// Bad or inconsistent configuration (dimension mismatches, invalid ranges,
/// malformed config files). CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (action out of range, ordering
/// violations). These indicate bugs, not bad input.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Training produced a non-finite value. Carries epoch/step context where the
/// caller can provide it. CLI exit code 3.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Evaluation failed (checkpoint/env mismatch, empty report). CLI exit code 4.
struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace commgate
