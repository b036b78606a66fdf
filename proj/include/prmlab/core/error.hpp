#pragma once

#include <stdexcept>
#include <string>

namespace prmlab {

/// Invalid configuration or task parameters (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an operation's precondition.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Operation is not defined for this environment family or parameter family.
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A lookup left the region covered by a table (oracle values, reference values).
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical or runtime failure that aborts a pipeline stage (CLI exit code 3).
class RuntimeAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace prmlab
