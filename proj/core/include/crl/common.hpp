#pragma once

#include <stdexcept>
#include <string>

namespace crl {

/// Invalid configuration or a request outside the supported problem scale
/// (e.g. an enumeration whose size bound exceeds the cap).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem problems: missing files, unwritable outputs.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A mathematical assumption of the method is violated at runtime
/// (support mismatches, non-finite quantities reaching an update).
struct AssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Distinguished error for an infinite divergence. Raised instead of
/// returning a float infinity so that callers fail loudly.
struct InfiniteDivergenceError : AssumptionError {
  using AssumptionError::AssumptionError;
};

/// Process exit codes used by the command line tool.
enum ExitCode : int {
  exit_ok = 0,
  exit_config_error = 2,
  exit_assumption_error = 3,
  exit_io_error = 4,
};

}  // namespace crl
