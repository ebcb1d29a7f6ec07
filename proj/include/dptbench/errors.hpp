#pragma once

#include <stdexcept>

namespace dptbench {

// Numeric input outside its value domain (NaN/Inf where finite is required).
struct InvalidValueError : std::domain_error {
  using std::domain_error::domain_error;
};

// Caller broke an API contract (shape mismatch, empty input, bad range).
struct ContractError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed configuration (unknown keys, out-of-range values).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable/unwritable files or malformed data files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dptbench
