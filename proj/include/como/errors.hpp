#pragma once

#include <stdexcept>
#include <string>

namespace como {

// Error categories map onto CLI exit codes: config=2, io=3, numeric=4.
// Dimension/contract violations are programming errors and map to the
// generic failure code.

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace como
