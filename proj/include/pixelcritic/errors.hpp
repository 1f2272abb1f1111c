#pragma once

#include <stdexcept>

namespace pixelcritic {

// Error categories map 1:1 onto CLI exit codes: config/usage -> 1,
// data -> 2, numeric failure -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pixelcritic
