#pragma once

#include <stdexcept>
#include <string>

namespace apisentry {

// Bad input: malformed files, violated preconditions, unknown flags.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical breakdown during training (non-finite loss or gradients).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace apisentry
