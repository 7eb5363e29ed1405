#pragma once

#include <stdexcept>
#include <string>

namespace marsnet {

// Violated precondition or malformed input. The CLI maps this to exit code 2.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numeric failure at run time (divergence, non-finite values). Exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace marsnet
