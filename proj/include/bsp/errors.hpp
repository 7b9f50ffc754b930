#pragma once

#include <stdexcept>
#include <string>

namespace bsp {

// Invalid argument passed to a numerical routine (dimension mismatch, point
// outside the domain box, non-finite input, ...).
struct InputError : std::invalid_argument {
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// A linear-algebra operation failed beyond recovery (factorization failed at
// maximum jitter, non-finite intermediate, ...).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Bad experiment configuration (unknown problem id, invalid tolerance, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bsp
