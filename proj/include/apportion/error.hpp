#pragma once

#include <stdexcept>
#include <string>

namespace apportion {

// Bad input: malformed files, inconsistent dimensions, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Rank deficiency or singularity discovered while factorizing.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace apportion
