#pragma once

#include <stdexcept>
#include <string>

namespace graphonforge {

// Malformed input or a violated precondition. The CLI maps it to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A monomial referenced a variable beyond the declared z-dimension.
class TruncationError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Sample or enumeration budget exhausted. The CLI maps it to exit code 3.
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical tolerance could not be met. The CLI maps it to exit code 3.
class ToleranceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace graphonforge
