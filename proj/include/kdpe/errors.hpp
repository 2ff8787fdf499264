#pragma once

#include <stdexcept>
#include <string>

namespace kdpe {

// Malformed arguments: schema mismatch, bad dimensions, non-binary coordinates.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A point whose x is not one of the model's atoms.
class OffSupport : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// A centered kernel used with a model other than the one it was centered on.
class StaleKernel : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A fluctuation that would leave the density bounds or lose positivity.
class ConstraintViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant (corrupted model, impossible centering scalar).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace kdpe
