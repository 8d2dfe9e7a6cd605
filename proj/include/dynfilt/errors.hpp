#pragma once

#include <stdexcept>
#include <string>

namespace dynfilt {

// Mismatched vector/operator sizes or invalid dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A parameter outside its admissible range (negative threshold, kappa < 0, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values, singular systems, or iteration caps hit.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A brute-force enumeration or generator that would exceed its configured cap.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric whose normalizer is zero.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Operation invoked on an object in the wrong state (e.g. invalid constants).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dynfilt
