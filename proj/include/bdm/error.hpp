#pragma once

#include <stdexcept>
#include <string>

namespace bdm {

/// Invalid input: out-of-range arguments, malformed files, bad configs.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A mathematical precondition of the requested analysis does not hold
/// (reducible chain, no metastability, no phase transition, ...).
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The numerical method could not reach the requested accuracy.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bdm
