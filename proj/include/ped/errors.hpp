#pragma once

#include <stdexcept>
#include <string>

namespace ped {

// Bad input: malformed config, out-of-range parameter, invalid dataset.
// The CLI maps this to exit status 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure could not produce a trustworthy result
// (infeasible family, sampler diagnostics, EM non-convergence).
// The CLI maps this to exit status 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientFamilyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EtaResolutionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SamplerDiagnosticError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ped
