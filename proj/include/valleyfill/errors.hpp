#pragma once

#include <stdexcept>
#include <string>

namespace valleyfill {

/// Malformed feeder topology: cycles, orphaned nodes, duplicate edges.
class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An EV cannot reach its desired SOC inside the window, or the baseline
/// already violates the voltage floor.
class InfeasibleScenario : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative method failed: divergence, non-finite iterate, or budget
/// exhausted. Carries the iteration index and last residual when known.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int iteration = -1, double residual = 0.0)
      : std::runtime_error(what), iteration_(iteration), residual_(residual) {}

  int iteration() const noexcept { return iteration_; }
  double residual() const noexcept { return residual_; }

 private:
  int iteration_;
  double residual_;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace valleyfill
