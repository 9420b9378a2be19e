#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace conclab {

// Matrix or ensemble dimensions do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Multi-input observables were fed ensembles whose trials are not aligned
// (different N, different master seeds, or partially overlapping streams).
class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// No grid point of an empirical tail falls inside the requested fit window.
class FitWindowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A draw or specification violates the spectral admissibility condition
// (kappa^2 kappa_D <= 1 - eps, or a contraction margin).
class AdmissibilityError : public std::runtime_error {
 public:
  AdmissibilityError(const std::string& what, double measured)
      : std::runtime_error(what), measured_(measured) {}
  double measured() const noexcept { return measured_; }

 private:
  double measured_;
};

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError(const std::string& what, double smallest_singular_value)
      : std::runtime_error(what), smallest_(smallest_singular_value) {}
  double smallest_singular_value() const noexcept { return smallest_; }

 private:
  double smallest_;
};

class DegeneratePivotError : public std::runtime_error {
 public:
  DegeneratePivotError(const std::string& what, double pivot)
      : std::runtime_error(what), pivot_(pivot) {}
  double pivot() const noexcept { return pivot_; }

 private:
  double pivot_;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residual_trace)
      : std::runtime_error(what), trace_(std::move(residual_trace)) {}
  const std::vector<double>& residual_trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

// Strict configuration parsing failures (unknown keys, bad types).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace conclab
