#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dform/error.hpp"

namespace dform {

/// Outcome of a staged limit: Finite(value, error) or Divergent(stages).
struct IntegralVerdict {
  bool finite = false;
  double value = 0.0;           ///< extrapolated limit when finite
  double error_estimate = 0.0;  ///< tail estimate plus quadrature error
  std::vector<double> stages;   ///< cumulative value after every cutoff stage
};

struct StagedOptions {
  double cap = 1e6;           ///< |final stage| above this is divergence
  std::size_t stages = 8;     ///< cutoffs per singular endpoint
  double factor = 10.0;       ///< geometric approach factor
  double rel_tol = 1e-6;      ///< tail estimate bound, relative to the value
};

/// Classifies cumulative stage values V_1..V_N of a monotone limit process:
/// Divergent when |V_N| > cap or the last four increments are nondecreasing;
/// Finite when the increments shrink geometrically and the geometric tail
/// estimate is within rel_tol of max |V_j| (the value is extrapolated by
/// that tail). Anything else throws AmbiguousTailError carrying the stages.
IntegralVerdict classify_stages(std::span<const double> stages, const StagedOptions& options = {});

/// Integral of f over (a, b); either end may be infinite or a singularity of
/// f (f throws or is non-finite there). Finite pieces use adaptive
/// Gauss-Kronrod quadrature; singular ends are approached through geometric
/// cutoffs. Throws EvaluationFailure when f fails inside (a, b) and
/// AmbiguousTailError when neither convergence nor divergence is recognized.
IntegralVerdict improper_integral(const std::function<double(double)>& f, double a, double b,
                                  const StagedOptions& options = {});

/// Adaptive Gauss-Kronrod over a finite interval with no singularity.
double finite_integral(const std::function<double(double)>& f, double a, double b,
                       double* error_estimate = nullptr);

}  // namespace dform
