#include "dform/quadrature.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

namespace dform {

namespace {

double guarded(const std::function<double(double)>& f, double x) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "integrand is not finite at x = " << x;
    throw Error(ErrorCode::EvaluationFailure, msg.str());
  }
  return v;
}

bool singular_at(const std::function<double(double)>& f, double x) {
  if (!std::isfinite(x)) return true;
  try {
    return !std::isfinite(f(x));
  } catch (const Error&) {
    return true;
  }
}

// Cumulative integrals from c toward a singular end, one per cutoff stage.
std::vector<double> side_stages(const std::function<double(double)>& f, double c, double end,
                                const StagedOptions& options, double& quad_error) {
  std::vector<double> stages;
  const double dir = end > c ? 1.0 : -1.0;
  const double span = std::isfinite(end) ? std::abs(end - c) : std::max(1.0, std::abs(c));
  double previous = c;
  double total = 0.0;
  for (std::size_t j = 1; j <= options.stages; ++j) {
    const double scale = std::pow(options.factor, static_cast<double>(j));
    const double cut = std::isfinite(end) ? end - dir * span / scale : c + dir * span * scale;
    double err = 0.0;
    const double piece = dir > 0 ? finite_integral(f, previous, cut, &err) : finite_integral(f, cut, previous, &err);
    quad_error += err;
    total += piece;
    stages.push_back(total);
    previous = cut;
  }
  return stages;
}

}  // namespace

IntegralVerdict classify_stages(std::span<const double> stages, const StagedOptions& options) {
  if (stages.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two stage values");
  const std::size_t n = stages.size();
  IntegralVerdict verdict;
  verdict.stages.assign(stages.begin(), stages.end());
  const double last = stages.back();

  if (!std::isfinite(last) || std::abs(last) > options.cap) return verdict;

  double scale = 0.0;
  for (double v : stages) scale = std::max(scale, std::abs(v));
  const double noise = 1e-13 * scale;
  std::vector<double> d;
  for (std::size_t j = 1; j < n; ++j) {
    const double inc = stages[j] - stages[j - 1];
    d.push_back(std::abs(inc) <= noise ? 0.0 : inc);
  }
  const std::size_t m = d.size();

  // settled: the last increments vanish at working precision
  const std::size_t settle = std::min<std::size_t>(3, m);
  if (std::all_of(d.end() - static_cast<std::ptrdiff_t>(settle), d.end(), [](double x) { return x == 0.0; })) {
    verdict.finite = true;
    verdict.value = last;
    verdict.error_estimate = noise;
    return verdict;
  }

  if (m >= 4) {
    bool growing = true;
    for (std::size_t j = m - 4; j < m; ++j) {
      if (d[j] == 0.0 || (d[j] > 0.0) != (d[m - 1] > 0.0)) growing = false;
      if (j > m - 4 && std::abs(d[j]) < std::abs(d[j - 1]) * (1.0 - 1e-6)) growing = false;
    }
    if (growing) return verdict;
  }

  if (m >= 3) {
    double r = 0.0;
    bool shrinking = true;
    for (std::size_t j = m - 3; j < m; ++j) {
      if (d[j - 1] == 0.0) {
        shrinking = shrinking && d[j] == 0.0;
        continue;
      }
      const double ratio = std::abs(d[j]) / std::abs(d[j - 1]);
      if (ratio >= 1.0) shrinking = false;
      r = std::max(r, ratio);
    }
    if (shrinking && r < 1.0) {
      const double tail = std::abs(d.back()) * r / (1.0 - r);
      if (tail <= options.rel_tol * scale) {
        verdict.finite = true;
        verdict.value = last + std::copysign(tail, d.back());
        verdict.error_estimate = tail + noise;
        return verdict;
      }
    }
  }

  std::ostringstream msg;
  msg << "stage values neither settle nor diverge (last " << last << ")";
  throw AmbiguousTailError(msg.str(), verdict.stages);
}

double finite_integral(const std::function<double(double)>& f, double a, double b, double* error_estimate) {
  if (a == b) {
    if (error_estimate) *error_estimate = 0.0;
    return 0.0;
  }
  double err = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [&f](double x) { return guarded(f, x); }, a, b, 15, 1e-12, &err);
  if (error_estimate) *error_estimate = err;
  return value;
}

IntegralVerdict improper_integral(const std::function<double(double)>& f, double a, double b,
                                  const StagedOptions& options) {
  if (std::isnan(a) || std::isnan(b) || !(a < b)) {
    throw Error(ErrorCode::InvalidArgument, "improper_integral needs a < b");
  }
  if (options.stages < 2 || !(options.factor > 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "need at least two stages and a factor > 1");
  }
  const bool sing_a = singular_at(f, a);
  const bool sing_b = singular_at(f, b);

  if (!sing_a && !sing_b) {
    IntegralVerdict verdict;
    verdict.finite = true;
    verdict.value = finite_integral(f, a, b, &verdict.error_estimate);
    verdict.stages = {verdict.value};
    return verdict;
  }

  double c;
  if (std::isfinite(a) && std::isfinite(b)) {
    c = sing_a && sing_b ? 0.5 * (a + b) : (sing_a ? b : a);
  } else if (std::isfinite(a)) {
    c = a + 1.0;
  } else if (std::isfinite(b)) {
    c = b - 1.0;
  } else {
    c = 0.0;
  }
  double quad_error = 0.0;
  double regular = 0.0;
  if (!sing_a && c > a) regular += finite_integral(f, a, c, &quad_error);
  if (!sing_b && c < b) regular += finite_integral(f, c, b, &quad_error);

  std::optional<IntegralVerdict> lower, upper;
  std::optional<AmbiguousTailError> ambiguous;
  auto run_side = [&](double end, std::optional<IntegralVerdict>& out) {
    std::vector<double> stages = side_stages(f, c, end, options, quad_error);
    for (double& v : stages) v += regular;
    try {
      out = classify_stages(stages, options);
    } catch (const AmbiguousTailError& e) {
      ambiguous.emplace(e);
    }
  };
  if (sing_a) run_side(a, lower);
  if (sing_b) run_side(b, upper);
  // `regular` is nonzero only when a single end is singular, so no double count

  for (auto* side : {&lower, &upper}) {
    if (*side && !(*side)->finite) return **side;
  }
  if (ambiguous) throw *ambiguous;

  IntegralVerdict verdict;
  verdict.finite = true;
  verdict.value = (lower ? lower->value : 0.0) + (upper ? upper->value : 0.0);
  verdict.error_estimate = (lower ? lower->error_estimate : 0.0) + (upper ? upper->error_estimate : 0.0) + quad_error;
  const std::size_t ns = std::max(lower ? lower->stages.size() : 0, upper ? upper->stages.size() : 0);
  verdict.stages.assign(ns, 0.0);
  for (std::size_t j = 0; j < ns; ++j) {
    if (lower) verdict.stages[j] += lower->stages[std::min(j, lower->stages.size() - 1)];
    if (upper) verdict.stages[j] += upper->stages[std::min(j, upper->stages.size() - 1)];
  }
  return verdict;
}

}  // namespace dform
