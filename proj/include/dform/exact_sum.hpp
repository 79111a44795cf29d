#pragma once

#include <vector>

namespace dform {

/// Error-free floating-point accumulator (Shewchuk partials, as in Python's
/// math.fsum). value() is the correctly rounded sum of every added term, so
/// the result does not depend on insertion order or thread partitioning.
class ExactSum {
 public:
  void add(double x);
  void subtract(double x) { add(-x); }
  void merge(const ExactSum& other);
  double value() const;

 private:
  std::vector<double> partials_;
};

}  // namespace dform
