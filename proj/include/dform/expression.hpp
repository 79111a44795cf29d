#pragma once

// A small expression language for scale functions, speed densities and atom
// sequences: + - * / ^, unary minus, abs, sign, log, exp, sqrt, the constant
// pi, decimal literals and a single variable (written x or k). Evaluation is
// strict: log of a nonpositive number, division by zero, non-integral powers
// of negative numbers and overflow raise EvaluationFailure.

#include <memory>
#include <string>
#include <string_view>

#include "dform/error.hpp"

namespace dform {

class Expression {
 public:
  struct Node;

  /// Throws ParseError with the offending column.
  static Expression parse(std::string_view text);
  static Expression constant(double value);
  static Expression variable();

  double operator()(double x) const;
  /// Symbolic derivative with respect to the variable.
  Expression derivative() const;
  bool is_constant() const;
  std::string str() const;

  friend Expression operator+(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a, const Expression& b);
  friend Expression operator*(const Expression& a, const Expression& b);
  friend Expression operator/(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a);
  friend Expression pow(const Expression& a, const Expression& b);

 private:
  explicit Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

}  // namespace dform
