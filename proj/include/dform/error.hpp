#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dform {

enum class ErrorCode {
  AsymmetricWeights,
  NegativeEntry,
  NonpositiveMeasure,
  DimensionMismatch,
  NonPSDForm,
  NegativeTime,
  NonpositiveTime,
  NonpositiveBeta,
  UnsortedGrid,
  NegativeInput,
  IndexOutOfRange,
  NotInvariant,
  EmptySubset,
  NonStabilizingLimit,
  NonpositiveRho,
  Reducible,
  NotExcessive,
  TooFewTerms,
  TermNotInvariant,
  LimitNotInvariant,
  EvenGrid,
  InvalidArgument,
  EvaluationFailure,
  AmbiguousTail,
  NonpositiveAtom,
  ParseError,
  InvalidSpec,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a staged limit (improper integral, series, endpoint value)
/// neither converges nor diverges recognizably. Carries the stage values.
class AmbiguousTailError : public Error {
 public:
  AmbiguousTailError(const std::string& what, std::vector<double> stages)
      : Error(ErrorCode::AmbiguousTail, what), stages_(std::move(stages)) {}

  const std::vector<double>& stages() const noexcept { return stages_; }

 private:
  std::vector<double> stages_;
};

}  // namespace dform
