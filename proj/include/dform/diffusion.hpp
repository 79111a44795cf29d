#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dform/expression.hpp"
#include "dform/quadrature.hpp"

namespace dform {

/// Limit of the scale function at an endpoint.
struct ScaleLimit {
  enum class Kind { Finite, PlusInfinity, MinusInfinity };
  Kind kind = Kind::Finite;
  double value = 0.0;  ///< meaningful when kind == Finite

  bool finite() const { return kind == Kind::Finite; }
  static ScaleLimit of(double v) { return {Kind::Finite, v}; }
  static ScaleLimit plus_infinity() { return {Kind::PlusInfinity, 0.0}; }
  static ScaleLimit minus_infinity() { return {Kind::MinusInfinity, 0.0}; }
};

std::string to_string(const ScaleLimit& s);

/// Behaviour of the process at an approachable endpoint. Reflecting keeps
/// the mass (no boundary condition); open lets it leave the interval.
enum class Boundary { Reflecting, Open };

std::string_view to_string(Boundary b);

struct DiffusionInterval {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  bool lo_included = false;
  bool hi_included = false;
  /// interior reference point c; chosen automatically when absent
  std::optional<double> reference;
  std::optional<ScaleLimit> scale_at_lo;
  std::optional<ScaleLimit> scale_at_hi;
  /// Defaults: reflecting at included endpoints, open otherwise.
  std::optional<Boundary> lo_boundary;
  std::optional<Boundary> hi_boundary;
};

struct Atom {
  double x = 0.0;
  double mass = 0.0;
};

/// A one-dimensional diffusion given by a scale function s and a speed
/// measure m = speed_density dx + sum of atoms, on a union of intervals.
struct DiffusionSpec {
  std::vector<DiffusionInterval> intervals;
  Expression scale = Expression::variable();
  Expression speed_density = Expression::constant(1.0);
  std::vector<Atom> atoms;

  /// Checks disjointness, finite included endpoints, interior reference
  /// points, positive atoms and (on a sample grid) s strictly increasing and
  /// speed density >= 0. Throws InvalidSpec or NonpositiveAtom.
  void validate() const;
  double reference_point(std::size_t interval) const;
};

enum class End { Lower, Upper };

struct EndpointReport {
  double position = 0.0;
  ScaleLimit s_limit;
  bool approachable = false;
  bool m_finite = false;
  double m_near = 0.0;  ///< mass between the reference point and the end, when finite
  bool regular = false;
  Boundary boundary = Boundary::Open;
  std::vector<double> m_stages;  ///< cutoff-stage masses
  std::vector<std::string> diagnostics;
};

/// Throws AmbiguousTailError when the mass or the scale limit cannot be decided.
EndpointReport endpoint_report(const DiffusionSpec& spec, std::size_t interval, End which);

enum class Recurrence { Recurrent, Transient, Unclassified };

std::string_view to_string(Recurrence r);

struct RecurrenceVerdict {
  Recurrence verdict = Recurrence::Unclassified;
  std::optional<EndpointReport> lower, upper;
  std::string evidence;
};

/// Transient when an endpoint is approachable and non-regular or open;
/// recurrent when every endpoint is regular and reflecting or non-approachable.
RecurrenceVerdict classify_recurrence(const DiffusionSpec& spec, std::size_t interval);

struct FellerEnd {
  std::optional<IntegralVerdict> integral;  ///< empty when the tail was ambiguous
  bool explosive = false;                   ///< finite integral at an end that lets mass out
  std::string evidence;
};

struct FellerVerdict {
  std::optional<bool> conservative;  ///< withheld when an integral is ambiguous
  FellerEnd lower, upper;
};

/// Feller's test: the end integrals of m((x,c)) ds(x) toward the lower end and
/// m((c,x)) ds(x) toward the upper end. An end passes when its integral
/// diverges or it is a regular reflecting end.
FellerVerdict feller_explosion_test(const DiffusionSpec& spec, std::size_t interval);

// --- Birth-death chains -----------------------------------------------------

/// Atoms a_k on the integers k >= start, either a_k = coefficient * k^p or a
/// custom expression in k.
struct BirthDeathSpec {
  enum class Family { Power, Custom };
  Family family = Family::Power;
  double p = 0.0;
  double coefficient = 1.0;
  std::optional<Expression> custom;
  std::size_t start = 2;

  double atom(std::size_t k) const;
  std::string describe() const;
};

enum class SeriesVerdict { Divergent, Convergent, Undecided };

std::string_view to_string(SeriesVerdict v);

struct BirthDeathReport {
  /// Divergent sum of a_k / k means the chain is conservative.
  SeriesVerdict series = SeriesVerdict::Undecided;
  std::optional<bool> conservative;
  SeriesVerdict mass = SeriesVerdict::Undecided;  ///< sum of a_k (must diverge)
  std::vector<std::pair<double, double>> partial_sums;  ///< (N, sum_{k<=N} a_k/k)
  std::string evidence;
};

BirthDeathReport birth_death_conservative(const BirthDeathSpec& spec);

// --- Full reports -------------------------------------------------------------

struct IntervalReport {
  std::string name;
  RecurrenceVerdict recurrence;
  FellerVerdict feller;
  std::optional<double> total_mass;  ///< m(interval) when finite
};

struct DiffusionReport {
  std::vector<IntervalReport> intervals;
  std::optional<BirthDeathReport> discrete;
  std::string discrete_name;
  /// Names of the pieces in each part of the decomposition.
  std::vector<std::string> rec, trans, cons, diss;
  bool whole_space_conservative = false;
  bool transient_part_conservative = false;
  /// Transience of the whole form is an input of the trace example, not computed.
  bool transient_by_assumption = false;
  std::vector<std::string> diagnostics;
};

DiffusionReport diffusion_report(const DiffusionSpec& spec);

/// Adds a birth-death chain as the piece `name`. With assume_transient every
/// piece is placed in the transient part (the whole form is transient by
/// hypothesis, as for a trace of a transient form).
void attach_birth_death(DiffusionReport& report, const BirthDeathSpec& atoms, const std::string& name,
                        bool assume_transient);

/// s = -1/x, m = 2x^2 dx on [-2,-1] and [0, inf).
DiffusionSpec example_5_1_spec();
DiffusionReport example_5_1();

/// s = -1/x, m = x^2 dx on [0,1] (mass leaves through 1 into the discrete
/// part) plus atoms a_k at the integers k >= 2.
DiffusionSpec example_5_2_spec();
DiffusionReport example_5_2(const BirthDeathSpec& atoms);

}  // namespace dform
