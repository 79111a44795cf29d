#include "dform/diffusion.hpp"

#include "dform/exact_sum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dform {

std::string to_string(const ScaleLimit& s) {
  switch (s.kind) {
    case ScaleLimit::Kind::PlusInfinity: return "+inf";
    case ScaleLimit::Kind::MinusInfinity: return "-inf";
    case ScaleLimit::Kind::Finite: break;
  }
  std::ostringstream out;
  out.precision(17);
  out << s.value;
  return out.str();
}

std::string_view to_string(Boundary b) { return b == Boundary::Reflecting ? "reflecting" : "open"; }

std::string_view to_string(Recurrence r) {
  switch (r) {
    case Recurrence::Recurrent: return "recurrent";
    case Recurrence::Transient: return "transient";
    case Recurrence::Unclassified: return "unclassified";
  }
  return "unclassified";
}

std::string_view to_string(SeriesVerdict v) {
  switch (v) {
    case SeriesVerdict::Divergent: return "divergent";
    case SeriesVerdict::Convergent: return "convergent";
    case SeriesVerdict::Undecided: return "undecided";
  }
  return "undecided";
}

namespace {

constexpr double kLimitConflict = 1e-3;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); }

// Interior sample points approaching both ends geometrically.
std::vector<double> sample_points(const DiffusionInterval& iv, double c) {
  std::vector<double> xs{c};
  for (int j = 1; j <= 16; ++j) {
    const double shrink = std::ldexp(1.0, -j);
    const double grow = std::ldexp(1.0, j);
    xs.push_back(std::isfinite(iv.lo) ? iv.lo + (c - iv.lo) * shrink : c - grow);
    xs.push_back(std::isfinite(iv.hi) ? iv.hi - (iv.hi - c) * shrink : c + grow);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

// m of the open interval (x, y) for interior points x <= y.
double mass_between(const DiffusionSpec& spec, double x, double y) {
  double total = finite_integral([&](double t) { return spec.speed_density(t); }, x, y);
  for (const Atom& a : spec.atoms)
    if (a.x > x && a.x < y) total += a.mass;
  return total;
}

double end_position(const DiffusionInterval& iv, End which) { return which == End::Lower ? iv.lo : iv.hi; }

std::string end_label(const DiffusionInterval& iv, End which) {
  std::ostringstream out;
  out << (iv.name.empty() ? "interval" : iv.name) << (which == End::Lower ? " lower end " : " upper end ")
      << end_position(iv, which);
  return out.str();
}

// Scale limit by direct evaluation at a finite end, else by extrapolation
// along a geometric approach.
ScaleLimit computed_scale_limit(const DiffusionSpec& spec, const DiffusionInterval& iv, double c, End which) {
  const double e = end_position(iv, which);
  if (std::isfinite(e)) {
    try {
      return ScaleLimit::of(spec.scale(e));
    } catch (const Error&) {
      // singular end: fall through to the approach sequence
    }
  }
  const StagedOptions options;
  const double dir = which == End::Upper ? 1.0 : -1.0;
  const double span = std::isfinite(e) ? std::abs(e - c) : std::max(1.0, std::abs(c));
  std::vector<double> values;
  for (std::size_t j = 1; j <= options.stages; ++j) {
    const double scale = std::pow(options.factor, static_cast<double>(j));
    const double x = std::isfinite(e) ? e - dir * span / scale : c + dir * span * scale;
    values.push_back(spec.scale(x));
  }
  const IntegralVerdict v = classify_stages(values, options);
  if (v.finite) return ScaleLimit::of(v.value);
  return values.back() > 0.0 ? ScaleLimit::plus_infinity() : ScaleLimit::minus_infinity();
}

// m((x, c)) ds(x) toward the lower end, m((c, x)) ds(x) toward the upper end,
// with the inner mass computed by quadrature at every outer node.
IntegralVerdict nested_feller_integral(const DiffusionSpec& spec, const Expression& ds, double c, double e, End which) {
  const std::function<double(double)> g = [&](double x) {
    const double mass = which == End::Lower ? mass_between(spec, x, c) : mass_between(spec, c, x);
    return mass * ds(x);
  };
  return which == End::Lower ? improper_integral(g, e, c) : improper_integral(g, c, e);
}

// The same integral after exchanging the order of integration (Tonelli):
// toward the upper end it is the integral of |s(e) - s(y)| m(dy) over (c, e),
// and symmetrically toward the lower end. An infinite scale limit makes it
// diverge as soon as the side carries mass.
IntegralVerdict feller_integral(const DiffusionSpec& spec, double c, const EndpointReport& end, End which) {
  const double e = end.position;
  if (!end.s_limit.finite()) {
    IntegralVerdict v;
    v.finite = !end.m_finite ? false : end.m_near == 0.0;
    return v;
  }
  const double s_e = end.s_limit.value;
  const std::function<double(double)> g = [&](double y) {
    return spec.speed_density(y) * std::abs(s_e - spec.scale(y));
  };
  IntegralVerdict v = which == End::Lower ? improper_integral(g, e, c) : improper_integral(g, c, e);
  double atoms = 0.0;
  for (const Atom& a : spec.atoms) {
    if ((which == End::Lower && a.x > e && a.x < c) || (which == End::Upper && a.x > c && a.x < e)) {
      atoms += a.mass * std::abs(s_e - spec.scale(a.x));
    }
  }
  v.value += atoms;
  for (double& stage : v.stages) stage += atoms;
  return v;
}

bool limits_conflict(const ScaleLimit& a, const ScaleLimit& b) {
  if (a.kind != b.kind) return true;
  return a.finite() && std::abs(a.value - b.value) > kLimitConflict;
}

}  // namespace

// --- Spec validation -----------------------------------------------------------

double DiffusionSpec::reference_point(std::size_t interval) const {
  if (interval >= intervals.size()) throw Error(ErrorCode::IndexOutOfRange, "no such interval");
  const DiffusionInterval& iv = intervals[interval];
  if (iv.reference) return *iv.reference;
  const bool lo = std::isfinite(iv.lo);
  const bool hi = std::isfinite(iv.hi);
  if (lo && hi) return 0.5 * (iv.lo + iv.hi);
  if (lo) return iv.lo + 1.0;
  if (hi) return iv.hi - 1.0;
  return 0.0;
}

void DiffusionSpec::validate() const {
  if (intervals.empty()) invalid("a diffusion needs at least one interval");
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const DiffusionInterval& iv = intervals[i];
    const std::string label = "interval " + (iv.name.empty() ? std::to_string(i) : iv.name);
    if (std::isnan(iv.lo) || std::isnan(iv.hi) || !(iv.lo < iv.hi)) invalid(label + ": needs lo < hi");
    if ((iv.lo_included && !std::isfinite(iv.lo)) || (iv.hi_included && !std::isfinite(iv.hi))) {
      invalid(label + ": an infinite endpoint cannot be included");
    }
    const double c = reference_point(i);
    if (!(c > iv.lo && c < iv.hi)) invalid(label + ": reference point must be interior");
    const std::vector<double> xs = sample_points(iv, c);
    double previous = -INFINITY;
    for (double x : xs) {
      double s = 0.0, rho = 0.0;
      try {
        s = scale(x);
        rho = speed_density(x);
      } catch (const Error& e) {
        invalid(label + ": cannot evaluate at interior point " + std::to_string(x) + " (" + e.what() + ")");
      }
      if (rho < 0.0) invalid(label + ": speed density is negative at " + std::to_string(x));
      if (!(s > previous)) invalid(label + ": scale function is not strictly increasing near " + std::to_string(x));
      previous = s;
    }
  }
  std::vector<const DiffusionInterval*> sorted;
  for (const auto& iv : intervals) sorted.push_back(&iv);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->lo < b->lo; });
  for (std::size_t k = 1; k < sorted.size(); ++k) {
    const auto* a = sorted[k - 1];
    const auto* b = sorted[k];
    if (a->hi > b->lo || (a->hi == b->lo && a->hi_included && b->lo_included)) invalid("intervals overlap");
  }
  for (const Atom& a : atoms) {
    if (!std::isfinite(a.x)) invalid("atom position must be finite");
    if (!(a.mass > 0.0)) {
      throw Error(ErrorCode::NonpositiveAtom, "atom at " + std::to_string(a.x) + " has nonpositive mass");
    }
  }
}

// --- Endpoints ------------------------------------------------------------------

EndpointReport endpoint_report(const DiffusionSpec& spec, std::size_t interval, End which) {
  const double c = spec.reference_point(interval);
  const DiffusionInterval& iv = spec.intervals[interval];
  const double e = end_position(iv, which);
  const auto& declared = which == End::Lower ? iv.scale_at_lo : iv.scale_at_hi;

  EndpointReport report;
  report.position = e;
  std::optional<ScaleLimit> computed;
  try {
    computed = computed_scale_limit(spec, iv, c, which);
  } catch (const AmbiguousTailError&) {
    if (!declared) throw;
    report.diagnostics.push_back(end_label(iv, which) + ": scale limit not extrapolable; using the declared value");
  }
  if (declared) {
    report.s_limit = *declared;
    if (computed && limits_conflict(*declared, *computed)) {
      report.diagnostics.push_back(end_label(iv, which) + ": declared scale limit " + to_string(*declared) +
                                   " conflicts with computed " + to_string(*computed));
    }
  } else {
    report.s_limit = *computed;
  }
  report.approachable = report.s_limit.finite();

  const std::function<double(double)> rho = [&](double x) { return spec.speed_density(x); };
  const IntegralVerdict mass = which == End::Lower ? improper_integral(rho, e, c) : improper_integral(rho, c, e);
  report.m_stages = mass.stages;
  report.m_finite = mass.finite;
  if (mass.finite) {
    report.m_near = mass.value;
    for (const Atom& a : spec.atoms) {
      if ((which == End::Lower && a.x > e && a.x < c) || (which == End::Upper && a.x > c && a.x < e)) {
        report.m_near += a.mass;
      }
    }
  }
  report.regular = report.approachable && report.m_finite;
  const auto& declared_boundary = which == End::Lower ? iv.lo_boundary : iv.hi_boundary;
  const bool included = which == End::Lower ? iv.lo_included : iv.hi_included;
  report.boundary = declared_boundary.value_or(report.regular && included ? Boundary::Reflecting : Boundary::Open);
  return report;
}

RecurrenceVerdict classify_recurrence(const DiffusionSpec& spec, std::size_t interval) {
  RecurrenceVerdict verdict;
  try {
    verdict.lower = endpoint_report(spec, interval, End::Lower);
    verdict.upper = endpoint_report(spec, interval, End::Upper);
  } catch (const AmbiguousTailError& e) {
    verdict.evidence = std::string("endpoint undecided: ") + e.what();
    return verdict;
  }
  auto leaks = [](const EndpointReport& r) {
    return r.approachable && (!r.regular || r.boundary == Boundary::Open);
  };
  auto holds = [](const EndpointReport& r) {
    return !r.approachable || (r.regular && r.boundary == Boundary::Reflecting);
  };
  std::ostringstream evidence;
  for (const EndpointReport* r : {&*verdict.lower, &*verdict.upper}) {
    evidence << "end " << r->position << ": s " << to_string(r->s_limit) << ", "
             << (r->approachable ? "approachable" : "non-approachable") << ", "
             << (r->regular ? "regular" : "non-regular") << ", " << to_string(r->boundary) << "; ";
  }
  if (leaks(*verdict.lower) || leaks(*verdict.upper)) {
    verdict.verdict = Recurrence::Transient;
  } else if (holds(*verdict.lower) && holds(*verdict.upper)) {
    verdict.verdict = Recurrence::Recurrent;
  }
  verdict.evidence = evidence.str();
  verdict.evidence.resize(verdict.evidence.size() - 2);
  return verdict;
}

FellerVerdict feller_explosion_test(const DiffusionSpec& spec, std::size_t interval) {
  const double c = spec.reference_point(interval);
  const DiffusionInterval& iv = spec.intervals[interval];
  const Expression ds = spec.scale.derivative();
  FellerVerdict verdict;
  bool withheld = false;

  for (End which : {End::Lower, End::Upper}) {
    FellerEnd& out = which == End::Lower ? verdict.lower : verdict.upper;
    const double e = end_position(iv, which);
    // m((x, c)) ds(x) toward the lower end, m((c, x)) ds(x) toward the upper end
    std::optional<EndpointReport> end;
    try {
      end = endpoint_report(spec, interval, which);
    } catch (const AmbiguousTailError&) {
      // without a scale limit only the nested form of the integral is available
    }
    try {
      out.integral = end ? feller_integral(spec, c, *end, which) : nested_feller_integral(spec, ds, c, e, which);
    } catch (const AmbiguousTailError& ex) {
      out.evidence = std::string("integral undecided: ") + ex.what();
      withheld = true;
      continue;
    }
    if (!out.integral->finite) {
      out.evidence = "integral diverges";
      continue;
    }
    if (!end) {
      out.evidence = "finite integral, endpoint undecided";
      withheld = true;
      continue;
    }
    out.explosive = !(end->regular && end->boundary == Boundary::Reflecting);
    out.evidence = out.explosive ? "finite integral: mass leaves through this end"
                                 : "finite integral at a regular reflecting end";
  }
  if (!withheld) verdict.conservative = !verdict.lower.explosive && !verdict.upper.explosive;
  return verdict;
}

// --- Birth-death chains -----------------------------------------------------------

double BirthDeathSpec::atom(std::size_t k) const {
  const double x = static_cast<double>(k);
  const double a = family == Family::Power ? coefficient * std::pow(x, p) : (*custom)(x);
  if (!(a > 0.0)) throw Error(ErrorCode::NonpositiveAtom, "a_" + std::to_string(k) + " must be > 0");
  return a;
}

std::string BirthDeathSpec::describe() const {
  std::ostringstream out;
  if (family == Family::Power) {
    out << "a_k = " << coefficient << " * k^" << p;
  } else {
    out << "a_k = " << (custom ? custom->str() : std::string("?"));
  }
  out << ", k >= " << start;
  return out.str();
}

namespace {

// Decade checkpoints 1e2..1e5: growing increments mean divergence, increments
// shrinking at least geometrically (ratio <= 1/2) mean convergence.
SeriesVerdict series_heuristic(const std::vector<double>& sums, std::string& evidence) {
  std::vector<double> d;
  for (std::size_t j = 1; j < sums.size(); ++j) d.push_back(sums[j] - sums[j - 1]);
  double rmin = INFINITY, rmax = 0.0;
  for (std::size_t j = 1; j < d.size(); ++j) {
    const double r = d[j - 1] > 0.0 ? d[j] / d[j - 1] : INFINITY;
    rmin = std::min(rmin, r);
    rmax = std::max(rmax, r);
  }
  std::ostringstream out;
  out << "decade increment ratios in [" << rmin << ", " << rmax << "]";
  evidence = out.str();
  if (rmin >= 0.9) return SeriesVerdict::Divergent;
  if (rmax <= 0.5) return SeriesVerdict::Convergent;
  return SeriesVerdict::Undecided;
}

}  // namespace

BirthDeathReport birth_death_conservative(const BirthDeathSpec& spec) {
  if (spec.family == BirthDeathSpec::Family::Power && !(spec.coefficient > 0.0)) {
    throw Error(ErrorCode::NonpositiveAtom, "power-family coefficient must be > 0");
  }
  if (spec.family == BirthDeathSpec::Family::Custom && !spec.custom) {
    throw Error(ErrorCode::InvalidSpec, "custom family needs an expression");
  }
  if (spec.start < 1) throw Error(ErrorCode::InvalidSpec, "start index must be >= 1");

  BirthDeathReport report;
  const std::size_t checkpoints[] = {100, 1000, 10000, 100000};
  std::vector<double> series_sums, mass_sums;
  ExactSum series, mass;
  std::size_t next = 0;
  for (std::size_t k = spec.start; k <= checkpoints[3]; ++k) {
    const double a = spec.atom(k);
    series.add(a / static_cast<double>(k));
    mass.add(a);
    if (k == checkpoints[next]) {
      report.partial_sums.emplace_back(static_cast<double>(k), series.value());
      series_sums.push_back(series.value());
      mass_sums.push_back(mass.value());
      ++next;
    }
  }

  if (spec.family == BirthDeathSpec::Family::Power) {
    report.series = spec.p >= 0.0 ? SeriesVerdict::Divergent : SeriesVerdict::Convergent;
    report.mass = spec.p >= -1.0 ? SeriesVerdict::Divergent : SeriesVerdict::Convergent;
    std::ostringstream out;
    out << "power family: sum of a_k/k ~ sum k^" << spec.p - 1.0 << " "
        << (report.series == SeriesVerdict::Divergent ? "diverges" : "converges");
    report.evidence = out.str();
  } else {
    std::string series_evidence, mass_evidence;
    report.series = series_heuristic(series_sums, series_evidence);
    report.mass = series_heuristic(mass_sums, mass_evidence);
    report.evidence = "sum of a_k/k: " + series_evidence + "; sum of a_k: " + mass_evidence;
  }
  if (report.series == SeriesVerdict::Divergent) report.conservative = true;
  if (report.series == SeriesVerdict::Convergent) report.conservative = false;
  return report;
}

// --- Full reports ---------------------------------------------------------------

DiffusionReport diffusion_report(const DiffusionSpec& spec) {
  spec.validate();
  DiffusionReport report;
  const std::function<double(double)> rho = [&](double x) { return spec.speed_density(x); };
  for (std::size_t i = 0; i < spec.intervals.size(); ++i) {
    const DiffusionInterval& iv = spec.intervals[i];
    IntervalReport item;
    item.name = iv.name.empty() ? "I" + std::to_string(i + 1) : iv.name;
    item.recurrence = classify_recurrence(spec, i);
    item.feller = feller_explosion_test(spec, i);
    try {
      const IntegralVerdict m = improper_integral(rho, iv.lo, iv.hi);
      if (m.finite) {
        double total = m.value;
        for (const Atom& a : spec.atoms) {
          const bool above = a.x > iv.lo || (a.x == iv.lo && iv.lo_included);
          const bool below = a.x < iv.hi || (a.x == iv.hi && iv.hi_included);
          if (above && below) total += a.mass;
        }
        item.total_mass = total;
      }
    } catch (const AmbiguousTailError& e) {
      report.diagnostics.push_back(item.name + ": total mass undecided (" + e.what() + ")");
    }
    for (const auto& end : {item.recurrence.lower, item.recurrence.upper}) {
      if (end)
        for (const std::string& d : end->diagnostics) report.diagnostics.push_back(d);
    }

    switch (item.recurrence.verdict) {
      case Recurrence::Recurrent: report.rec.push_back(item.name); break;
      case Recurrence::Transient: report.trans.push_back(item.name); break;
      case Recurrence::Unclassified:
        report.diagnostics.push_back(item.name + ": recurrence unclassified (" + item.recurrence.evidence + ")");
        break;
    }
    if (item.feller.conservative) {
      (*item.feller.conservative ? report.cons : report.diss).push_back(item.name);
      if (item.recurrence.verdict == Recurrence::Recurrent && !*item.feller.conservative) {
        report.diagnostics.push_back(item.name + ": recurrent but not conservative, contradicting recurrence => conservativeness");
      }
      if (!*item.feller.conservative && item.recurrence.verdict != Recurrence::Transient) {
        report.diagnostics.push_back(item.name + ": dissipative but not transient");
      }
    } else {
      report.diagnostics.push_back(item.name + ": Feller test withheld (" + item.feller.lower.evidence + "; " +
                                   item.feller.upper.evidence + ")");
    }
    report.intervals.push_back(std::move(item));
  }
  report.whole_space_conservative = report.cons.size() == report.intervals.size();
  report.transient_part_conservative =
      std::all_of(report.trans.begin(), report.trans.end(), [&](const std::string& name) {
        return std::find(report.cons.begin(), report.cons.end(), name) != report.cons.end();
      });
  return report;
}

DiffusionSpec example_5_1_spec() {
  DiffusionSpec spec;
  spec.scale = Expression::parse("-1/x");
  spec.speed_density = Expression::parse("2*x^2");
  DiffusionInterval i1;
  i1.name = "I1";
  i1.lo = -2.0;
  i1.hi = -1.0;
  i1.lo_included = i1.hi_included = true;
  i1.reference = -1.5;
  DiffusionInterval i2;
  i2.name = "I2";
  i2.lo = 0.0;
  i2.hi = INFINITY;
  i2.lo_included = true;
  i2.reference = 1.0;
  i2.scale_at_lo = ScaleLimit::minus_infinity();
  i2.scale_at_hi = ScaleLimit::of(0.0);
  spec.intervals = {i1, i2};
  return spec;
}

DiffusionReport example_5_1() { return diffusion_report(example_5_1_spec()); }

DiffusionSpec example_5_2_spec() {
  DiffusionSpec spec;
  spec.scale = Expression::parse("-1/x");
  spec.speed_density = Expression::parse("x^2");
  DiffusionInterval iv;
  iv.name = "I";
  iv.lo = 0.0;
  iv.hi = 1.0;
  iv.lo_included = iv.hi_included = true;
  iv.reference = 0.5;
  iv.scale_at_lo = ScaleLimit::minus_infinity();
  iv.hi_boundary = Boundary::Open;
  spec.intervals = {iv};
  return spec;
}

void attach_birth_death(DiffusionReport& report, const BirthDeathSpec& atoms, const std::string& name,
                        bool assume_transient) {
  report.discrete = birth_death_conservative(atoms);
  report.discrete_name = name;
  if (report.discrete->mass == SeriesVerdict::Convergent) {
    report.diagnostics.push_back(name + ": total atom mass is finite, but the chain needs an infinite measure");
  }
  if (report.discrete->conservative) {
    (*report.discrete->conservative ? report.cons : report.diss).push_back(name);
  } else {
    report.diagnostics.push_back(name + ": conservativeness undecided (" + report.discrete->evidence + ")");
  }
  if (assume_transient) {
    // The trace of a transient form is transient: every piece is transient.
    report.transient_by_assumption = true;
    report.rec.clear();
    report.trans.clear();
    for (const IntervalReport& item : report.intervals) report.trans.push_back(item.name);
    report.trans.push_back(name);
  } else {
    report.diagnostics.push_back(name + ": recurrence of the chain is not computed; pass it as transient by assumption");
  }
  report.whole_space_conservative = report.cons.size() == report.intervals.size() + 1;
  report.transient_part_conservative =
      std::all_of(report.trans.begin(), report.trans.end(), [&](const std::string& piece) {
        return std::find(report.cons.begin(), report.cons.end(), piece) != report.cons.end();
      });
}

DiffusionReport example_5_2(const BirthDeathSpec& atoms) {
  DiffusionReport report = diffusion_report(example_5_2_spec());
  attach_birth_death(report, atoms, "J", true);
  return report;
}

}  // namespace dform
