#include "dform/mosco.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

namespace dform {

namespace {

Vector gather(const Vector& v, const IndexSet& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(idx[k])];
  return out;
}

Vector scatter(const Vector& v, const IndexSet& idx, std::size_t n) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out[static_cast<Eigen::Index>(idx[k])] = v[static_cast<Eigen::Index>(k)];
  return out;
}

IndexSet sorted_unique(IndexSet s, std::size_t n) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  if (!s.empty() && s.back() >= n) {
    throw Error(ErrorCode::IndexOutOfRange, "vertex " + std::to_string(s.back()) + " out of range");
  }
  return s;
}

// Constrained sub-form on `free_set`: edges into the complement become killing.
FiniteDirichletForm constrained_subform(const FiniteDirichletForm& base, const IndexSet& free_set) {
  const std::size_t n = base.size();
  std::vector<std::size_t> local(n, n);
  for (std::size_t k = 0; k < free_set.size(); ++k) local[free_set[k]] = k;
  Vector killing = gather(base.killing(), free_set);
  std::vector<Edge> edges;
  for (const Edge& e : base.edges()) {
    const bool fi = local[e.i] < n;
    const bool fj = local[e.j] < n;
    if (fi && fj) {
      edges.push_back({local[e.i], local[e.j], e.weight});
    } else if (fi) {
      killing[static_cast<Eigen::Index>(local[e.i])] += e.weight;
    } else if (fj) {
      killing[static_cast<Eigen::Index>(local[e.j])] += e.weight;
    }
  }
  return FiniteDirichletForm::from_edges(free_set.size(), std::move(edges), killing,
                                         gather(base.measure(), free_set));
}

// Residual sequences for the operator family op(k, f) against op_limit(f).
MoscoReport convergence_report(const FormSequence& seq, std::span<const Vector> test_vectors, double tol,
                               const std::function<Vector(std::size_t, const Vector&)>& term_op,
                               const std::function<Vector(const Vector&)>& limit_op) {
  if (seq.terms.size() < 3) {
    throw Error(ErrorCode::TooFewTerms, "convergence needs at least 3 sequence terms, got " +
                                            std::to_string(seq.terms.size()));
  }
  if (test_vectors.empty()) throw Error(ErrorCode::InvalidArgument, "no test vectors");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  const FiniteDirichletForm& ref = seq.terms.front();
  for (const Vector& f : test_vectors) {
    if (static_cast<std::size_t>(f.size()) != ref.size()) {
      throw Error(ErrorCode::DimensionMismatch, "test vector length differs from the sequence size");
    }
  }

  MoscoReport report;
  report.tol = tol;
  report.couplings = seq.couplings;
  const std::size_t nk = seq.terms.size();
  report.worst.assign(nk, 0.0);
  for (const Vector& f : test_vectors) {
    const Vector target = limit_op(f);
    std::vector<double> row(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      row[k] = m_norm(ref, term_op(k, f) - target);
      report.worst[k] = std::max(report.worst[k], row[k]);
    }
    if (seq.monotone != Monotonicity::None) {
      for (std::size_t k = 0; k + 1 < nk; ++k) {
        if (row[k + 1] > row[k] + 1e-12) report.monotone_residuals = false;
      }
    }
    report.residuals.push_back(std::move(row));
  }

  // least-squares slope of log residual against log coupling, last half
  const std::size_t start = nk / 2;
  std::vector<double> xs, ys;
  for (std::size_t k = start; k < nk; ++k) {
    if (report.worst[k] > 0.0 && seq.couplings[k] > 0.0) {
      xs.push_back(std::log(seq.couplings[k]));
      ys.push_back(std::log(report.worst[k]));
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0.0) report.rate = sxy / sxx;
  }

  const double last = report.worst.back();
  bool tail_decreasing = true;
  for (std::size_t k = nk - 3; k + 1 < nk; ++k) {
    if (report.worst[k + 1] > report.worst[k] + 1e-12) tail_decreasing = false;
  }
  report.converged = last <= tol && tail_decreasing;
  std::ostringstream evidence;
  if (last > tol) evidence << "last residual " << last << " exceeds tol " << tol << "; ";
  if (!tail_decreasing) {
    evidence << "final residuals not decreasing: " << report.worst[nk - 3] << ", " << report.worst[nk - 2]
             << ", " << report.worst[nk - 1] << "; ";
  }
  if (!report.monotone_residuals) evidence << "monotone sequence with non-monotone residuals; ";
  report.evidence = evidence.str();
  if (report.evidence.size() >= 2) report.evidence.resize(report.evidence.size() - 2);
  return report;
}

double max_semigroup_commutator(const SpectralCore& core, const IndexSet& y,
                                const std::function<Matrix(const Vector&)>& embed) {
  double worst = 0.0;
  for (double t : {0.5, 1.0}) {
    const Vector g = core.multipliers([t](double lambda) { return std::exp(-t * lambda); });
    worst = std::max(worst, commutator_norm(embed(g), y));
  }
  return worst;
}

}  // namespace

// --- WideSenseForm -----------------------------------------------------------

WideSenseForm::WideSenseForm(FiniteDirichletForm base, IndexSet constraint)
    : base_(std::move(base)), constraint_(sorted_unique(std::move(constraint), base_.size())) {
  free_ = complement(constraint_, base_.size());
  constrained_ = std::make_shared<const FiniteDirichletForm>(constrained_subform(base_, free_));
}

double WideSenseForm::energy(const Vector& u) const {
  if (static_cast<std::size_t>(u.size()) != size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length differs from the form size");
  }
  for (std::size_t c : constraint_) {
    if (u[static_cast<Eigen::Index>(c)] != 0.0) return INFINITY;
  }
  return dform::energy(*constrained_, gather(u, free_));
}

Vector WideSenseForm::resolvent_apply(double beta, const Vector& f) const {
  if (static_cast<std::size_t>(f.size()) != size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length differs from the form size");
  }
  if (!(beta > 0.0)) throw Error(ErrorCode::NonpositiveBeta, "beta must be > 0");
  if (free_.empty()) return Vector::Zero(f.size());
  return scatter(dform::resolvent_apply(*constrained_, beta, gather(f, free_)).values(), free_, size());
}

Vector WideSenseForm::semigroup_apply(double t, const Vector& f) const {
  if (static_cast<std::size_t>(f.size()) != size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length differs from the form size");
  }
  if (t < 0.0) throw Error(ErrorCode::NegativeTime, "t must be >= 0");
  if (free_.empty()) return Vector::Zero(f.size());
  return scatter(dform::semigroup_apply(*constrained_, t, gather(f, free_)).values(), free_, size());
}

Matrix WideSenseForm::symmetric_operator(const Vector& constrained_multipliers) const {
  const auto n = static_cast<Eigen::Index>(size());
  Matrix out = Matrix::Zero(n, n);
  if (free_.empty()) return out;
  const Matrix inner = constrained_->spectral().symmetric_operator(constrained_multipliers);
  for (std::size_t a = 0; a < free_.size(); ++a)
    for (std::size_t b = 0; b < free_.size(); ++b)
      out(static_cast<Eigen::Index>(free_[a]), static_cast<Eigen::Index>(free_[b])) =
          inner(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  return out;
}

bool WideSenseForm::is_invariant(const IndexSet& subset) const {
  const IndexSet y = sorted_unique(subset, size());
  std::vector<char> state(size(), 0);  // 0 outside, 1 inside, 2 constrained
  for (std::size_t v : y) state[v] = 1;
  for (std::size_t c : constraint_) state[c] = 2;
  return std::none_of(base_.edges().begin(), base_.edges().end(), [&](const Edge& e) {
    return state[e.i] != 2 && state[e.j] != 2 && state[e.i] != state[e.j];
  });
}

// --- FormSequence ------------------------------------------------------------

std::string_view to_string(Monotonicity m) {
  switch (m) {
    case Monotonicity::Increasing: return "increasing";
    case Monotonicity::Decreasing: return "decreasing";
    case Monotonicity::None: return "none";
  }
  return "none";
}

FormSequence FormSequence::make(std::vector<FiniteDirichletForm> terms, std::vector<double> couplings,
                                WideSenseForm limit, Monotonicity monotone, std::vector<double> positions) {
  if (terms.empty()) throw Error(ErrorCode::InvalidArgument, "a sequence needs at least one term");
  if (couplings.size() != terms.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one coupling per term is required");
  }
  const std::size_t n = terms.front().size();
  const Vector& m = terms.front().measure();
  auto same_measure = [&](const Vector& other) {
    return other.size() == m.size() && ((other - m).cwiseAbs().array() <= 1e-14 * m.cwiseAbs().array()).all();
  };
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (terms[k].size() != n || !same_measure(terms[k].measure())) {
      throw Error(ErrorCode::DimensionMismatch,
                  "term " + std::to_string(k) + " differs in vertex count or measure");
    }
  }
  if (limit.size() != n || !same_measure(limit.base().measure())) {
    throw Error(ErrorCode::DimensionMismatch, "limit differs in vertex count or measure");
  }
  for (std::size_t k = 0; k < couplings.size(); ++k) {
    if (!(couplings[k] > 0.0) || !std::isfinite(couplings[k]) || (k > 0 && couplings[k] < couplings[k - 1])) {
      throw Error(ErrorCode::InvalidArgument, "couplings must be positive and nondecreasing");
    }
  }
  if (!positions.empty() && positions.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "one position per vertex is required");
  }
  if (monotone != Monotonicity::None && terms.size() > 1) {
    std::vector<Vector> samples = random_test_vectors(terms.front(), 4, 0x5eed5eedULL);
    samples.push_back(Vector::Ones(static_cast<Eigen::Index>(n)));
    for (const Vector& u : samples) {
      for (std::size_t k = 0; k + 1 < terms.size(); ++k) {
        const double a = energy(terms[k], u);
        const double b = energy(terms[k + 1], u);
        const double slack = 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
        const bool ok = monotone == Monotonicity::Increasing ? a <= b + slack : b <= a + slack;
        if (!ok) {
          throw Error(ErrorCode::InvalidArgument, "sequence tagged " + std::string(to_string(monotone)) +
                                                      " violates the tag between terms " + std::to_string(k) +
                                                      " and " + std::to_string(k + 1));
        }
      }
    }
  }
  return FormSequence{std::move(terms), std::move(couplings), std::move(limit), monotone, std::move(positions)};
}

std::vector<Vector> random_test_vectors(const FiniteDirichletForm& form, std::size_t count,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Vector> out;
  const auto n = static_cast<Eigen::Index>(form.size());
  while (out.size() < count && n > 0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    const double norm = m_norm(form, v);
    if (norm > 0.0) out.push_back(v / norm);
  }
  return out;
}

// --- Convergence -------------------------------------------------------------

MoscoReport resolvent_convergence(const FormSequence& seq, double beta, std::span<const Vector> test_vectors,
                                  double tol) {
  if (!(beta > 0.0)) throw Error(ErrorCode::NonpositiveBeta, "beta must be > 0");
  MoscoReport report = convergence_report(
      seq, test_vectors, tol,
      [&](std::size_t k, const Vector& f) { return resolvent_apply(seq.terms[k], beta, f).values(); },
      [&](const Vector& f) { return seq.limit.resolvent_apply(beta, f); });
  report.operator_name = "resolvent";
  report.parameter = beta;
  return report;
}

MoscoReport semigroup_convergence(const FormSequence& seq, double t, std::span<const Vector> test_vectors,
                                  double tol) {
  if (t < 0.0) throw Error(ErrorCode::NegativeTime, "t must be >= 0");
  MoscoReport report = convergence_report(
      seq, test_vectors, tol,
      [&](std::size_t k, const Vector& f) { return semigroup_apply(seq.terms[k], t, f).values(); },
      [&](const Vector& f) { return seq.limit.semigroup_apply(t, f); });
  report.operator_name = "semigroup";
  report.parameter = t;
  return report;
}

// --- Invariance under limits -------------------------------------------------

PreservationVerdict invariance_preservation_check(const FormSequence& seq, const IndexSet& subset,
                                                  std::uint64_t seed) {
  const IndexSet y = sorted_unique(subset, seq.size());
  for (std::size_t k = 0; k < seq.terms.size(); ++k) {
    if (!structurally_invariant(seq.terms[k], y)) {
      throw Error(ErrorCode::TermNotInvariant, "subset is not invariant for term " + std::to_string(k));
    }
  }
  const Vector one_y = indicator(y, seq.size());
  PreservationVerdict verdict;
  for (const Vector& u : random_test_vectors(seq.terms.front(), 8, seed)) {
    for (double t : {0.5, 1.0}) {
      const Vector lhs = one_y.cwiseProduct(seq.limit.semigroup_apply(t, u));
      const Vector rhs = seq.limit.semigroup_apply(t, one_y.cwiseProduct(u));
      verdict.limit_commutator = std::max(verdict.limit_commutator, m_norm(seq.terms.front(), lhs - rhs));
    }
  }
  verdict.preserved = verdict.limit_commutator <= 1e-9;
  return verdict;
}

EmergentInvariance emergent_invariance(const FormSequence& seq, const IndexSet& subset) {
  const IndexSet y = sorted_unique(subset, seq.size());
  EmergentInvariance out;
  out.limit_commutator = max_semigroup_commutator(
      seq.limit.constrained().spectral(), y, [&](const Vector& g) { return seq.limit.symmetric_operator(g); });
  out.min_term_commutator = INFINITY;
  for (const FiniteDirichletForm& term : seq.terms) {
    const SpectralCore& core = term.spectral();
    const double c = max_semigroup_commutator(core, y, [&](const Vector& g) { return core.symmetric_operator(g); });
    out.term_commutators.push_back(c);
    out.min_term_commutator = std::min(out.min_term_commutator, c);
  }
  return out;
}

MoscoReport part_convergence_check(const FormSequence& seq, const IndexSet& subset, double beta,
                                   std::span<const Vector> test_vectors, double tol) {
  const std::size_t n = seq.size();
  const IndexSet y = sorted_unique(subset, n);
  for (std::size_t k = 0; k < seq.terms.size(); ++k) {
    if (!structurally_invariant(seq.terms[k], y)) {
      throw Error(ErrorCode::TermNotInvariant, "subset is not invariant for term " + std::to_string(k));
    }
  }
  if (!seq.limit.is_invariant(y)) {
    throw Error(ErrorCode::LimitNotInvariant, "subset is not invariant for the limit");
  }
  std::vector<FiniteDirichletForm> parts;
  for (const FiniteDirichletForm& term : seq.terms) parts.push_back(part_form(term, y).form);

  // The limit part keeps edges from Y into the constraint set as killing.
  const FiniteDirichletForm& base = seq.limit.base();
  std::vector<std::size_t> local(n, n);
  for (std::size_t k = 0; k < y.size(); ++k) local[y[k]] = k;
  Vector killing = gather(base.killing(), y);
  std::vector<Edge> edges;
  for (const Edge& e : base.edges()) {
    const bool ii = local[e.i] < n;
    const bool jj = local[e.j] < n;
    if (ii && jj) {
      edges.push_back({local[e.i], local[e.j], e.weight});
    } else if (ii) {
      killing[static_cast<Eigen::Index>(local[e.i])] += e.weight;
    } else if (jj) {
      killing[static_cast<Eigen::Index>(local[e.j])] += e.weight;
    }
  }
  IndexSet constraint;
  for (std::size_t c : seq.limit.constraint())
    if (local[c] < n) constraint.push_back(local[c]);
  WideSenseForm limit(FiniteDirichletForm::from_edges(y.size(), std::move(edges), killing, gather(base.measure(), y)),
                      std::move(constraint));

  std::vector<double> positions;
  if (!seq.positions.empty())
    for (std::size_t v : y) positions.push_back(seq.positions[v]);
  const FormSequence part_seq{std::move(parts), seq.couplings, std::move(limit), seq.monotone, std::move(positions)};

  std::vector<Vector> restricted;
  for (const Vector& f : test_vectors) {
    if (static_cast<std::size_t>(f.size()) != n) {
      throw Error(ErrorCode::DimensionMismatch, "test vector length differs from the sequence size");
    }
    restricted.push_back(gather(f, y));
  }
  return resolvent_convergence(part_seq, beta, restricted, tol);
}

// --- Approximating forms -----------------------------------------------------

namespace {

constexpr double kApproxS[] = {0.5, 1.0};
constexpr double kConservativeS[] = {1.0, 10.0};

Vector time_family_multipliers(const SpectralCore& core, double t, double s) {
  return core.multipliers([t, s](double lambda) { return std::exp((s / t) * std::expm1(-t * lambda)); });
}

Vector resolvent_family_multipliers(const SpectralCore& core, double beta, double s) {
  return core.multipliers([beta, s](double lambda) { return std::exp(-s * beta * lambda / (beta + lambda)); });
}

void require_grids(std::span<const double> t_grid, std::span<const double> beta_grid) {
  for (double t : t_grid)
    if (!(t > 0.0)) throw Error(ErrorCode::NonpositiveTime, "t grid values must be > 0");
  for (double b : beta_grid)
    if (!(b > 0.0)) throw Error(ErrorCode::NonpositiveBeta, "beta grid values must be > 0");
}

}  // namespace

ApproxInvarianceReport approx_invariance_check(const FiniteDirichletForm& form, const IndexSet& subset,
                                               std::span<const double> t_grid,
                                               std::span<const double> beta_grid) {
  require_grids(t_grid, beta_grid);
  const IndexSet y = sorted_unique(subset, form.size());
  const SpectralCore& core = form.spectral();
  ApproxInvarianceReport report;
  report.invariant = structurally_invariant(form, y);
  auto run = [&](const std::string& family, double parameter, auto&& multipliers) {
    ApproxEntry entry{family, parameter, 0.0};
    for (double s : kApproxS) {
      entry.commutator = std::max(entry.commutator, commutator_norm(core.symmetric_operator(multipliers(s)), y));
    }
    report.entries.push_back(entry);
  };
  for (double t : t_grid) run("time", t, [&](double s) { return time_family_multipliers(core, t, s); });
  for (double b : beta_grid) run("resolvent", b, [&](double s) { return resolvent_family_multipliers(core, b, s); });

  report.consistent = std::all_of(report.entries.begin(), report.entries.end(), [&](const ApproxEntry& e) {
    return report.invariant ? e.commutator <= 1e-9 : e.commutator > 1e-6;
  });
  return report;
}

ApproxConservativeReport approx_conservative_spaces(const FiniteDirichletForm& form,
                                                    std::span<const double> t_grid,
                                                    std::span<const double> beta_grid) {
  require_grids(t_grid, beta_grid);
  const SpectralCore& core = form.spectral();
  const auto n = static_cast<Eigen::Index>(form.size());
  const Vector ones = Vector::Ones(n);

  ApproxConservativeReport report;
  report.x_cons = classify(form).x_cons;

  auto run = [&](const std::string& family, double parameter, auto&& multipliers) {
    std::vector<bool> keep(form.size(), true);
    for (double s : kConservativeS) {
      const Vector v = n ? core.apply(multipliers(s), ones) : Vector(0);
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(v[i] - 1.0) > 1e-9) keep[static_cast<std::size_t>(i)] = false;
    }
    ApproxSpaceEntry entry{family, parameter, {}};
    for (std::size_t i = 0; i < form.size(); ++i)
      if (keep[i]) entry.conservative.push_back(i);
    report.entries.push_back(std::move(entry));
  };
  for (double t : t_grid) run("time", t, [&](double s) { return time_family_multipliers(core, t, s); });
  for (double b : beta_grid) run("resolvent", b, [&](double s) { return resolvent_family_multipliers(core, b, s); });
  report.all_equal = std::all_of(report.entries.begin(), report.entries.end(),
                                 [&](const ApproxSpaceEntry& e) { return e.conservative == report.x_cons; });

  // The conservative and dissipative parts of E^(t) converge to those of E as t -> 0.
  const IndexSet x_diss = complement(report.x_cons, form.size());
  report.parts_converged = true;
  if (form.size() > 0) {
    std::vector<FiniteDirichletForm> terms;
    std::vector<double> couplings;
    for (double t : {1e-1, 1e-2, 1e-3, 1e-4}) {
      terms.push_back(time_dependent_form(form, t));
      couplings.push_back(1.0 / t);
    }
    const FormSequence seq =
        FormSequence::make(std::move(terms), std::move(couplings), WideSenseForm(form), Monotonicity::None);
    const std::vector<Vector> vectors = random_test_vectors(form, 4, 0xc0ffeeULL);
    if (!report.x_cons.empty()) {
      report.conservative_part = part_convergence_check(seq, report.x_cons, 1.0, vectors, 1e-3);
      report.parts_converged = report.parts_converged && report.conservative_part->converged;
    }
    if (!x_diss.empty()) {
      report.dissipative_part = part_convergence_check(seq, x_diss, 1.0, vectors, 1e-3);
      report.parts_converged = report.parts_converged && report.dissipative_part->converged;
    }
  }
  return report;
}

M1SpotCheck m1_spot_check(const FormSequence& seq, std::span<const Vector> vectors) {
  M1SpotCheck out;
  out.passed = true;
  for (const Vector& u : vectors) {
    const double limit = seq.limit.energy(u);
    std::vector<double> energies;
    for (const FiniteDirichletForm& term : seq.terms) energies.push_back(energy(term, u));
    out.limit_energy.push_back(limit);
    out.last_term_energy.push_back(energies.back());
    if (std::isfinite(limit)) {
      out.passed = out.passed && energies.back() >= limit - 1e-9;
    } else {
      const bool increasing = std::is_sorted(energies.begin(), energies.end());
      out.passed = out.passed && increasing && (energies.size() < 2 || energies.back() > energies.front());
    }
  }
  return out;
}

}  // namespace dform
