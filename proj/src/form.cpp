#include "dform/form.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dform/kernels.hpp"

namespace dform {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AsymmetricWeights: return "AsymmetricWeights";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NonpositiveMeasure: return "NonpositiveMeasure";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonPSDForm: return "NonPSDForm";
    case ErrorCode::NegativeTime: return "NegativeTime";
    case ErrorCode::NonpositiveTime: return "NonpositiveTime";
    case ErrorCode::NonpositiveBeta: return "NonpositiveBeta";
    case ErrorCode::UnsortedGrid: return "UnsortedGrid";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NotInvariant: return "NotInvariant";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::NonStabilizingLimit: return "NonStabilizingLimit";
    case ErrorCode::NonpositiveRho: return "NonpositiveRho";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::NotExcessive: return "NotExcessive";
    case ErrorCode::TooFewTerms: return "TooFewTerms";
    case ErrorCode::TermNotInvariant: return "TermNotInvariant";
    case ErrorCode::LimitNotInvariant: return "LimitNotInvariant";
    case ErrorCode::EvenGrid: return "EvenGrid";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EvaluationFailure: return "EvaluationFailure";
    case ErrorCode::AmbiguousTail: return "AmbiguousTail";
    case ErrorCode::NonpositiveAtom: return "NonpositiveAtom";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
  }
  return "Unknown";
}

namespace {

// Computed eigenvalues below -kPsdTol * scale reject the form, with
// scale = max(1, |lambda_max|); smaller negatives are clamped to zero.
constexpr double kPsdTol = 1e-10;
constexpr double kMaterializeFloor = 1e-13;

void require_size(const FiniteDirichletForm& form, const Vector& u, const char* what) {
  if (static_cast<std::size_t>(u.size()) != form.size()) {
    std::ostringstream msg;
    msg << what << " has length " << u.size() << ", form has " << form.size() << " vertices";
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
}

void require_positive_time(double t) {
  if (!(t > 0.0)) throw Error(ErrorCode::NonpositiveTime, "t must be > 0");
}

void require_positive_beta(double beta) {
  if (!(beta > 0.0)) throw Error(ErrorCode::NonpositiveBeta, "beta must be > 0");
}

Vector apply_multipliers(const FiniteDirichletForm& form, const Vector& g, const Vector& u) {
  return form.spectral().apply(g, u);
}

// Sum of g(lambda_k) c_k^2 with c = Q^T M^{1/2} u.
double spectral_quadratic(const FiniteDirichletForm& form, const Vector& g, const Vector& u) {
  const SpectralCore& core = form.spectral();
  if (core.size() == 0) return 0.0;
  const Vector c = core.eigenvectors().transpose() * core.sqrt_measure().cwiseProduct(u);
  return (g.array() * c.array().square()).sum();
}

}  // namespace

// ---------------------------------------------------------------------------

SpectralCore::SpectralCore(const Matrix& symmetric_generator, const Vector& measure)
    : sqrt_measure_(measure.cwiseSqrt()) {
  const Eigen::Index n = symmetric_generator.rows();
  if (n == 0) {
    eigenvalues_.resize(0);
    eigenvectors_.resize(0, 0);
    return;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric_generator);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::NonPSDForm, "eigendecomposition did not converge");
  }
  eigenvalues_ = solver.eigenvalues();
  eigenvectors_ = solver.eigenvectors();
  const double scale = std::max(1.0, std::abs(eigenvalues_[n - 1]));
  for (Eigen::Index i = 0; i < n; ++i) {
    double& lambda = eigenvalues_[i];
    if (lambda < -kPsdTol * scale) {
      std::ostringstream msg;
      msg << "generator eigenvalue " << lambda << " is negative";
      throw Error(ErrorCode::NonPSDForm, msg.str());
    }
    // floating-point negative zeros; the band (-1e-10, -1e-12] is clamped too
    if (lambda < 0.0) lambda = 0.0;
  }
}

Vector SpectralCore::apply(const Vector& multipliers, const Vector& u) const {
  Vector out;
  if (size() == 0) return Vector(0);
  kernels::spectral_apply_parallel(eigenvectors_, sqrt_measure_, multipliers, u, out);
  return out;
}

Matrix SpectralCore::symmetric_operator(const Vector& multipliers) const {
  Matrix out;
  if (size() == 0) return Matrix(0, 0);
  kernels::spectral_operator_parallel(eigenvectors_, multipliers, out);
  return out;
}

// ---------------------------------------------------------------------------

MeasuredVector::MeasuredVector(Vector values, std::shared_ptr<const Vector> measure)
    : values_(std::move(values)), measure_(std::move(measure)) {
  if (!measure_ || measure_->size() != values_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector length differs from measure length");
  }
}

double MeasuredVector::inner(const MeasuredVector& other) const {
  if (other.size() != size()) throw Error(ErrorCode::DimensionMismatch, "inner product lengths");
  return (values_.array() * other.values_.array() * measure_->array()).sum();
}

double MeasuredVector::norm() const { return std::sqrt(inner(*this)); }

// ---------------------------------------------------------------------------

FiniteDirichletForm FiniteDirichletForm::from_dense(const Matrix& weights, const Vector& killing,
                                                    const Vector& measure) {
  const Eigen::Index n = weights.rows();
  if (weights.cols() != n || killing.size() != n || measure.size() != n) {
    std::ostringstream msg;
    msg << "weights " << weights.rows() << "x" << weights.cols() << ", killing "
        << killing.size() << ", measure " << measure.size();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (weights(i, i) != 0.0) {
      throw Error(ErrorCode::InvalidArgument,
                  "diagonal weight w_" + std::to_string(i) + std::to_string(i) + " must be 0");
    }
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (weights(i, j) != weights(j, i)) {
        std::ostringstream msg;
        msg << "w_" << i << j << " = " << weights(i, j) << " but w_" << j << i << " = "
            << weights(j, i);
        throw Error(ErrorCode::AsymmetricWeights, msg.str());
      }
      if (weights(i, j) != 0.0) {
        edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), weights(i, j)});
      }
    }
  }
  return from_edges(static_cast<std::size_t>(n), std::move(edges), killing, measure);
}

FiniteDirichletForm FiniteDirichletForm::from_edges(std::size_t n, std::vector<Edge> edges,
                                                    const Vector& killing, const Vector& measure) {
  if (static_cast<std::size_t>(killing.size()) != n ||
      static_cast<std::size_t>(measure.size()) != n) {
    std::ostringstream msg;
    msg << "n = " << n << ", killing " << killing.size() << ", measure " << measure.size();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto ei = static_cast<Eigen::Index>(i);
    if (!std::isfinite(killing[ei]) || killing[ei] < 0.0) {
      throw Error(ErrorCode::NegativeEntry, "killing[" + std::to_string(i) + "] must be finite and >= 0");
    }
    if (!std::isfinite(measure[ei]) || !(measure[ei] > 0.0)) {
      throw Error(ErrorCode::NonpositiveMeasure, "measure[" + std::to_string(i) + "] must be finite and > 0");
    }
  }

  std::vector<Edge> kept;
  kept.reserve(edges.size());
  for (std::size_t idx = 0; idx < edges.size(); ++idx) {
    Edge e = edges[idx];
    if (e.i >= n || e.j >= n) {
      std::ostringstream msg;
      msg << "edge " << idx << " (" << e.i << ", " << e.j << ") outside [0, " << n << ")";
      throw Error(ErrorCode::IndexOutOfRange, msg.str());
    }
    if (e.i == e.j) {
      throw Error(ErrorCode::InvalidArgument, "edge " + std::to_string(idx) + " is a self-loop");
    }
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
      throw Error(ErrorCode::NegativeEntry, "edge " + std::to_string(idx) + " weight must be finite and >= 0");
    }
    if (e.i > e.j) std::swap(e.i, e.j);
    if (e.weight > 0.0) kept.push_back(e);
  }
  std::sort(kept.begin(), kept.end(), [](const Edge& a, const Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  for (std::size_t k = 1; k < kept.size(); ++k) {
    if (kept[k].i == kept[k - 1].i && kept[k].j == kept[k - 1].j) {
      std::ostringstream msg;
      msg << "edge (" << kept[k].i << ", " << kept[k].j << ") listed twice";
      throw Error(ErrorCode::InvalidArgument, msg.str());
    }
  }

  FiniteDirichletForm form;
  form.n_ = n;
  form.edges_ = std::move(kept);
  form.killing_ = std::make_shared<const Vector>(killing);
  form.measure_ = std::make_shared<const Vector>(measure);

  const Matrix l = form.generator_matrix();
  const Vector inv_sqrt = measure.cwiseSqrt().cwiseInverse();
  const Matrix sym = inv_sqrt.asDiagonal() * l * inv_sqrt.asDiagonal();
  form.core_ = std::make_shared<const SpectralCore>(sym, measure);
  return form;
}

double FiniteDirichletForm::total_mass() const { return measure_->sum(); }

bool FiniteDirichletForm::killing_free() const { return (killing_->array() == 0.0).all(); }

Matrix FiniteDirichletForm::weight_matrix() const {
  const auto n = static_cast<Eigen::Index>(n_);
  Matrix w = Matrix::Zero(n, n);
  for (const Edge& e : edges_) {
    w(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.weight;
    w(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.weight;
  }
  return w;
}

Matrix FiniteDirichletForm::generator_matrix() const {
  const auto n = static_cast<Eigen::Index>(n_);
  Matrix l = Matrix::Zero(n, n);
  for (const Edge& e : edges_) {
    const auto i = static_cast<Eigen::Index>(e.i);
    const auto j = static_cast<Eigen::Index>(e.j);
    l(i, i) += e.weight;
    l(j, j) += e.weight;
    l(i, j) -= e.weight;
    l(j, i) -= e.weight;
  }
  for (Eigen::Index i = 0; i < n; ++i) l(i, i) += (*killing_)[i];
  return l;
}

MeasuredVector FiniteDirichletForm::measured(Vector values) const {
  return MeasuredVector(std::move(values), measure_);
}

// ---------------------------------------------------------------------------

double m_inner(const FiniteDirichletForm& form, const Vector& u, const Vector& v) {
  require_size(form, u, "u");
  require_size(form, v, "v");
  return (u.array() * v.array() * form.measure().array()).sum();
}

double m_norm(const FiniteDirichletForm& form, const Vector& u) {
  return std::sqrt(m_inner(form, u, u));
}

Vector unit_clip(const Vector& u) { return u.cwiseMax(0.0).cwiseMin(1.0); }

Vector generator_apply(const FiniteDirichletForm& form, const Vector& u) {
  require_size(form, u, "u");
  Vector out = form.killing().cwiseProduct(u);
  for (const Edge& e : form.edges()) {
    const auto i = static_cast<Eigen::Index>(e.i);
    const auto j = static_cast<Eigen::Index>(e.j);
    const double flow = e.weight * (u[i] - u[j]);
    out[i] += flow;
    out[j] -= flow;
  }
  return out.cwiseQuotient(form.measure());
}

double energy(const FiniteDirichletForm& form, const Vector& u) {
  require_size(form, u, "u");
  return kernels::energy_parallel(form.edges(), form.killing(), u);
}

void accumulate_energy_terms(const FiniteDirichletForm& form, const Vector& u, ExactSum& acc,
                             bool negate) {
  require_size(form, u, "u");
  const double sign = negate ? -1.0 : 1.0;
  for (const Edge& e : form.edges()) {
    const double d = u[static_cast<Eigen::Index>(e.i)] - u[static_cast<Eigen::Index>(e.j)];
    acc.add(sign * (e.weight * d * d));
  }
  const Vector& k = form.killing();
  for (Eigen::Index i = 0; i < k.size(); ++i) acc.add(sign * (k[i] * u[i] * u[i]));
}

MeasuredVector semigroup_apply(const FiniteDirichletForm& form, double t, const Vector& u) {
  require_size(form, u, "u");
  if (t < 0.0 || std::isnan(t)) throw Error(ErrorCode::NegativeTime, "t must be >= 0");
  if (t == 0.0) return form.measured(u);
  const Vector g = form.spectral().multipliers([t](double lambda) { return std::exp(-t * lambda); });
  return form.measured(apply_multipliers(form, g, u));
}

MeasuredVector resolvent_apply(const FiniteDirichletForm& form, double beta, const Vector& u) {
  require_size(form, u, "u");
  require_positive_beta(beta);
  const Vector g = form.spectral().multipliers([beta](double lambda) { return 1.0 / (beta + lambda); });
  return form.measured(apply_multipliers(form, g, u));
}

double deny_yosida(const FiniteDirichletForm& form, double beta, const Vector& u) {
  require_size(form, u, "u");
  require_positive_beta(beta);
  // beta (u - beta K_beta u, u) has spectral multiplier beta*lambda/(beta+lambda)
  const Vector g = form.spectral().multipliers(
      [beta](double lambda) { return beta * lambda / (beta + lambda); });
  return spectral_quadratic(form, g, u);
}

double time_dependent(const FiniteDirichletForm& form, double t, const Vector& u) {
  require_size(form, u, "u");
  require_positive_time(t);
  const Vector g =
      form.spectral().multipliers([t](double lambda) { return -std::expm1(-t * lambda) / t; });
  return spectral_quadratic(form, g, u);
}

MeasuredVector sigma_t(const FiniteDirichletForm& form, double t, const Vector& u) {
  require_size(form, u, "u");
  require_positive_time(t);
  const Vector u2 = u.cwiseAbs2();
  const Vector one = Vector::Ones(u.size());
  const Vector tu2 = semigroup_apply(form, t, u2).values();
  const Vector tu = semigroup_apply(form, t, u).values();
  const Vector t1 = semigroup_apply(form, t, one).values();
  Vector out = (tu2 - 2.0 * u.cwiseProduct(tu) + u2.cwiseProduct(t1)) / t;
  return form.measured(std::move(out));
}

MeasuredVector kappa_beta(const FiniteDirichletForm& form, double beta, const Vector& u) {
  require_size(form, u, "u");
  require_positive_beta(beta);
  const Vector u2 = u.cwiseAbs2();
  const Vector one = Vector::Ones(u.size());
  const Vector ku2 = resolvent_apply(form, beta, u2).values();
  const Vector ku = resolvent_apply(form, beta, u).values();
  const Vector k1 = resolvent_apply(form, beta, one).values();
  Vector out = beta * (ku2 - 2.0 * u.cwiseProduct(ku) + u2.cwiseProduct(k1));
  return form.measured(std::move(out));
}

RepresentationCheck representation_check(const FiniteDirichletForm& form, TimeParameter param,
                                         const Vector& u) {
  const double t = param.t;
  const double lhs = time_dependent(form, t, u);
  const Vector& m = form.measure();
  const Vector sigma = sigma_t(form, t, u).values();
  const Vector t1 = semigroup_apply(form, t, Vector::Ones(u.size())).values();
  const double jump = 0.5 * (sigma.array() * m.array()).sum();
  const double kill = ((1.0 - t1.array()) * u.array().square() * m.array()).sum() / t;
  const double rhs = jump + kill;
  return {lhs, rhs, std::abs(lhs - rhs) / (1.0 + std::abs(lhs))};
}

RepresentationCheck representation_check(const FiniteDirichletForm& form,
                                         ResolventParameter param, const Vector& u) {
  const double beta = param.beta;
  const double lhs = deny_yosida(form, beta, u);
  const Vector& m = form.measure();
  const Vector kappa = kappa_beta(form, beta, u).values();
  const Vector k1 = resolvent_apply(form, beta, Vector::Ones(u.size())).values();
  const double jump = 0.5 * beta * (kappa.array() * m.array()).sum();
  const double kill = beta * ((1.0 - beta * k1.array()) * u.array().square() * m.array()).sum();
  const double rhs = jump + kill;
  return {lhs, rhs, std::abs(lhs - rhs) / (1.0 + std::abs(lhs))};
}

std::vector<MeasuredVector> heat_evolve(const FiniteDirichletForm& form, const Vector& u0,
                                        std::span<const double> time_grid) {
  require_size(form, u0, "u0");
  if (time_grid.empty() || time_grid.front() != 0.0) {
    throw Error(ErrorCode::UnsortedGrid, "time grid must start at 0");
  }
  for (std::size_t k = 1; k < time_grid.size(); ++k) {
    if (!(time_grid[k] > time_grid[k - 1])) {
      throw Error(ErrorCode::UnsortedGrid, "time grid must be strictly increasing");
    }
  }
  std::vector<MeasuredVector> trajectory;
  trajectory.reserve(time_grid.size());
  for (double t : time_grid) trajectory.push_back(semigroup_apply(form, t, u0));
  return trajectory;
}

bool is_excessive(const FiniteDirichletForm& form, const Vector& u,
                  std::span<const double> t_grid) {
  require_size(form, u, "u");
  if ((u.array() < 0.0).any()) throw Error(ErrorCode::NegativeInput, "u must be >= 0");
  const double slack = 1e-12 * std::max(1.0, u.size() ? u.maxCoeff() : 0.0);
  for (double t : t_grid) {
    const Vector tu = semigroup_apply(form, t, u).values();
    if (((tu - u).array() > slack).any()) return false;
  }
  return true;
}

namespace {

// Builds a graph form from a symmetric matrix P whose off-diagonal part gives
// the weights (scaled) and whose row defects give the killing.
FiniteDirichletForm materialize(const FiniteDirichletForm& form, const Matrix& p,
                                double weight_scale, const Vector& killing_raw) {
  const auto n = static_cast<Eigen::Index>(form.size());
  // Noise in both the weights and the row defects is relative to the diagonal of P.
  const double floor = kMaterializeFloor * weight_scale * p.diagonal().cwiseAbs().maxCoeff();
  std::vector<Edge> edges;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double w = weight_scale * 0.5 * (p(i, j) + p(j, i));
      if (w > floor) edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), w});
    }
  }
  Vector killing = killing_raw;
  for (Eigen::Index i = 0; i < n; ++i)
    if (killing[i] <= floor) killing[i] = 0.0;
  return FiniteDirichletForm::from_edges(form.size(), std::move(edges), killing, form.measure());
}

}  // namespace

FiniteDirichletForm time_dependent_form(const FiniteDirichletForm& form, double t) {
  require_positive_time(t);
  const SpectralCore& core = form.spectral();
  if (core.size() == 0) return form;
  const Vector g = core.multipliers([t](double lambda) { return std::exp(-t * lambda); });
  const Vector& d = core.sqrt_measure();
  const Matrix p = d.asDiagonal() * core.symmetric_operator(g) * d.asDiagonal();
  const Vector killing = (form.measure() - p.rowwise().sum()) / t;
  return materialize(form, p, 1.0 / t, killing);
}

FiniteDirichletForm deny_yosida_form(const FiniteDirichletForm& form, double beta) {
  require_positive_beta(beta);
  const SpectralCore& core = form.spectral();
  if (core.size() == 0) return form;
  const Vector g = core.multipliers([beta](double lambda) { return 1.0 / (beta + lambda); });
  const Vector& d = core.sqrt_measure();
  const Matrix p = d.asDiagonal() * core.symmetric_operator(g) * d.asDiagonal();
  const Vector killing = beta * (form.measure() - beta * p.rowwise().sum());
  return materialize(form, p, beta * beta, killing);
}

}  // namespace dform
