#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dform/error.hpp"
#include "dform/exact_sum.hpp"

namespace dform {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<std::size_t>;

struct Edge {
  std::size_t i;
  std::size_t j;
  double weight;
};

/// Eigendecomposition of the symmetrized generator M^{-1/2} L M^{-1/2}.
///
/// Columns of eigenvectors() are Euclidean-orthonormal; mapping them by
/// M^{-1/2} gives an orthonormal basis of L^2(m). Every function of the
/// generator is applied through a vector of spectral multipliers g(lambda_i).
class SpectralCore {
 public:
  /// `symmetric_generator` must already be M^{-1/2} L M^{-1/2}.
  SpectralCore(const Matrix& symmetric_generator, const Vector& measure);

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues_.size()); }
  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& eigenvectors() const { return eigenvectors_; }
  const Vector& sqrt_measure() const { return sqrt_measure_; }

  /// g(A) u for multipliers g_i = g(lambda_i).
  Vector apply(const Vector& multipliers, const Vector& u) const;

  /// Q diag(g) Q^T: the operator g(A) in symmetrized coordinates. Conjugating
  /// by M^{1/2} is an isometry onto L^2(m), so norms computed here are m-norms.
  Matrix symmetric_operator(const Vector& multipliers) const;

  template <class F>
  Vector multipliers(F&& g) const {
    Vector out(eigenvalues_.size());
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) out[i] = g(eigenvalues_[i]);
    return out;
  }

 private:
  Vector eigenvalues_;
  Matrix eigenvectors_;
  Vector sqrt_measure_;
};

/// Element of L^2(X, m) on a finite space.
class MeasuredVector {
 public:
  MeasuredVector(Vector values, std::shared_ptr<const Vector> measure);

  const Vector& values() const { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

  double inner(const MeasuredVector& other) const;
  double norm() const;

 private:
  Vector values_;
  std::shared_ptr<const Vector> measure_;
};

/// Symmetric weighted graph with killing and a strictly positive vertex
/// measure. Immutable; copies share the cached spectral core.
///
///   E[u] = 1/2 sum_ij w_ij (u_i - u_j)^2 + sum_i k_i u_i^2
///   (Au)_i = (sum_j w_ij (u_i - u_j) + k_i u_i) / m_i
class FiniteDirichletForm {
 public:
  /// Dense weight matrix. Zero entries are absent edges.
  static FiniteDirichletForm from_dense(const Matrix& weights, const Vector& killing,
                                        const Vector& measure);

  /// Undirected edge list, each edge listed once (either orientation).
  /// Zero-weight edges are dropped.
  static FiniteDirichletForm from_edges(std::size_t n, std::vector<Edge> edges,
                                        const Vector& killing, const Vector& measure);

  std::size_t size() const { return n_; }
  /// Edges with i < j, sorted lexicographically, all weights > 0.
  const std::vector<Edge>& edges() const { return edges_; }
  const Vector& killing() const { return *killing_; }
  const Vector& measure() const { return *measure_; }
  const std::shared_ptr<const Vector>& measure_ptr() const { return measure_; }
  const SpectralCore& spectral() const { return *core_; }

  double total_mass() const;
  bool killing_free() const;

  /// L = D - W + diag(k), not divided by the measure.
  Matrix generator_matrix() const;
  Matrix weight_matrix() const;

  MeasuredVector measured(Vector values) const;

 private:
  FiniteDirichletForm() = default;

  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::shared_ptr<const Vector> killing_;
  std::shared_ptr<const Vector> measure_;
  std::shared_ptr<const SpectralCore> core_;
};

inline FiniteDirichletForm build_form(const Matrix& weights, const Vector& killing,
                                      const Vector& measure) {
  return FiniteDirichletForm::from_dense(weights, killing, measure);
}

// Strong parameter types for the two approximation families.
struct TimeParameter {
  double t;
};
struct ResolventParameter {
  double beta;
};

struct RepresentationCheck {
  double lhs;
  double rhs;
  double residual;
};

double m_inner(const FiniteDirichletForm& form, const Vector& u, const Vector& v);
double m_norm(const FiniteDirichletForm& form, const Vector& u);

/// min(max(u, 0), 1) componentwise.
Vector unit_clip(const Vector& u);

/// Direct generator action, independent of the spectral core.
Vector generator_apply(const FiniteDirichletForm& form, const Vector& u);

double energy(const FiniteDirichletForm& form, const Vector& u);

/// Adds every edge and killing term of E[u] to `acc` with the given sign.
/// Two energies built from the same terms agree exactly through this path.
void accumulate_energy_terms(const FiniteDirichletForm& form, const Vector& u, ExactSum& acc,
                             bool negate = false);

MeasuredVector semigroup_apply(const FiniteDirichletForm& form, double t, const Vector& u);
MeasuredVector resolvent_apply(const FiniteDirichletForm& form, double beta, const Vector& u);

double deny_yosida(const FiniteDirichletForm& form, double beta, const Vector& u);
double time_dependent(const FiniteDirichletForm& form, double t, const Vector& u);

MeasuredVector sigma_t(const FiniteDirichletForm& form, double t, const Vector& u);
MeasuredVector kappa_beta(const FiniteDirichletForm& form, double beta, const Vector& u);

RepresentationCheck representation_check(const FiniteDirichletForm& form, TimeParameter param,
                                         const Vector& u);
RepresentationCheck representation_check(const FiniteDirichletForm& form,
                                         ResolventParameter param, const Vector& u);

std::vector<MeasuredVector> heat_evolve(const FiniteDirichletForm& form, const Vector& u0,
                                        std::span<const double> time_grid);

bool is_excessive(const FiniteDirichletForm& form, const Vector& u,
                  std::span<const double> t_grid);

/// The bounded forms E^(t) and E^(beta) materialized as graph forms:
/// weights (M T_t)_ij / t and killing m_i (1 - T_t 1)_i / t, respectively
/// beta^2 (M K_beta)_ij and beta m_i (1 - beta K_beta 1)_i. Entries below a
/// relative noise floor of 1e-13 are dropped.
FiniteDirichletForm time_dependent_form(const FiniteDirichletForm& form, double t);
FiniteDirichletForm deny_yosida_form(const FiniteDirichletForm& form, double beta);

}  // namespace dform
