#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dform/invariance.hpp"

namespace dform {

/// A form in the wide sense: `base` with the vertices of `constraint` forced
/// to zero. Its resolvent and semigroup are those of the constrained sub-form
/// on the complement of the constraint set (killing augmented by the weight of
/// edges into the constraint set), extended by zero.
class WideSenseForm {
 public:
  WideSenseForm(FiniteDirichletForm base, IndexSet constraint = {});

  std::size_t size() const { return base_.size(); }
  const FiniteDirichletForm& base() const { return base_; }
  const IndexSet& constraint() const { return constraint_; }
  /// Complement of the constraint set, where the constrained sub-form lives.
  const IndexSet& free_vertices() const { return free_; }
  const FiniteDirichletForm& constrained() const { return *constrained_; }

  /// Energy; +infinity for u nonzero on the constraint set.
  double energy(const Vector& u) const;
  Vector resolvent_apply(double beta, const Vector& f) const;
  /// At t = 0 this is the projection off the constraint set.
  Vector semigroup_apply(double t, const Vector& f) const;
  /// g(A) for the constrained generator in symmetrized coordinates on the full
  /// vertex set (rows and columns of constrained vertices are zero).
  Matrix symmetric_operator(const Vector& constrained_multipliers) const;
  bool is_invariant(const IndexSet& subset) const;

 private:
  FiniteDirichletForm base_;
  IndexSet constraint_;
  IndexSet free_;
  std::shared_ptr<const FiniteDirichletForm> constrained_;
};

enum class Monotonicity { Increasing, Decreasing, None };

std::string_view to_string(Monotonicity m);

/// Terms on a common vertex set and measure together with a declared limit.
/// `couplings` label the terms (the abscissa of the decay-rate fit), are
/// positive and nondecreasing. `positions` optionally holds node coordinates.
struct FormSequence {
  std::vector<FiniteDirichletForm> terms;
  std::vector<double> couplings;
  WideSenseForm limit;
  Monotonicity monotone = Monotonicity::None;
  std::vector<double> positions;

  /// Validates shapes, measures, couplings and the monotone tag (sampled with
  /// a fixed seed). Throws DimensionMismatch or InvalidArgument.
  static FormSequence make(std::vector<FiniteDirichletForm> terms, std::vector<double> couplings,
                           WideSenseForm limit, Monotonicity monotone,
                           std::vector<double> positions = {});
  std::size_t size() const { return terms.empty() ? 0 : terms.front().size(); }
};

struct MoscoReport {
  std::string operator_name;   ///< "resolvent" or "semigroup"
  double parameter = 0.0;      ///< beta or t
  double tol = 0.0;
  std::vector<double> couplings;
  /// residuals[v][k] = ||op_k f_v - op_inf f_v||_m, recorded verbatim
  std::vector<std::vector<double>> residuals;
  std::vector<double> worst;   ///< max over test vectors, per term
  std::optional<double> rate;  ///< log-log slope over the last half; empty if undefined
  bool monotone_residuals = true;  ///< nonincreasing within 1e-12 (checked for monotone sequences)
  bool converged = false;
  std::string evidence;
};

MoscoReport resolvent_convergence(const FormSequence& seq, double beta,
                                  std::span<const Vector> test_vectors, double tol);
MoscoReport semigroup_convergence(const FormSequence& seq, double t,
                                  std::span<const Vector> test_vectors, double tol);

/// Unit m-norm Gaussian test vectors, reproducible from the seed.
std::vector<Vector> random_test_vectors(const FiniteDirichletForm& form, std::size_t count,
                                        std::uint64_t seed);

struct PreservationVerdict {
  double limit_commutator = 0.0;  ///< max over the battery of ||P T u - T P u||_m / ||u||_m
  bool preserved = false;         ///< limit_commutator <= 1e-9
};

PreservationVerdict invariance_preservation_check(const FormSequence& seq, const IndexSet& subset,
                                                  std::uint64_t seed = 20240917);

struct EmergentInvariance {
  double limit_commutator = 0.0;
  double min_term_commutator = 0.0;
  std::vector<double> term_commutators;
};

/// Operator norms of [1_Y, T_t], maximized over t in {0.5, 1}, for the limit
/// and every term.
EmergentInvariance emergent_invariance(const FormSequence& seq, const IndexSet& subset);

/// resolvent_convergence for the part forms on Y.
MoscoReport part_convergence_check(const FormSequence& seq, const IndexSet& subset, double beta,
                                   std::span<const Vector> test_vectors, double tol);

struct ApproxEntry {
  std::string family;  ///< "time" (exp(-s/t (1 - T_t))) or "resolvent" (exp(s beta (beta K_beta - 1)))
  double parameter = 0.0;
  double commutator = 0.0;  ///< max over s
};

struct ApproxInvarianceReport {
  bool invariant = false;  ///< structural verdict for the base form
  std::vector<ApproxEntry> entries;
  bool consistent = false;  ///< the approximating verdicts agree with the base verdict
};

ApproxInvarianceReport approx_invariance_check(const FiniteDirichletForm& form, const IndexSet& subset,
                                               std::span<const double> t_grid,
                                               std::span<const double> beta_grid);

struct ApproxSpaceEntry {
  std::string family;
  double parameter = 0.0;
  IndexSet conservative;
};

struct ApproxConservativeReport {
  IndexSet x_cons;
  std::vector<ApproxSpaceEntry> entries;
  bool all_equal = false;
  /// Part convergence of E^(t), t -> 0, on X_cons and on X_diss.
  std::optional<MoscoReport> conservative_part;
  std::optional<MoscoReport> dissipative_part;
  bool parts_converged = false;
};

ApproxConservativeReport approx_conservative_spaces(const FiniteDirichletForm& form,
                                                    std::span<const double> t_grid,
                                                    std::span<const double> beta_grid);

struct M1SpotCheck {
  std::vector<double> limit_energy;      ///< +inf outside the limit domain
  std::vector<double> last_term_energy;
  bool passed = false;
};

/// For monotone increasing sequences: the constant recovery sequence satisfies
/// liminf_k E^k[u] >= E^inf[u] - 1e-9; outside the limit domain the energies
/// must keep increasing.
M1SpotCheck m1_spot_check(const FormSequence& seq, std::span<const Vector> vectors);

// --- Example sequences -----------------------------------------------------

/// Path graph on grid_n nodes (odd), spacing h, killing k at the center node.
/// Limit: the killing-free path with the center constrained to zero.
FormSequence delta_example_sequence(std::size_t grid_n, double spacing_h,
                                    std::span<const double> couplings);

/// Path graph over [lo, hi] with spacing h (1/h integral), killing n at every
/// integer node. Limit: the killing-free path with integer nodes constrained.
FormSequence many_delta_sequence(int lo, int hi, double spacing_h, std::span<const double> couplings);

/// Vertex indices strictly between consecutive integers of a many_delta_sequence.
std::vector<IndexSet> integer_blocks(const FormSequence& seq);

/// Path graph with weights s/h and unit killing at the center, for
/// nonincreasing scalings s. Limit: weights limit_scaling/h with the same
/// killing (the point form u(center)^2 when limit_scaling = 0).
FormSequence vanishing_sequence(std::size_t grid_n, double spacing_h,
                                std::span<const double> scalings, double limit_scaling = 0.0);

}  // namespace dform
