#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dform/form.hpp"

namespace dform {

/// Connected components of the graph {(i, j) : w_ij > 0}, each sorted, ordered
/// by smallest vertex.
struct InvariantPartition {
  std::vector<IndexSet> components;

  /// component index of every vertex
  std::vector<std::size_t> labels(std::size_t n) const;
};

InvariantPartition detect_invariant_sets(const FiniteDirichletForm& form);

/// Operator norm of the commutator [1_Y, op] for an operator given in
/// symmetrized coordinates; equals the spectral norm of the block op[Y, Y^c].
double commutator_norm(const Matrix& symmetric_op, const IndexSet& subset);

/// Max over a vector battery of ||T_t(1_Y u) - 1_Y T_t u||_m / ||u||_m.
double semigroup_commutator_battery(const FiniteDirichletForm& form, const IndexSet& subset,
                                    std::span<const double> times, std::size_t vectors,
                                    std::uint64_t seed);

struct InvarianceVerdict {
  bool invariant = false;            ///< structural: no edge leaves Y
  double semigroup_residual = 0.0;   ///< max over t in {0.1, 1} of ||[1_Y, T_t]||
  double resolvent_residual = 0.0;   ///< ||[1_Y, K_1]||
  double indicator_residual = 0.0;   ///< ||T_1 1_Y - 1_Y T_1 1||_m
  bool numerics_agree = true;        ///< residuals <= 1e-10 iff invariant
};

InvarianceVerdict is_invariant(const FiniteDirichletForm& form, const IndexSet& subset);

/// Structural part of is_invariant alone: no edge joins Y to its complement.
bool structurally_invariant(const FiniteDirichletForm& form, const IndexSet& subset);

/// Restriction of a form to an invariant set Y (vertices relabeled in the
/// sorted order of Y). parent_size is the vertex count of the parent.
struct PartForm {
  IndexSet subset;
  FiniteDirichletForm form;
  std::size_t parent_size = 0;

  Vector restrict(const Vector& u) const;
  /// extension by zero to the parent space
  Vector extend(const Vector& v) const;
};

/// The sub-form on Y with weights and killing restricted, no invariance check.
FiniteDirichletForm restricted_form(const FiniteDirichletForm& form, const IndexSet& subset);

PartForm part_form(const FiniteDirichletForm& form, const IndexSet& subset);

/// Schur complement of the generator over Y^c, taken as the limit lambda -> 0
/// of L_YY - L_YB (L_BB + lambda M_B)^{-1} L_BY.
FiniteDirichletForm trace_form(const FiniteDirichletForm& form, const IndexSet& subset);

// --- Green operator ---------------------------------------------------------

struct GreenValue {
  bool finite = false;
  double value = 0.0;  ///< meaningful when finite
};

struct GreenSchedule {
  std::vector<double> checkpoints{1.0, 1e1, 1e2, 1e3, 1e4};
  /// Keep multiplying by `extension_factor` past the last checkpoint while a
  /// component is undecided, up to `max_n`.
  double extension_factor = 10.0;
  double max_n = 1e18;
  /// Evaluate every checkpoint up to max_n even after all components decide.
  bool exhaust = false;
};

struct GreenResult {
  std::vector<GreenValue> verdicts;        ///< per vertex
  std::vector<double> checkpoints;         ///< n values actually evaluated
  std::vector<Vector> partial_sums;        ///< S_n f at each checkpoint
  std::vector<Vector> resolvent_values;    ///< K_{1/n} f at each checkpoint
  std::vector<std::optional<Vector>> closed_form;  ///< A^{-1} f per killed component, in component vertex order
  std::vector<std::string> diagnostics;
};

GreenResult green_apply(const FiniteDirichletForm& form, const Vector& f,
                        const GreenSchedule& schedule = {});

// --- Classification --------------------------------------------------------

enum class ComponentClass { Recurrent, Dissipative, TransientConservative };

std::string_view to_string(ComponentClass c);

struct ClassificationReport {
  IndexSet x_rec, x_trans, x_cons, x_diss, x_tc;
  InvariantPartition partition;
  std::vector<ComponentClass> component_class;
  GreenResult green;
  Vector semigroup_one_t1;   ///< T_1 1
  Vector semigroup_one_t10;  ///< T_10 1
  double cons_max_defect = 0.0;   ///< max over X_cons, t in {1,10} of |T_t 1 - 1|
  double diss_min_defect = 0.0;   ///< min over X_diss of 1 - T_1 1 (0 if X_diss empty)
  std::vector<std::string> diagnostics;
};

/// rho defaults to the normalized constant 1 / m(X).
ClassificationReport classify(const FiniteDirichletForm& form,
                              const std::optional<Vector>& rho = std::nullopt);

struct Decomposition {
  PartForm recurrent;
  PartForm dissipative;
  PartForm transient_conservative;
  ClassificationReport report;
  bool parts_verified = false;  ///< each part re-classified to its declared class
};

Decomposition decompose(const FiniteDirichletForm& form);

/// E[u] - (E^rec[u|rec] + E^diss[u|diss] + E^tc[u|tc]), in exact arithmetic.
double decomposition_residual(const FiniteDirichletForm& form, const Decomposition& parts,
                              const Vector& u);

/// E[u] - E[1_Y u] - E[1_{Y^c} u], in exact arithmetic.
double additivity_residual(const FiniteDirichletForm& form, const IndexSet& subset,
                           const Vector& u);

bool maximality_check(const FiniteDirichletForm& form, const IndexSet& subset);

ComponentClass irreducible_trichotomy(const FiniteDirichletForm& form);

struct ExcessiveResiduals {
  std::vector<double> times;
  std::vector<double> residuals;  ///< ||T_t u - (1_cons u + 1_diss T_t u)||_inf
  double lower_bound_violation = 0.0;  ///< max of (1_cons u - T_T u)_+ at the largest time
  bool passed = false;
};

ExcessiveResiduals excessive_decomposition_check(const FiniteDirichletForm& form,
                                                 const Vector& u,
                                                 std::span<const double> t_grid);

IndexSet complement(const IndexSet& subset, std::size_t n);
Vector indicator(const IndexSet& subset, std::size_t n);

}  // namespace dform
