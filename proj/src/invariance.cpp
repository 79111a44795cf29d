#include "dform/invariance.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace dform {

namespace {

IndexSet normalized_subset(const IndexSet& subset, std::size_t n) {
  IndexSet out = subset;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (!out.empty() && out.back() >= n) {
    std::ostringstream msg;
    msg << "vertex " << out.back() << " outside [0, " << n << ")";
    throw Error(ErrorCode::IndexOutOfRange, msg.str());
  }
  return out;
}

std::vector<bool> membership(const IndexSet& subset, std::size_t n) {
  std::vector<bool> in(n, false);
  for (std::size_t v : subset) in[v] = true;
  return in;
}

bool has_cross_edge(const FiniteDirichletForm& form, const std::vector<bool>& in) {
  return std::any_of(form.edges().begin(), form.edges().end(),
                     [&](const Edge& e) { return in[e.i] != in[e.j]; });
}

Matrix block(const Matrix& m, const IndexSet& rows, const IndexSet& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          m(static_cast<Eigen::Index>(rows[r]), static_cast<Eigen::Index>(cols[c]));
  return out;
}

Vector gather(const Vector& v, const IndexSet& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k)
    out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(idx[k])];
  return out;
}

}  // namespace

IndexSet complement(const IndexSet& subset, std::size_t n) {
  const auto in = membership(normalized_subset(subset, n), n);
  IndexSet out;
  for (std::size_t v = 0; v < n; ++v)
    if (!in[v]) out.push_back(v);
  return out;
}

Vector indicator(const IndexSet& subset, std::size_t n) {
  Vector out = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t v : normalized_subset(subset, n)) out[static_cast<Eigen::Index>(v)] = 1.0;
  return out;
}

std::vector<std::size_t> InvariantPartition::labels(std::size_t n) const {
  std::vector<std::size_t> out(n, 0);
  for (std::size_t c = 0; c < components.size(); ++c)
    for (std::size_t v : components[c]) out[v] = c;
  return out;
}

InvariantPartition detect_invariant_sets(const FiniteDirichletForm& form) {
  const std::size_t n = form.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  };
  for (const Edge& e : form.edges()) {
    const std::size_t a = find(e.i);
    const std::size_t b = find(e.j);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  InvariantPartition partition;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t root = find(v);
    if (slot[root] == n) {
      slot[root] = partition.components.size();
      partition.components.emplace_back();
    }
    partition.components[slot[root]].push_back(v);
  }
  return partition;
}

double commutator_norm(const Matrix& symmetric_op, const IndexSet& subset) {
  const auto n = static_cast<std::size_t>(symmetric_op.rows());
  const IndexSet y = normalized_subset(subset, n);
  const IndexSet yc = complement(y, n);
  if (y.empty() || yc.empty()) return 0.0;
  const Matrix b = block(symmetric_op, y, yc);
  Eigen::BDCSVD<Matrix> svd(b);
  return svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
}

double semigroup_commutator_battery(const FiniteDirichletForm& form, const IndexSet& subset,
                                    std::span<const double> times, std::size_t vectors,
                                    std::uint64_t seed) {
  const std::size_t n = form.size();
  const Vector one_y = indicator(subset, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (std::size_t k = 0; k < vectors; ++k) {
    Vector u(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
    const double norm = m_norm(form, u);
    if (norm == 0.0) continue;
    for (double t : times) {
      const Vector lhs = semigroup_apply(form, t, one_y.cwiseProduct(u)).values();
      const Vector rhs = one_y.cwiseProduct(semigroup_apply(form, t, u).values());
      worst = std::max(worst, m_norm(form, lhs - rhs) / norm);
    }
  }
  return worst;
}

InvarianceVerdict is_invariant(const FiniteDirichletForm& form, const IndexSet& subset) {
  const std::size_t n = form.size();
  const IndexSet y = normalized_subset(subset, n);
  InvarianceVerdict verdict;
  verdict.invariant = !has_cross_edge(form, membership(y, n));

  const SpectralCore& core = form.spectral();
  if (n > 0) {
    for (double t : {0.1, 1.0}) {
      const Matrix op = core.symmetric_operator(
          core.multipliers([t](double lambda) { return std::exp(-t * lambda); }));
      verdict.semigroup_residual = std::max(verdict.semigroup_residual, commutator_norm(op, y));
    }
    const Matrix res =
        core.symmetric_operator(core.multipliers([](double lambda) { return 1.0 / (1.0 + lambda); }));
    verdict.resolvent_residual = commutator_norm(res, y);
    const Vector one_y = indicator(y, n);
    const Vector lhs = semigroup_apply(form, 1.0, one_y).values();
    const Vector rhs = one_y.cwiseProduct(semigroup_apply(form, 1.0, Vector::Ones(static_cast<Eigen::Index>(n))).values());
    verdict.indicator_residual = m_norm(form, lhs - rhs);
  }
  constexpr double tol = 1e-10;
  const bool small = verdict.semigroup_residual <= tol && verdict.resolvent_residual <= tol;
  verdict.numerics_agree = verdict.invariant ? small : verdict.semigroup_residual > tol;
  return verdict;
}

bool structurally_invariant(const FiniteDirichletForm& form, const IndexSet& subset) {
  const IndexSet y = normalized_subset(subset, form.size());
  return !has_cross_edge(form, membership(y, form.size()));
}

Vector PartForm::restrict(const Vector& u) const {
  if (static_cast<std::size_t>(u.size()) != parent_size) {
    throw Error(ErrorCode::DimensionMismatch, "vector does not live on the parent space");
  }
  return gather(u, subset);
}

Vector PartForm::extend(const Vector& v) const {
  if (static_cast<std::size_t>(v.size()) != subset.size()) {
    throw Error(ErrorCode::DimensionMismatch, "vector does not live on the part");
  }
  Vector out = Vector::Zero(static_cast<Eigen::Index>(parent_size));
  for (std::size_t k = 0; k < subset.size(); ++k)
    out[static_cast<Eigen::Index>(subset[k])] = v[static_cast<Eigen::Index>(k)];
  return out;
}

FiniteDirichletForm restricted_form(const FiniteDirichletForm& form, const IndexSet& subset) {
  const std::size_t n = form.size();
  const IndexSet y = normalized_subset(subset, n);
  std::vector<std::size_t> local(n, n);
  for (std::size_t k = 0; k < y.size(); ++k) local[y[k]] = k;
  std::vector<Edge> edges;
  for (const Edge& e : form.edges()) {
    if (local[e.i] < n && local[e.j] < n) edges.push_back({local[e.i], local[e.j], e.weight});
  }
  return FiniteDirichletForm::from_edges(y.size(), std::move(edges), gather(form.killing(), y),
                                         gather(form.measure(), y));
}

PartForm part_form(const FiniteDirichletForm& form, const IndexSet& subset) {
  const std::size_t n = form.size();
  const IndexSet y = normalized_subset(subset, n);
  if (has_cross_edge(form, membership(y, n))) {
    throw Error(ErrorCode::NotInvariant, "an edge joins the subset to its complement");
  }
  return PartForm{y, restricted_form(form, y), n};
}

FiniteDirichletForm trace_form(const FiniteDirichletForm& form, const IndexSet& subset) {
  const std::size_t n = form.size();
  const IndexSet y = normalized_subset(subset, n);
  if (y.empty()) throw Error(ErrorCode::EmptySubset, "trace onto the empty set");

  // Only the part of Y^c sharing a component with Y contributes; on that part
  // L_BB is nonsingular because every vertex reaches Y.
  const InvariantPartition partition = detect_invariant_sets(form);
  const auto label = partition.labels(n);
  const auto in_y = membership(y, n);
  std::vector<bool> touches(partition.components.size(), false);
  for (std::size_t v : y) touches[label[v]] = true;
  IndexSet b;
  for (std::size_t v = 0; v < n; ++v)
    if (!in_y[v] && touches[label[v]]) b.push_back(v);

  FiniteDirichletForm part = restricted_form(form, y);
  if (b.empty()) return part;

  const Matrix l = form.generator_matrix();
  const Matrix l_bb = block(l, b, b);
  const Matrix l_by = block(l, b, y);
  const Vector k_b = gather(form.killing(), b);
  const Vector m_b = gather(form.measure(), b);
  const Vector k_y = gather(form.killing(), y);

  // correction C = L_YB (L_BB + lambda M_B)^{-1} L_BY (entrywise >= 0) and the
  // trace killing k_Y + (-L_YB)(L_BB + lambda M_B)^{-1}(k_B + lambda M_B 1),
  // a sum of nonnegative terms.
  struct Schur {
    Matrix correction;
    Vector killing;
  };
  auto schur = [&](double lambda) {
    Matrix reg = l_bb;
    reg.diagonal() += lambda * m_b;
    Eigen::LDLT<Matrix> ldlt(reg);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw Error(ErrorCode::NonStabilizingLimit, "regularized complement block is singular");
    }
    const Matrix x = ldlt.solve(l_by);
    Matrix c = l_by.transpose() * x;
    c = 0.5 * (c + c.transpose());
    const Vector rhs = k_b + lambda * m_b;
    const Vector kill = k_y + (-l_by.transpose()) * ldlt.solve(rhs);
    return Schur{c, kill};
  };

  const Schur s6 = schur(1e-6);
  const Schur s9 = schur(1e-9);
  const Schur s12 = schur(1e-12);
  const double scale = std::max({1.0, s12.correction.cwiseAbs().maxCoeff(), s12.killing.cwiseAbs().maxCoeff()});
  const double drift = std::max((s9.correction - s12.correction).cwiseAbs().maxCoeff(),
                                (s9.killing - s12.killing).cwiseAbs().maxCoeff());
  if (drift > 1e-8 * scale) {
    std::ostringstream msg;
    msg << "Schur complement moved by " << drift << " between lambda = 1e-9 and 1e-12 (lambda = 1e-6 gave "
        << (s6.correction - s12.correction).cwiseAbs().maxCoeff() << ")";
    throw Error(ErrorCode::NonStabilizingLimit, msg.str());
  }
  // Stabilized: the lambda = 0 complement exists and is the limit.
  const Schur limit = schur(0.0);

  const auto ny = static_cast<Eigen::Index>(y.size());
  Matrix w = part.weight_matrix();
  for (Eigen::Index i = 0; i < ny; ++i) {
    for (Eigen::Index j = i + 1; j < ny; ++j) {
      const double add = std::max(0.0, limit.correction(i, j));
      w(i, j) += add;
      w(j, i) = w(i, j);
    }
  }
  return FiniteDirichletForm::from_dense(w, limit.killing.cwiseMax(0.0), part.measure());
}

}  // namespace dform
