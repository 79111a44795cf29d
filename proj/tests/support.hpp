#pragma once

// Random instance generators and brute-force oracles shared by the unit tests
// and the acceptance binary. The oracles work on the dense, non-symmetrized
// generator A = M^{-1} L with Eigen's matrix exponential and LU solves, so
// they share no code path with the library's spectral core.

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "dform/form.hpp"
#include "dform/invariance.hpp"
#include "dform/mosco.hpp"

namespace dform::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline Vector random_vector(Rng& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v;
}

/// Connected block on vertices [offset, offset + size): a random spanning
/// tree plus extra edges with probability `density`.
inline void add_connected_block(Rng& rng, std::size_t offset, std::size_t size, double density,
                                std::vector<Edge>& edges) {
  for (std::size_t v = 1; v < size; ++v) {
    const std::size_t parent = pick(rng, 0, v - 1);
    edges.push_back({offset + parent, offset + v, uniform(rng, 0.2, 3.0)});
  }
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = i + 1; j < size; ++j) {
      const bool tree_edge = std::any_of(edges.begin(), edges.end(), [&](const Edge& e) {
        return (e.i == offset + i && e.j == offset + j) || (e.i == offset + j && e.j == offset + i);
      });
      if (!tree_edge && uniform(rng, 0.0, 1.0) < density) edges.push_back({offset + i, offset + j, uniform(rng, 0.2, 3.0)});
    }
}

inline Vector random_measure(Rng& rng, std::size_t n) {
  Vector m(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = uniform(rng, 0.5, 2.0);
  return m;
}

/// Random form with random sparsity (possibly disconnected) and random killing.
inline FiniteDirichletForm random_form(Rng& rng, std::size_t n) {
  const double density = uniform(rng, 0.05, 0.6);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (uniform(rng, 0.0, 1.0) < density) edges.push_back({i, j, uniform(rng, 0.1, 3.0)});
  Vector k = Vector::Zero(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < k.size(); ++i)
    if (uniform(rng, 0.0, 1.0) < 0.3) k[i] = uniform(rng, 0.05, 2.0);
  return FiniteDirichletForm::from_edges(n, std::move(edges), k, random_measure(rng, n));
}

struct MixedForm {
  FiniteDirichletForm form;
  IndexSet conservative;  ///< union of killing-free components
  IndexSet killed;        ///< union of components with killing
};

/// Several connected components, each killing-free or killed, vertices shuffled.
inline MixedForm random_mixed_form(Rng& rng, std::size_t components, std::size_t max_block) {
  std::vector<Edge> edges;
  std::vector<bool> killed_vertex;
  std::vector<double> killing;
  std::size_t n = 0;
  for (std::size_t c = 0; c < components; ++c) {
    const std::size_t size = pick(rng, 1, max_block);
    add_connected_block(rng, n, size, uniform(rng, 0.1, 0.6), edges);
    // alternate so every instance has both kinds when components >= 2
    const bool killed = c % 2 == 1;
    const std::size_t victim = pick(rng, 0, size - 1);
    for (std::size_t v = 0; v < size; ++v) {
      killed_vertex.push_back(killed);
      killing.push_back(killed && (v == victim || uniform(rng, 0.0, 1.0) < 0.3) ? uniform(rng, 0.1, 2.0) : 0.0);
    }
    n += size;
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Edge& e : edges) e = {perm[e.i], perm[e.j], e.weight};
  Vector k = Vector::Zero(static_cast<Eigen::Index>(n));
  IndexSet conservative, killed;
  for (std::size_t v = 0; v < n; ++v) {
    k[static_cast<Eigen::Index>(perm[v])] = killing[v];
    (killed_vertex[v] ? killed : conservative).push_back(perm[v]);
  }
  std::sort(conservative.begin(), conservative.end());
  std::sort(killed.begin(), killed.end());
  auto form = FiniteDirichletForm::from_edges(n, std::move(edges), k, random_measure(rng, n));
  return MixedForm{std::move(form), std::move(conservative), std::move(killed)};
}

/// Path graph 0 - 1 - ... - (n-1) with unit weights.
inline FiniteDirichletForm path_form(std::size_t n, const Vector& killing) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, 1.0});
  return FiniteDirichletForm::from_edges(n, std::move(edges), killing, Vector::Ones(static_cast<Eigen::Index>(n)));
}

inline FiniteDirichletForm two_node(double k0 = 0.0, double k1 = 0.0) {
  return FiniteDirichletForm::from_edges(2, {{0, 1, 1.0}}, Vector{{k0, k1}}, Vector::Ones(2));
}

// --- dense oracles ------------------------------------------------------------

inline Matrix dense_generator(const FiniteDirichletForm& form) {
  Matrix a = form.generator_matrix();
  for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) /= form.measure()[i];
  return a;
}

inline Matrix oracle_semigroup(const FiniteDirichletForm& form, double t) {
  const Matrix scaled = -t * dense_generator(form);
  return scaled.exp();
}

inline Vector oracle_resolvent(const FiniteDirichletForm& form, double beta, const Vector& u) {
  const auto n = static_cast<Eigen::Index>(form.size());
  const Matrix b = beta * Matrix::Identity(n, n) + dense_generator(form);
  return b.fullPivLu().solve(u);
}

/// Direct double sum of the energy, independent of the library kernels.
inline double oracle_energy(const FiniteDirichletForm& form, const Vector& u) {
  const Matrix w = form.weight_matrix();
  double e = 0.0;
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    for (Eigen::Index j = 0; j < w.cols(); ++j) e += 0.5 * w(i, j) * (u[i] - u[j]) * (u[i] - u[j]);
    e += form.killing()[i] * u[i] * u[i];
  }
  return e;
}

inline double m_norm_of(const FiniteDirichletForm& form, const Vector& u) {
  return std::sqrt((u.array().square() * form.measure().array()).sum());
}

// Two components whose weights grow with k; the limit uses the final weights.
inline FormSequence two_component_sequence(Rng& rng, std::size_t terms, IndexSet& first) {
  const std::size_t na = pick(rng, 2, 6), nb = pick(rng, 2, 6);
  std::vector<Edge> base;
  add_connected_block(rng, 0, na, 0.4, base);
  add_connected_block(rng, na, nb, 0.4, base);
  const std::size_t n = na + nb;
  Vector k = Vector::Zero(static_cast<Eigen::Index>(n));
  k[static_cast<Eigen::Index>(na)] = 0.5;
  const Vector m = random_measure(rng, n);
  std::vector<FiniteDirichletForm> list;
  std::vector<double> couplings;
  auto scaled = [&](double factor) {
    std::vector<Edge> edges = base;
    for (Edge& e : edges) e.weight *= factor;
    return FiniteDirichletForm::from_edges(n, edges, k, m);
  };
  for (std::size_t j = 1; j <= terms; ++j) {
    const double c = std::pow(10.0, static_cast<double>(j));
    list.push_back(scaled(1.0 - 1.0 / c));
    couplings.push_back(c);
  }
  first.clear();
  for (std::size_t i = 0; i < na; ++i) first.push_back(i);
  return FormSequence::make(std::move(list), std::move(couplings), WideSenseForm(scaled(1.0)), Monotonicity::Increasing);
}


}  // namespace dform::testing
