#include "dform/kernels.hpp"

#include <omp.h>

#include <vector>

namespace dform::kernels {

namespace {

inline double edge_term(const Edge& e, const Vector& u) {
  const double d = u[static_cast<Eigen::Index>(e.i)] - u[static_cast<Eigen::Index>(e.j)];
  return e.weight * d * d;
}

inline double killing_term(double k, double x) { return k * x * x; }

}  // namespace

void spectral_apply_serial(const Matrix& q, const Vector& sqrt_m, const Vector& g,
                           const Vector& u, Vector& out) {
  const Eigen::Index n = q.rows();
  std::vector<double> coeff(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index k = 0; k < n; ++k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += q(i, k) * sqrt_m[i] * u[i];
    coeff[static_cast<std::size_t>(k)] = g[k] * s;
  }
  out.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += q(i, k) * coeff[static_cast<std::size_t>(k)];
    out[i] = s / sqrt_m[i];
  }
}

void spectral_apply_parallel(const Matrix& q, const Vector& sqrt_m, const Vector& g,
                             const Vector& u, Vector& out) {
  const Eigen::Index n = q.rows();
  std::vector<double> coeff(static_cast<std::size_t>(n), 0.0);
  // Same per-entry summation order as the serial kernel, so results match bitwise.
#pragma omp parallel for schedule(static) if (n > 64)
  for (Eigen::Index k = 0; k < n; ++k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += q(i, k) * sqrt_m[i] * u[i];
    coeff[static_cast<std::size_t>(k)] = g[k] * s;
  }
  out.resize(n);
#pragma omp parallel for schedule(static) if (n > 64)
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) s += q(i, k) * coeff[static_cast<std::size_t>(k)];
    out[i] = s / sqrt_m[i];
  }
}

void spectral_operator_serial(const Matrix& q, const Vector& g, Matrix& out) {
  const Eigen::Index n = q.rows();
  out.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) s += q(i, k) * g[k] * q(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
}

void spectral_operator_parallel(const Matrix& q, const Vector& g, Matrix& out) {
  const Eigen::Index n = q.rows();
  out.resize(n, n);
#pragma omp parallel for schedule(dynamic, 4) if (n > 32)
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) s += q(i, k) * g[k] * q(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
}

double energy_serial(std::span<const Edge> edges, const Vector& killing, const Vector& u) {
  ExactSum acc;
  for (const Edge& e : edges) acc.add(edge_term(e, u));
  for (Eigen::Index i = 0; i < killing.size(); ++i) acc.add(killing_term(killing[i], u[i]));
  return acc.value();
}

double energy_parallel(std::span<const Edge> edges, const Vector& killing, const Vector& u) {
  const auto n_edges = static_cast<std::ptrdiff_t>(edges.size());
  const Eigen::Index n = killing.size();
  if (n_edges + n < 4096) return energy_serial(edges, killing, u);

  const int threads = omp_get_max_threads();
  std::vector<ExactSum> partial(static_cast<std::size_t>(threads));
#pragma omp parallel
  {
    ExactSum& acc = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t e = 0; e < n_edges; ++e) acc.add(edge_term(edges[static_cast<std::size_t>(e)], u));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) acc.add(killing_term(killing[i], u[i]));
  }
  ExactSum total;
  for (const ExactSum& p : partial) total.merge(p);
  return total.value();
}

}  // namespace dform::kernels
