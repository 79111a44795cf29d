#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference and an
// OpenMP variant; the library calls the OpenMP variant, tests pin the two
// against each other and bench/ compares their throughput.

#include <span>

#include "dform/form.hpp"

namespace dform::kernels {

/// out = M^{-1/2} Q diag(g) Q^T M^{1/2} u
void spectral_apply_serial(const Matrix& q, const Vector& sqrt_m, const Vector& g,
                           const Vector& u, Vector& out);
void spectral_apply_parallel(const Matrix& q, const Vector& sqrt_m, const Vector& g,
                             const Vector& u, Vector& out);

/// out = Q diag(g) Q^T
void spectral_operator_serial(const Matrix& q, const Vector& g, Matrix& out);
void spectral_operator_parallel(const Matrix& q, const Vector& g, Matrix& out);

/// sum_edges w (u_i - u_j)^2 + sum_i k_i u_i^2, correctly rounded. Both
/// variants return bit-identical results.
double energy_serial(std::span<const Edge> edges, const Vector& killing, const Vector& u);
double energy_parallel(std::span<const Edge> edges, const Vector& killing, const Vector& u);

}  // namespace dform::kernels
