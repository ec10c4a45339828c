#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "risn/autodiff/tape.hpp"

namespace risn::frac {

/// Operational matrix for the Caputo derivative of order alpha in (0, 1]
/// with base point 0, acting on samples at fixed collocation points.
///
/// The samples are fitted (least squares) by Legendre polynomials on
/// [0, b], b = last point; the matrix returns the exact Caputo derivative of
/// that fit. Fractional derivatives of the basis use the closed form for
/// fractional integrals of Legendre polynomials,
///   I^mu P_k(xi) = k!/Gamma(k+1+mu) (1+xi)^mu P_k^(-mu,mu)(xi),
/// applied to P_n' expanded in lower-degree Legendre polynomials, which
/// avoids the cancellation of a monomial expansion.
struct CaputoOperator {
  double alpha = 1.0;
  std::vector<double> points;
  std::size_t basis_degree = 0;
  ad::Tensor matrix;  // N x N
  double condition = 1.0;

  std::vector<double> apply(std::span<const double> u) const;
  /// u is N x 1; the matrix enters the tape as a constant.
  ad::Var apply(const ad::Var& u) const;
};

std::size_t default_basis_degree(std::size_t n_points);

/// Throws std::invalid_argument for alpha outside (0, 1], unsorted,
/// duplicate or negative points, or a degree above N-1; throws
/// std::runtime_error when the basis matrix condition number exceeds 1e12.
CaputoOperator build_caputo(double alpha, std::span<const double> points,
                            std::optional<std::size_t> basis_degree = std::nullopt);

/// Jacobi polynomial P_n^(a,b)(x) by three-term recurrence.
double jacobi(std::size_t n, double a, double b, double x);

}  // namespace risn::frac
