#include "risn/fractional.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace risn::frac {

namespace {

constexpr double kMaxCondition = 1e12;
constexpr double kOriginTolerance = 1e-10;

// Values and derivatives of P_0..P_deg at x.
void legendre_table(std::size_t deg, double x, std::vector<double>& p, std::vector<double>& dp) {
  p.assign(deg + 1, 0.0);
  dp.assign(deg + 1, 0.0);
  p[0] = 1.0;
  if (deg >= 1) {
    p[1] = x;
    dp[1] = 1.0;
  }
  for (std::size_t k = 2; k <= deg; ++k) {
    p[k] = ((2.0 * k - 1.0) * x * p[k - 1] - (k - 1.0) * p[k - 2]) / static_cast<double>(k);
    // P_k' = P_{k-2}' + (2k-1) P_{k-1}
    dp[k] = dp[k - 2] + (2.0 * k - 1.0) * p[k - 1];
  }
}

}  // namespace

double jacobi(std::size_t n, double a, double b, double x) {
  if (n == 0) return 1.0;
  double p0 = 1.0;
  double p1 = (a + 1.0) + 0.5 * (a + b + 2.0) * (x - 1.0);
  for (std::size_t k = 2; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double c = 2.0 * kk + a + b;
    const double a1 = 2.0 * kk * (kk + a + b) * (c - 2.0);
    const double a2 = (c - 1.0) * (a * a - b * b);
    const double a3 = (c - 2.0) * (c - 1.0) * c;
    const double a4 = 2.0 * (kk + a - 1.0) * (kk + b - 1.0) * c;
    const double pk = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
    p0 = p1;
    p1 = pk;
  }
  return p1;
}

std::size_t default_basis_degree(std::size_t n_points) { return std::min<std::size_t>(n_points - 1, 30); }

CaputoOperator build_caputo(double alpha, std::span<const double> points, std::optional<std::size_t> basis_degree) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("build_caputo: alpha must lie in (0, 1]");
  const std::size_t n = points.size();
  if (n < 2) throw std::invalid_argument("build_caputo: need at least two points");
  for (std::size_t i = 0; i < n; ++i) {
    if (points[i] < 0.0) throw std::invalid_argument("build_caputo: points must be non-negative");
    if (i > 0 && points[i] == points[i - 1]) {
      throw std::invalid_argument("build_caputo: duplicate point " + std::to_string(points[i]));
    }
    if (i > 0 && points[i] < points[i - 1]) throw std::invalid_argument("build_caputo: points must be sorted");
  }
  const std::size_t deg = basis_degree.value_or(default_basis_degree(n));
  if (deg > n - 1) throw std::invalid_argument("build_caputo: basis_degree must not exceed N-1");

  const double b = points.back();
  const double mu = 1.0 - alpha;
  const double jacobian = std::pow(2.0 / b, alpha);

  // Gamma(k+1)/Gamma(k+1+mu) for the fractional integral of P_k.
  std::vector<double> ratio(deg + 1);
  for (std::size_t k = 0; k <= deg; ++k) {
    ratio[k] = std::exp(std::lgamma(k + 1.0) - std::lgamma(k + 1.0 + mu));
  }

  Eigen::MatrixXd basis(n, deg + 1), caputo(n, deg + 1);
  std::vector<double> p, dp, ip(deg + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = 2.0 * points[i] / b - 1.0;
    legendre_table(deg, xi, p, dp);
    for (std::size_t j = 0; j <= deg; ++j) basis(i, j) = p[j];

    if (alpha == 1.0) {
      for (std::size_t j = 0; j <= deg; ++j) caputo(i, j) = jacobian * dp[j];
      continue;
    }
    if (points[i] < kOriginTolerance) {
      caputo.row(i).setZero();
      continue;
    }
    const double weight = std::pow(1.0 + xi, mu);
    for (std::size_t k = 0; k <= deg; ++k) ip[k] = ratio[k] * weight * jacobi(k, -mu, mu, xi);
    // P_j' = sum over k = j-1, j-3, ... of (2k+1) P_k.
    for (std::size_t j = 0; j <= deg; ++j) {
      double acc = 0.0;
      for (std::size_t k = j % 2 == 0 ? 1 : 0; k < j; k += 2) acc += (2.0 * k + 1.0) * ip[k];
      caputo(i, j) = jacobian * acc;
    }
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cond = s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : INFINITY;
  if (!(cond <= kMaxCondition)) {
    throw std::runtime_error("build_caputo: basis matrix is ill-conditioned (condition " + std::to_string(cond) +
                             "); lower basis_degree");
  }
  const Eigen::MatrixXd pinv = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
  const Eigen::MatrixXd m = caputo * pinv;

  CaputoOperator op;
  op.alpha = alpha;
  op.points.assign(points.begin(), points.end());
  op.basis_degree = deg;
  op.condition = cond;
  op.matrix = ad::Tensor(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) op.matrix(i, j) = m(i, j);
  return op;
}

std::vector<double> CaputoOperator::apply(std::span<const double> u) const {
  if (u.size() != points.size()) throw std::invalid_argument("CaputoOperator::apply: length mismatch");
  std::vector<double> out(u.size(), 0.0);
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < u.size(); ++j) out[i] += matrix(i, j) * u[j];
  return out;
}

ad::Var CaputoOperator::apply(const ad::Var& u) const {
  if (u.rows() != points.size() || u.cols() != 1) {
    throw std::invalid_argument("CaputoOperator::apply: expected " + std::to_string(points.size()) + "x1 input");
  }
  return ad::matmul(ad::constant_like(u, matrix), u);
}

}  // namespace risn::frac
