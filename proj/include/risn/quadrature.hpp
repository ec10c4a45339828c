#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace risn::quad {

/// Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;    // strictly increasing, symmetric about 0
  std::vector<double> weights;  // positive, summing to 2
  std::size_t order() const { return nodes.size(); }
};

/// Quadrature points in a target region, grouped into blocks. Fredholm maps
/// have a single block shared by every collocation point; Volterra maps have
/// one block per collocation point (block i covers [lower, x_i]).
struct MappedRule {
  std::size_t blocks = 1;
  std::size_t dims = 1;
  std::vector<double> points;   // blocks x block_size x dims, row-major
  std::vector<double> weights;  // blocks x block_size

  std::size_t block_size() const { return weights.size() / blocks; }
  double point(std::size_t block, std::size_t k, std::size_t axis = 0) const {
    return points[(block * block_size() + k) * dims + axis];
  }
  double weight(std::size_t block, std::size_t k) const { return weights[block * block_size() + k]; }
};

inline constexpr std::size_t kMaxOrder = 512;

/// Nodes are roots of P_n found by Newton iteration from Chebyshev-type
/// initial guesses; rules are memoized per n.
QuadratureRule gauss_legendre(std::size_t n);

MappedRule map_affine(const QuadratureRule& rule, double a, double b);

/// Block i maps the rule onto [lower, x[i]]; x[i] == lower gives a block of
/// zero weights.
MappedRule map_volterra(const QuadratureRule& rule, std::span<const double> x, double lower = 0.0);

/// Cartesian product of 1-3 single-axis rules. Every blocked (Volterra) input
/// must have the same block count, and block i of the result pairs block i
/// of each blocked axis with the shared block of each Fredholm axis.
MappedRule tensor_product(std::span<const MappedRule> axes);

/// Integrates samples `f` laid out like rule.points, one sum per block.
std::vector<double> integrate_blocks(const MappedRule& rule, std::span<const double> f);

/// Gamma function; throws std::domain_error at the poles 0, -1, -2, ...
double gamma(double x);

}  // namespace risn::quad
