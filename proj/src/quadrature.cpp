#include "risn/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace risn::quad {

namespace {

struct Legendre {
  double value;
  double derivative;
};

Legendre legendre(std::size_t n, double x) {
  double p0 = 1.0, p1 = x;
  for (std::size_t k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
    p0 = p1;
    p1 = pk;
  }
  const double pn = n == 0 ? 1.0 : p1;
  const double pn1 = n == 0 ? 0.0 : p0;
  return {pn, static_cast<double>(n) * (x * pn - pn1) / (x * x - 1.0)};
}

QuadratureRule compute_rule(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t k = 0; k < half; ++k) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(k) + 0.75) / (static_cast<double>(n) + 0.5));
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = legendre(n, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-15) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw std::runtime_error("gauss_legendre: Newton iteration did not converge for node " + std::to_string(k) +
                               " of n=" + std::to_string(n));
    }
    if (2 * k + 1 == n) x = 0.0;
    const double dp = legendre(n, x).derivative;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[k] = -x;
    rule.nodes[n - 1 - k] = x;
    rule.weights[k] = w;
    rule.weights[n - 1 - k] = w;
  }
  return rule;
}

}  // namespace

QuadratureRule gauss_legendre(std::size_t n) {
  if (n < 1 || n > kMaxOrder) {
    throw std::invalid_argument("gauss_legendre: order must be in [1, " + std::to_string(kMaxOrder) + "], got " +
                                std::to_string(n));
  }
  static std::mutex mutex;
  static std::map<std::size_t, QuadratureRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_rule(n)).first;
  return it->second;
}

MappedRule map_affine(const QuadratureRule& rule, double a, double b) {
  if (!(a < b)) throw std::invalid_argument("map_affine: requires a < b");
  MappedRule out;
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  out.points.reserve(rule.order());
  out.weights.reserve(rule.order());
  for (std::size_t k = 0; k < rule.order(); ++k) {
    out.points.push_back(half * rule.nodes[k] + mid);
    out.weights.push_back(half * rule.weights[k]);
  }
  return out;
}

MappedRule map_volterra(const QuadratureRule& rule, std::span<const double> x, double lower) {
  MappedRule out;
  out.blocks = x.size();
  out.points.reserve(x.size() * rule.order());
  out.weights.reserve(x.size() * rule.order());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lower) {
      throw std::invalid_argument("map_volterra: collocation point " + std::to_string(x[i]) +
                                  " lies below the lower limit " + std::to_string(lower));
    }
    const double half = 0.5 * (x[i] - lower), mid = 0.5 * (x[i] + lower);
    for (std::size_t k = 0; k < rule.order(); ++k) {
      out.points.push_back(half * rule.nodes[k] + mid);
      out.weights.push_back(half * rule.weights[k]);
    }
  }
  if (x.empty()) out.blocks = 1;
  return out;
}

MappedRule tensor_product(std::span<const MappedRule> axes) {
  if (axes.empty() || axes.size() > 3) throw std::invalid_argument("tensor_product: supports 1 to 3 axes");
  std::size_t blocks = 1;
  for (const auto& ax : axes) {
    if (ax.dims != 1) throw std::invalid_argument("tensor_product: inputs must be single-axis rules");
    if (ax.blocks > 1) {
      if (blocks > 1 && blocks != ax.blocks) throw std::invalid_argument("tensor_product: block counts differ");
      blocks = ax.blocks;
    }
  }
  MappedRule out;
  out.blocks = blocks;
  out.dims = axes.size();
  std::size_t per_block = 1;
  for (const auto& ax : axes) per_block *= ax.block_size();
  out.points.reserve(blocks * per_block * out.dims);
  out.weights.reserve(blocks * per_block);
  std::vector<std::size_t> idx(axes.size());
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t flat = 0; flat < per_block; ++flat) {
      std::size_t rem = flat;
      for (std::size_t a = axes.size(); a-- > 0;) {
        idx[a] = rem % axes[a].block_size();
        rem /= axes[a].block_size();
      }
      double w = 1.0;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const std::size_t blk = axes[a].blocks > 1 ? b : 0;
        out.points.push_back(axes[a].point(blk, idx[a]));
        w *= axes[a].weight(blk, idx[a]);
      }
      out.weights.push_back(w);
    }
  }
  return out;
}

std::vector<double> integrate_blocks(const MappedRule& rule, std::span<const double> f) {
  if (f.size() != rule.weights.size()) throw std::invalid_argument("integrate_blocks: sample count mismatch");
  std::vector<double> out(rule.blocks, 0.0);
  const std::size_t m = rule.block_size();
  for (std::size_t b = 0; b < rule.blocks; ++b)
    for (std::size_t k = 0; k < m; ++k) out[b] += rule.weights[b * m + k] * f[b * m + k];
  return out;
}

double gamma(double x) {
  if (x <= 0.0 && std::floor(x) == x) {
    throw std::domain_error("gamma: pole at non-positive integer " + std::to_string(x));
  }
  return std::tgamma(x);
}

}  // namespace risn::quad
