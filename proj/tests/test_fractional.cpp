#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "risn/fractional.hpp"
#include "risn/network.hpp"

using namespace risn;

namespace {

std::vector<double> grid(std::size_t n, double b = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b * static_cast<double>(i) / static_cast<double>(n - 1);
  return x;
}

std::vector<double> sample(const std::vector<double>& x, double (*f)(double)) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = f(x[i]);
  return v;
}

// D^alpha x^k for the Caputo derivative with base point 0.
double caputo_monomial(double alpha, int k, double x) {
  return std::tgamma(k + 1.0) / std::tgamma(k + 1.0 - alpha) * std::pow(x, k - alpha);
}

}  // namespace

TEST_CASE("Jacobi polynomials reduce to Legendre for a = b = 0") {
  for (double x : {-0.9, -0.2, 0.0, 0.5, 1.0}) {
    CHECK(frac::jacobi(2, 0, 0, x) == doctest::Approx(0.5 * (3 * x * x - 1)).epsilon(1e-14));
    CHECK(frac::jacobi(3, 0, 0, x) == doctest::Approx(0.5 * (5 * x * x * x - 3 * x)).epsilon(1e-14));
  }
  // P_1^(a,b)(x) = (a+1) + (a+b+2)(x-1)/2
  CHECK(frac::jacobi(1, -0.25, 0.25, 0.3) == doctest::Approx(0.75 + (0.3 - 1.0)).epsilon(1e-15));
}

TEST_CASE("monomial oracle for k in 1..4 and alpha in {0.25, 0.5, 0.75, 1}") {
  const auto x = grid(50);
  for (double alpha : {0.25, 0.5, 0.75, 1.0}) {
    auto op = frac::build_caputo(alpha, x);
    for (int k = 1; k <= 4; ++k) {
      CAPTURE(alpha);
      CAPTURE(k);
      std::vector<double> u(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) u[i] = std::pow(x[i], k);
      auto d = op.apply(u);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0.1) continue;
        CHECK(oracle::rel_err(d[i], caputo_monomial(alpha, k, x[i])) <= 1e-5);
      }
    }
  }
}

TEST_CASE("cubic at alpha = 0.75 and linear at alpha = 0.5") {
  const auto x = grid(50);
  auto op = frac::build_caputo(0.75, x);
  auto d = op.apply(sample(x, [](double t) { return t * t * t; }));
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    CHECK(oracle::rel_err(d[i], 6.0 * std::pow(x[i], 2.25) / std::tgamma(3.25)) <= 1e-6);
  }
  auto half = frac::build_caputo(0.5, x);
  auto dl = half.apply(x);
  for (std::size_t i = 1; i < x.size(); ++i) {
    CHECK(oracle::rel_err(dl[i], 2.0 * std::sqrt(x[i] / std::numbers::pi)) <= 1e-6);
  }
}

TEST_CASE("constants map to zero, zero maps to zero, and apply is linear") {
  const auto x = grid(50, 2.0);
  for (double alpha : {0.3, 0.75, 1.0}) {
    auto op = frac::build_caputo(alpha, x);
    auto c = op.apply(std::vector<double>(x.size(), 3.5));
    for (double v : c) CHECK(std::abs(v) <= 1e-8);
    auto z = op.apply(std::vector<double>(x.size(), 0.0));
    for (double v : z) CHECK(v == 0.0);

    auto u = oracle::uniform(x.size(), -1, 1, 1), v = oracle::uniform(x.size(), -1, 1, 2);
    std::vector<double> comb(x.size()), rhs(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) comb[i] = 2.0 * u[i] - 0.5 * v[i];
    auto du = op.apply(u), dv = op.apply(v);
    for (std::size_t i = 0; i < x.size(); ++i) rhs[i] = 2.0 * du[i] - 0.5 * dv[i];
    CHECK(oracle::vec_rel_err(op.apply(comb), rhs) <= 1e-12);
  }
}

TEST_CASE("alpha = 1 approximates the ordinary derivative") {
  const auto x = grid(50);
  auto op = frac::build_caputo(1.0, x);
  auto d = op.apply(sample(x, [](double t) { return t * t; }));
  for (std::size_t i = 1; i + 1 < x.size(); ++i) CHECK(oracle::rel_err(d[i], 2.0 * x[i]) <= 1e-3);
  auto ds = op.apply(sample(x, [](double t) { return std::sin(3 * t); }));
  for (std::size_t i = 1; i + 1 < x.size(); ++i) CHECK(std::abs(ds[i] - 3 * std::cos(3 * x[i])) <= 1e-3);
}

TEST_CASE("gradient flows through apply") {
  const auto x = grid(12);
  auto op = frac::build_caputo(0.75, x);
  net::MlpConfig cfg;
  cfg.hidden_layers = 3;
  cfg.hidden_width = 6;
  auto params = net::init_params(cfg, 4);
  const auto w = oracle::uniform(x.size(), -1, 1, 9);
  const ad::Tensor xt = ad::Tensor::column(x), wt = ad::Tensor::column(w);

  ad::Tape tape;
  net::BoundMlp bound(params, tape);
  auto loss = ad::sum(ad::mul(tape.constant(wt), op.apply(bound.forward(tape.constant(xt)))));
  auto grads = tape.backward(loss);
  std::vector<double> analytic;
  for (const auto& v : bound.variables()) {
    auto g = grads[v];
    analytic.insert(analytic.end(), g.values().begin(), g.values().end());
  }
  auto f = [&](const std::vector<double>& flat) {
    auto p = params;
    p.assign(flat);
    auto u = net::forward(p, xt);
    auto d = op.apply(u.values());
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += w[i] * d[i];
    return s;
  };
  CHECK(oracle::vec_rel_err(analytic, oracle::central_gradient(f, params.flatten())) <= 1e-4);
}

TEST_CASE("construction errors") {
  const auto x = grid(10);
  CHECK_THROWS_AS(frac::build_caputo(0.0, x), std::invalid_argument);
  CHECK_THROWS_AS(frac::build_caputo(1.5, x), std::invalid_argument);
  CHECK_THROWS_AS(frac::build_caputo(0.5, x, 10), std::invalid_argument);
  auto dup = x;
  dup[3] = dup[2];
  CHECK_THROWS_AS(frac::build_caputo(0.5, dup), std::invalid_argument);
  // Points clustered near one end make high-degree fits singular.
  std::vector<double> clustered(40);
  for (std::size_t i = 0; i < 40; ++i) clustered[i] = 1.0 - 1e-9 * static_cast<double>(40 - i);
  clustered.back() = 1.0;
  CHECK_THROWS_AS(frac::build_caputo(0.5, clustered, 20), std::runtime_error);
  auto op = frac::build_caputo(0.5, x);
  CHECK_THROWS_AS(op.apply(std::vector<double>(3, 0.0)), std::invalid_argument);
}
