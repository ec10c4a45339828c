#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "risn/solver.hpp"

using namespace risn;
using ad::Tensor;
using prob::get_problem;

namespace {

/// Adaptive Simpson quadrature, independent of the Gauss-Legendre code.
double simpson(const std::function<double(double)>& f, double a, double b, double tol = 1e-13, int depth = 40) {
  auto rec = [&](auto&& self, double lo, double hi, double flo, double fmid, double fhi, double whole, double eps,
                 int level) -> double {
    const double mid = 0.5 * (lo + hi), lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    if (level <= 0 || std::abs(left + right - whole) <= 15.0 * eps) return left + right + (left + right - whole) / 15.0;
    return self(self, lo, mid, flo, flm, fmid, left, eps / 2, level - 1) +
           self(self, mid, hi, fmid, frm, fhi, right, eps / 2, level - 1);
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(rec, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, depth);
}

prob::ProblemSpec data_fit(const std::string& source, const std::string& exact) {
  prob::ProblemSpec s;
  s.id = "FIT";
  s.variables = {"x"};
  s.domain = {{0.0, 1.0}};
  s.exclude_lower = {false};
  prob::EquationSpec eq;
  eq.source = expr::Expression::parse(source, {"x"});
  s.equations = {eq};
  s.exact = {expr::Expression::parse(exact, {"x"})};
  return s;
}

std::vector<double> flat_params(const std::vector<net::ResidualMlpParams>& ps) {
  std::vector<double> out;
  for (const auto& p : ps) {
    const auto f = p.flatten();
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

void unflatten(std::vector<net::ResidualMlpParams>& ps, const std::vector<double>& x) {
  std::size_t off = 0;
  for (auto& p : ps) {
    p.assign(std::span<const double>(x).subspan(off, p.parameter_count()));
    off += p.parameter_count();
  }
}

}  // namespace

TEST_CASE("collocation grids") {
  auto p01 = get_problem("P01");
  CHECK(solve::collocation_points(p01, 3) == Tensor::column({0.0, 0.5, 1.0}));
  const auto abel = solve::collocation_points(get_problem("P05"), 3);
  CHECK(oracle::vec_rel_err(abel.values(), {1.0 / 3, 2.0 / 3, 1.0}) <= 1e-15);
  CHECK(solve::collocation_points(get_problem("P07"), 4) == Tensor::from_rows({{0, 0}, {0, 2}, {1, 0}, {1, 2}}));
  CHECK(solve::collocation_points(get_problem("P07"), 50).rows() == 64);
  CHECK(solve::collocation_points(p01, 50).rows() == 50);
  const auto pide = solve::collocation_points(get_problem("P16"), 9);
  CHECK(pide(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(pide(0, 1) == 0.0);
  CHECK_THROWS_AS(solve::collocation_points(p01, 1), std::invalid_argument);
}

TEST_CASE("exact solutions satisfy every registered equation") {
  for (const auto& id : prob::problem_ids()) {
    const auto& p = get_problem(id);
    if (!p.has_exact()) continue;
    CAPTURE(id);
    const auto check = solve::self_check(p, 100);
    CHECK(check.tolerance == (p.weakly_singular ? 1e-2 : 1e-5));
    CHECK(check.ok());
    CHECK(solve::exact_residual(p, 100, solve::collocation_points(p, 20)) <= check.tolerance);
  }
}

TEST_CASE("integral term of P01 at x = 1") {
  auto p = get_problem("P01");
  p.equations[0].kappa = 0.0;
  p.equations[0].source = expr::Expression::constant(0.0);
  auto fields = solve::exact_fields(p);
  ad::Tape tape;
  const auto r = solve::assemble_residual(p, *fields, tape, Tensor::column({0.25, 1.0}), 50);
  const double closed = 2.0 - std::numbers::e - 1.0 / 6.0;
  CHECK(oracle::rel_err(-r[0].value()[1], closed) <= 1e-14);
  CHECK(closed == doctest::Approx(-0.88495).epsilon(1e-5));
  const double numeric = simpson([](double t) { return (t - 0.25) * (t + std::exp(t)); }, 0.0, 0.25);
  CHECK(oracle::rel_err(-r[0].value()[0], numeric) <= 1e-10);
}

TEST_CASE("integral terms against adaptive quadrature") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unit(0.1, 0.9);
  SUBCASE("P15: Volterra with u^2 + u'") {
    auto p = get_problem("P15");
    p.equations[0].source = expr::Expression::constant(0.0);
    auto fields = solve::exact_fields(p);
    const double x = unit(rng);
    ad::Tape tape;
    const auto r = solve::assemble_residual(p, *fields, tape, Tensor::column({x}), 50);
    const double oracle_i =
        simpson([x](double t) { return -(x - t) * (std::sin(t) * std::sin(t) + std::cos(t)); }, 0.0, x);
    CHECK(oracle::rel_err(-r[0].value()[0], oracle_i) <= 1e-10);
  }
  SUBCASE("P17: Fredholm over time at fixed x") {
    auto p = get_problem("P17");
    p.equations[0].kappa = 0.0;
    p.equations[0].source = expr::Expression::constant(0.0);
    auto fields = solve::exact_fields(p);
    const double x = unit(rng), t = unit(rng);
    ad::Tape tape;
    const auto r = solve::assemble_residual(p, *fields, tape, Tensor::from_rows({{x, t}}), 50);
    const double oracle_i = simpson([x, t](double s) { return x * x * std::sin(t) * std::sin(x * s); }, 0.0, 1.0);
    CHECK(oracle::rel_err(-r[0].value()[0], oracle_i) <= 1e-10);
  }
  SUBCASE("P08: two Volterra axes") {
    auto p = get_problem("P08");
    p.equations[0].kappa = 0.0;
    p.equations[0].source = expr::Expression::constant(0.0);
    auto fields = solve::exact_fields(p);
    const double x = 0.6, y = 1.3;
    ad::Tape tape;
    const auto r = solve::assemble_residual(p, *fields, tape, Tensor::from_rows({{x, y}}), 30);
    const double oracle_i = simpson(
        [&](double s) {
          return simpson([&](double t) { return -std::exp(x + y + s + t) * (s + t); }, 0.0, y, 1e-12);
        },
        0.0, x, 1e-11);
    CHECK(oracle::rel_err(-r[0].value()[0], oracle_i) <= 1e-9);
  }
}

TEST_CASE("quadrature order convergence on P01") {
  const auto& p = get_problem("P01");
  const auto x = solve::collocation_points(p, 50);
  std::vector<double> r;
  for (std::size_t q : {5, 10, 20, 50}) r.push_back(solve::exact_residual(p, q, x));
  CHECK(r[0] > r[1]);
  // Once the error reaches rounding level it can only fluctuate.
  const double rounding = 1e-13;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) CHECK((r[i + 1] <= 1.1 * r[i] || r[i + 1] <= rounding));
  CHECK(r.back() <= rounding);
}

TEST_CASE("degenerate data fit: the residual is u - S") {
  auto p = data_fit("x^2", "sin(x)");
  auto fields = solve::exact_fields(p);
  ad::Tape tape;
  const auto x = solve::collocation_points(p, 7);
  const auto r = solve::assemble_residual(p, *fields, tape, x, 10);
  for (std::size_t i = 0; i < 7; ++i) CHECK(r[0].value()[i] == doctest::Approx(std::sin(x[i]) - x[i] * x[i]));
}

TEST_CASE("exact fields give analytic derivatives") {
  auto fields = solve::exact_fields(get_problem("P16"));
  ad::Tape tape;
  const auto x = Tensor::from_rows({{0.3, 0.7}, {0.9, 0.2}});
  const auto dt = fields->derivative(tape, 0, x, 1, 1);
  const auto dxx = fields->derivative(tape, 0, x, 0, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const double a = x(i, 0), b = x(i, 1);
    CHECK(oracle::rel_err(dt.value()[i], a * std::cos(a * b)) <= 1e-14);
    CHECK(oracle::rel_err(dxx.value()[i], -b * b * std::sin(a * b)) <= 1e-14);
  }
}

TEST_CASE("loss normalisation") {
  ad::Tape tape;
  const double c = 0.3;
  const auto r = tape.constant(Tensor(8, 1, c));
  CHECK(solve::compute_loss(std::vector{tape.constant(Tensor(8, 1))}, {}, {}).value().item() == 0.0);
  CHECK(solve::compute_loss(std::vector{r}, {}, {}).value().item() == doctest::Approx(c * c).epsilon(1e-15));
  CHECK(solve::compute_loss(std::vector{r, r}, {}, {}).value().item() == doctest::Approx(c * c).epsilon(1e-15));

  std::vector<solve::ConditionTerm> conds{
      {prob::ConditionKind::IC, tape.constant(Tensor::column({1.0, 3.0})), Tensor::column({0.0, 0.0})},
      {prob::ConditionKind::BC, tape.constant(Tensor::column({2.0})), Tensor::column({0.0})}};
  const prob::LossWeights w{0.5, 2.0, 1.0};
  // 0.5 * (1 + 9)/2 + 2 * 4
  CHECK(solve::compute_loss(std::vector{tape.constant(Tensor(4, 1))}, conds, w).value().item() == doctest::Approx(10.5));
}

TEST_CASE("condition terms follow the registry") {
  const auto& p = get_problem("P12");
  auto fields = solve::exact_fields(p);
  ad::Tape tape;
  const auto terms = solve::condition_terms(p, *fields, tape);
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].kind == prob::ConditionKind::BC);
  CHECK(terms[0].predicted.value() == terms[0].target);
}

TEST_CASE("L-BFGS on a quadratic") {
  const std::vector<double> c{1.0, -2.0, 3.0, 0.5};
  const solve::Objective f = [&](const std::vector<double>& x, std::vector<double>& g) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      v += (x[i] - c[i]) * (x[i] - c[i]);
      g[i] = 2.0 * (x[i] - c[i]);
    }
    return v;
  };
  solve::LbfgsConfig cfg;
  cfg.grad_tol = 1e-10;
  const auto res = solve::lbfgs_minimize(f, {0.0, 0.0, 0.0, 0.0}, cfg);
  CHECK(res.grad_norm <= 1e-10);
  CHECK(res.iterations <= 5);
  CHECK(res.reason == solve::StopReason::GradTol);
  CHECK(res.converged);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(res.x[i] - c[i]) <= 1e-10);
  REQUIRE(res.history.size() == res.iterations + 1);
  for (std::size_t i = 1; i < res.history.size(); ++i) CHECK(res.history[i].loss <= res.history[i - 1].loss);
}

TEST_CASE("L-BFGS on Rosenbrock with strong Wolfe steps") {
  const solve::Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  solve::LbfgsConfig cfg;
  cfg.grad_tol = 1e-10;
  const auto res = solve::lbfgs_minimize(f, {-1.2, 1.0}, cfg);
  CHECK(res.iterations <= 200);
  CHECK(std::abs(res.x[0] - 1.0) <= 1e-6);
  CHECK(std::abs(res.x[1] - 1.0) <= 1e-6);
  REQUIRE(res.steps.size() == res.iterations);
  for (const auto& s : res.steps) {
    CHECK(s.f1 <= s.f0 + cfg.c1 * s.alpha * s.dg0);
    CHECK(std::abs(s.dg1) <= cfg.c2 * std::abs(s.dg0));
  }
}

TEST_CASE("L-BFGS treats domain errors as overshoot") {
  // f = (x - 0.9)^2 on x < 1; beyond that the objective throws.
  const solve::Objective f = [](const std::vector<double>& x, std::vector<double>& g) {
    if (x[0] >= 1.0) throw ad::DomainError("outside");
    g[0] = 2.0 * (x[0] - 0.9);
    return (x[0] - 0.9) * (x[0] - 0.9);
  };
  solve::LbfgsConfig cfg;
  cfg.learning_rate = 100.0;
  const auto res = solve::lbfgs_minimize(f, {0.0}, cfg);
  CHECK(std::abs(res.x[0] - 0.9) <= 1e-8);

  const solve::Objective bad = [](const std::vector<double>&, std::vector<double>&) { return std::nan(""); };
  CHECK_THROWS_WITH_AS(solve::lbfgs_minimize(bad, {0.0}, cfg), doctest::Contains("iteration 0"), std::runtime_error);
  cfg.c1 = 0.95;
  CHECK_THROWS_AS(solve::lbfgs_minimize(f, {0.0}, cfg), std::invalid_argument);
}

TEST_CASE("loss gradient matches finite differences") {
  for (const char* id : {"P01", "P20", "P19", "P16"}) {
    CAPTURE(id);
    const auto& p = get_problem(id);
    solve::TrainConfig cfg;
    cfg.n_train = 12;
    cfg.quad_order = 12;
    const auto mlp = solve::model_config(p, cfg, solve::ModelKind::Risn);
    std::vector<net::ResidualMlpParams> params;
    for (std::size_t q = 0; q < p.unknowns(); ++q) params.push_back(net::init_params(mlp, 3 + q));
    const solve::ResidualAssembler assembler(p, solve::collocation_points(p, cfg.n_train), cfg.quad_order);
    std::vector<double> grad;
    solve::loss_and_gradient(assembler, params, &grad);
    const auto x0 = flat_params(params);
    REQUIRE(grad.size() == x0.size());

    std::mt19937 rng(11);
    std::uniform_int_distribution<std::size_t> pick(0, x0.size() - 1);
    auto work = params;
    for (int k = 0; k < 20; ++k) {
      const std::size_t i = pick(rng);
      auto f = [&](const std::vector<double>& xi) {
        auto x = x0;
        x[i] = xi[0];
        unflatten(work, x);
        return solve::loss_and_gradient(assembler, work, nullptr);
      };
      const double fd = oracle::central_gradient(f, {x0[i]}, 1e-5)[0];
      CAPTURE(i);
      CHECK(oracle::rel_err(grad[i], fd, 1e-6) <= 1e-4);
    }
  }
}

TEST_CASE("degenerate problem trains to the exact solution") {
  // One hidden layer keeps the least-squares fit well conditioned; the
  // gradient tolerance is off because a 1e-9 gradient still leaves
  // residuals near 1e-6 for this loss.
  auto p = data_fit("0", "0");
  solve::TrainConfig cfg;
  cfg.mlp.hidden_layers = 1;
  cfg.optimizer.grad_tol = 0.0;
  cfg.optimizer.max_iters = 200;
  const auto out = solve::train(p, cfg, solve::ModelKind::Risn);
  CAPTURE(out.result.stop_reason);
  REQUIRE(out.result.mae.size() == 1);
  CHECK(out.result.mae[0] <= 1e-6);
  CHECK(out.result.wall_ms > 0.0);
  CHECK(out.result.final_loss >= 0.0);
}

TEST_CASE("MAE on the offset grid") {
  const auto& p = get_problem("P01");
  const auto grid = solve::test_grid(p, 4);
  CHECK(grid == Tensor::column({0.125, 0.375, 0.625, 0.875}));
  const auto exact = [&](std::size_t q, const Tensor& x) { return solve::reference_values(p, q, x); };
  CHECK(solve::evaluate_mae(exact, p)[0] == 0.0);
  const auto shifted = [&](std::size_t q, const Tensor& x) {
    auto v = solve::reference_values(p, q, x);
    for (double& e : v) e += 0.5;
    return v;
  };
  CHECK(solve::evaluate_mae(shifted, p)[0] == doctest::Approx(0.5).epsilon(1e-13));
  const auto zero = data_fit("0", "0");
  const auto preds = [](std::size_t, const Tensor&) { return std::vector<double>{1.0, 2.0}; };
  CHECK(solve::evaluate_mae(preds, zero, 2)[0] == 1.5);
  CHECK(solve::test_grid(get_problem("P07"), 50).rows() == 2500);

  auto none = zero;
  none.exact = {std::nullopt};
  CHECK_THROWS_AS(solve::evaluate_mae(preds, none), std::invalid_argument);
}

TEST_CASE("Helmholtz reference") {
  const auto f = expr::Expression::parse("sin(pi*t)", {"t"});
  const auto ref = solve::helmholtz_reference(5.0, f, 0.001);
  REQUIRE(ref.x.size() == 1001);
  const double pi = std::numbers::pi;
  const double at0 = 0.1 * pi * (1.0 + std::exp(-5.0)) / (25.0 + pi * pi);
  CHECK(std::abs(ref.u[0] - at0) <= 1e-6);
  CHECK(at0 == doctest::Approx(9.070e-3).epsilon(1e-3));

  const double x = 0.37;
  const double oracle_x =
      simpson([x, pi](double s) { return std::exp(-5.0 * std::abs(x - s)) / 10.0 * std::sin(pi * s); }, 0.0, x) +
      simpson([x, pi](double s) { return std::exp(-5.0 * std::abs(x - s)) / 10.0 * std::sin(pi * s); }, x, 1.0);
  CHECK(std::abs(ref.at(x) - oracle_x) <= 1e-6);

  const auto fine = solve::helmholtz_reference(5.0, f, 0.0005);
  for (std::size_t j = 0; j < ref.x.size(); ++j) CHECK(std::abs(ref.u[j] - fine.u[2 * j]) <= 1e-6);

  const auto zero = solve::helmholtz_reference(5.0, expr::Expression::constant(0.0), 0.01);
  for (double v : zero.u) CHECK(v == 0.0);
  CHECK_THROWS_AS(solve::helmholtz_reference(5.0, f, 0.02), std::invalid_argument);

  // With the printed equation the exact-form residual vanishes at the reference.
  const auto& helm = get_problem("HELM");
  const auto pts = solve::collocation_points(helm, 11);
  const auto vals = solve::reference_values(helm, 0, pts);
  for (std::size_t i = 0; i < pts.rows(); ++i) CHECK(std::abs(vals[i] - ref.at(pts[i])) <= 1e-15);
}

TEST_CASE("training is deterministic in the seed") {
  const auto& p = get_problem("P02");
  solve::TrainConfig cfg;
  cfg.optimizer.max_iters = 15;
  cfg.n_train = 10;
  cfg.quad_order = 10;
  const auto a = solve::train(p, cfg, solve::ModelKind::Risn);
  const auto b = solve::train(p, cfg, solve::ModelKind::Risn);
  CHECK(a.result.mae == b.result.mae);
  CHECK(a.result.final_loss == b.result.final_loss);
  CHECK(a.result.iterations == b.result.iterations);
  CHECK(a.params[0].flatten() == b.params[0].flatten());
  cfg.seed = 1;
  const auto c = solve::train(p, cfg, solve::ModelKind::Risn);
  CHECK(c.result.final_loss != a.result.final_loss);
  const auto pinn = solve::train(p, cfg, solve::ModelKind::Pinn);
  CHECK_FALSE(pinn.params[0].config.residual);
  CHECK(c.params[0].config.residual);
}

TEST_CASE("sensitivity sweep cardinality and failure isolation") {
  const auto& p = get_problem("P01");
  solve::TrainConfig cfg;
  cfg.optimizer.max_iters = 2;
  cfg.n_train = 6;
  cfg.quad_order = 6;
  const std::vector<std::size_t> depths{0, 2};
  const std::vector<double> lrs{0.01};
  const std::vector<std::uint64_t> seeds{0};
  const auto rows = solve::sensitivity_sweep(p, depths, lrs, seeds, cfg);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].model == solve::ModelKind::Risn);
  CHECK(rows[1].model == solve::ModelKind::Pinn);
  CHECK_FALSE(rows[0].error.empty());
  CHECK(std::isnan(rows[0].mae));
  CHECK(rows[2].error.empty());
  CHECK(rows[2].depth == 2);
  CHECK(rows[3].history.size() >= 2);
}

TEST_CASE("RISN at lr 0.01 reaches MAE 1e-2 on P01 for depths 3 to 9") {
  const std::vector<std::size_t> depths{3, 5, 7, 9};
  const std::vector<double> lrs{0.01};
  const std::vector<std::uint64_t> seeds{0};
  const auto rows = solve::sensitivity_sweep(get_problem("P01"), depths, lrs, seeds, solve::TrainConfig{});
  REQUIRE(rows.size() == 8);
  for (const auto& r : rows) {
    CAPTURE(r.depth);
    CHECK(r.error.empty());
    if (r.model == solve::ModelKind::Risn) CHECK(r.mae <= 1e-2);
  }
}

TEST_CASE("config and result JSON") {
  solve::TrainConfig cfg;
  cfg.seed = 4;
  cfg.optimizer.learning_rate = 0.001;
  const auto back = solve::train_config_from_json(solve::to_json(cfg));
  CHECK(solve::to_json(back) == solve::to_json(cfg));
  CHECK(solve::train_config_from_json(nlohmann::json::object()).n_train == 50);
  CHECK_THROWS_AS(solve::train_config_from_json({{"n_train", 1}}), std::invalid_argument);

  solve::BenchmarkResult r;
  r.problem = "P09";
  r.model = solve::ModelKind::Pinn;
  r.mae = {1e-3, 2e-3};
  r.wall_ms = 12.5;
  r.history = {{0, 1.0, 2.0}, {1, 0.5, 1.0}};
  const auto j = solve::to_json(r, true);
  const auto r2 = solve::benchmark_from_json(j);
  CHECK(solve::to_json(r2, true) == j);
}

TEST_CASE("problem files are self-checked on load") {
  auto path = std::filesystem::temp_directory_path() / "risn_bad_p01.json";
  auto j = prob::to_json(get_problem("P01"));
  {
    std::ofstream(path) << j.dump();
  }
  CHECK(solve::load_and_check_problem(path.string()) == get_problem("P01"));
  j["source"] = "2*exp(x) - 1 + x^3/5";
  {
    std::ofstream(path) << j.dump();
  }
  CHECK_THROWS_WITH_AS(solve::load_and_check_problem(path.string()), doctest::Contains("exact solution leaves"),
                       std::invalid_argument);
  std::filesystem::remove(path);
}
