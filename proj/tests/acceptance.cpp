// End-to-end acceptance checks, one PASS/FAIL line per criterion.
//
// Without --results the full benchmark (every registry problem, both models,
// seeds 0,1,2, default configuration) is trained first; that run supplies
// criteria 1-8. Criteria 9-15 are independent of training luck.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "risn/autodiff/tape.hpp"
#include "risn/cli.hpp"
#include "risn/fractional.hpp"
#include "risn/network.hpp"
#include "risn/quadrature.hpp"
#include "risn/solver.hpp"

using namespace risn;
using solve::BenchmarkResult;
using solve::ModelKind;

namespace {

const std::vector<std::uint64_t> kSeeds{0, 1, 2};

struct Line {
  int id;
  bool pass;
  std::string detail;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// ------------------------------------------------------------ training criteria

struct Runs {
  std::vector<BenchmarkResult> results;

  std::optional<BenchmarkResult> best(const std::string& id, ModelKind m) const { return cli::best_run(results, id, m); }

  double max_wall_ms(const std::string& id, ModelKind m) const {
    double w = 0.0;
    for (const auto& r : results)
      if (r.problem == id && r.model == m) w = std::max(w, r.wall_ms);
    return w;
  }
};

Line mae_limit(int id, const Runs& runs, const std::string& problem, double limit, double wall_limit_s = 0.0) {
  const auto b = runs.best(problem, ModelKind::Risn);
  if (!b || b->mae.empty()) return {id, false, problem + ": no RISN result"};
  const double worst = *std::max_element(b->mae.begin(), b->mae.end());
  bool ok = worst <= limit;
  std::string d = problem + " best-of-seeds RISN MAE";
  for (double m : b->mae) d += " " + sci(m);
  d += " (seed " + std::to_string(b->seed) + ", limit " + sci(limit) + ")";
  if (wall_limit_s > 0.0) {
    const double w = runs.max_wall_ms(problem, ModelKind::Risn) / 1000.0;
    ok = ok && w <= wall_limit_s;
    char buf[96];
    std::snprintf(buf, sizeof buf, "; slowest seed %.1f s (limit %.0f s)", w, wall_limit_s);
    d += buf;
  }
  return {id, ok, d};
}

Line helmholtz_line(const Runs& runs) {
  const auto r = runs.best("HELM", ModelKind::Risn);
  const auto p = runs.best("HELM", ModelKind::Pinn);
  if (!r || !p || r->mae.empty() || p->mae.empty()) return {6, false, "HELM: missing RISN or PINN result"};
  const bool ok = r->mae[0] <= 5e-3 && r->mae[0] < p->mae[0];
  return {6, ok,
          "HELM best-of-seeds MAE RISN " + sci(r->mae[0]) + " (limit 5.000e-03) vs PINN " + sci(p->mae[0]) +
              " on seeds 0,1,2"};
}

/// A model "converges" on a problem when its best run stopped without a
/// line-search failure and has a finite loss and MAE for every unknown.
bool finite_run(const std::optional<BenchmarkResult>& r) {
  if (!r || !r->converged || r->mae.empty() || !std::isfinite(r->final_loss)) return false;
  return std::all_of(r->mae.begin(), r->mae.end(), [](double m) { return std::isfinite(m); });
}

Line ordering_line(const Runs& runs) {
  std::size_t rows = 0, wins = 0;
  std::string losses;
  for (const auto& id : cli::table_problems(6)) {
    const auto r = runs.best(id, ModelKind::Risn), p = runs.best(id, ModelKind::Pinn);
    if (!finite_run(r) || !finite_run(p)) continue;
    ++rows;
    if (mean(r->mae) <= mean(p->mae)) {
      ++wins;
    } else {
      losses += " " + id;
    }
  }
  const double frac = rows ? double(wins) / double(rows) : 0.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "RISN <= PINN on %zu of %zu rows where both converge (%.0f%%, need >= 70%%)", wins,
                rows, 100.0 * frac);
  std::string d = buf;
  if (!losses.empty()) d += "; PINN better on" + losses;
  return {7, rows > 0 && frac >= 0.7, d};
}

/// Makespan of `jobs` workers taking sessions in request order, each
/// starting the next pending session as soon as it is free.
double list_schedule_ms(const std::vector<double>& durations, std::size_t jobs) {
  std::vector<double> free_at(jobs, 0.0);
  for (double d : durations) {
    auto it = std::min_element(free_at.begin(), free_at.end());
    *it += d;
  }
  return *std::max_element(free_at.begin(), free_at.end());
}

Line runtime_line(const Runs& runs, std::optional<double> measured_ms) {
  const std::size_t expected = prob::problem_ids().size() * 2 * kSeeds.size();
  std::vector<double> durations;
  double total = 0.0;
  for (const auto& id : prob::problem_ids())
    for (ModelKind m : {ModelKind::Risn, ModelKind::Pinn})
      for (const auto& r : runs.results)
        if (r.problem == id && r.model == m && std::find(kSeeds.begin(), kSeeds.end(), r.seed) != kSeeds.end()) {
          durations.push_back(r.wall_ms);
          total += r.wall_ms;
        }
  const double four = list_schedule_ms(durations, 4);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%zu/%zu sessions; serial %.1f min on this host%s; 4 workers (--jobs 4) projected %.1f min "
                "(limit 45 min)",
                durations.size(), expected, total / 60000.0,
                measured_ms ? (", measured end-to-end " + std::to_string(int(*measured_ms / 60000.0 + 0.5)) + " min")
                                  .c_str()
                            : "",
                four / 60000.0);
  return {8, durations.size() == expected && four <= 45.0 * 60000.0, buf};
}

// ------------------------------------------------------------ property criteria

Line quadrature_line() {
  double worst = 0.0;
  for (std::size_t n = 1; n <= 64; ++n) {
    const auto rule = quad::gauss_legendre(n);
    for (std::size_t k = 0; k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += rule.weights[i] * std::pow(rule.nodes[i], double(k));
      const double exact = k % 2 ? 0.0 : 2.0 / double(k + 1);
      worst = std::max(worst, std::abs(s - exact));
    }
  }
  return {9, worst <= 1e-12, "max |error| over monomials of degree <= 2n-1, n = 1..64: " + sci(worst) +
                                 " (limit 1e-12)"};
}

Line gamma_line() {
  double worst = oracle::rel_err(quad::gamma(4.0), 6.0, 0.0);
  worst = std::max(worst, oracle::rel_err(quad::gamma(0.5), std::sqrt(std::numbers::pi), 0.0));
  for (double x : {0.1, 0.25, 0.5, 0.75, 1.3, 2.5, 3.7, 7.2, 11.5, -0.5, -1.5, -2.25})
    worst = std::max(worst, oracle::rel_err(quad::gamma(x + 1.0), x * quad::gamma(x), 0.0));
  return {10, worst <= 1e-12, "Gamma(4), Gamma(1/2) and the recurrence: max rel. error " + sci(worst) +
                                  " (limit 1e-12)"};
}

Line caputo_line() {
  std::vector<double> x(50);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double(i) / double(x.size() - 1);
  double worst = 0.0;
  for (double alpha : {0.25, 0.5, 0.75, 1.0}) {
    const auto op = frac::build_caputo(alpha, x);
    for (int k = 1; k <= 4; ++k) {
      std::vector<double> u(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) u[i] = std::pow(x[i], k);
      const auto d = op.apply(u);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < 0.1) continue;
        const double exact = std::tgamma(k + 1.0) / std::tgamma(k + 1.0 - alpha) * std::pow(x[i], k - alpha);
        worst = std::max(worst, oracle::rel_err(d[i], exact, 0.0));
      }
    }
  }
  return {11, worst <= 1e-5, "D^alpha x^k, k = 1..4, alpha in {0.25, 0.5, 0.75, 1}, x >= 0.1: max rel. error " +
                                 sci(worst) + " (limit 1e-5)"};
}

double primitive_error() {
  using ad::Tape;
  using ad::Tensor;
  using ad::Var;
  using Op = std::function<Var(const Var&, const Var&)>;
  struct Case {
    double lo, hi;
    std::size_t rb, cb;
    Op op;
  };
  const std::vector<Case> cases{
      {-2, 2, 3, 4, [](const Var& a, const Var& b) { return a + b; }},
      {-2, 2, 1, 4, [](const Var& a, const Var& b) { return a - b; }},
      {-2, 2, 3, 4, [](const Var& a, const Var& b) { return a * b; }},
      {0.5, 2, 3, 4, [](const Var& a, const Var& b) { return a / b; }},
      {-2, 2, 4, 2, [](const Var& a, const Var& b) { return ad::matmul(a, b); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::exp(a); }},
      {0.2, 3, 1, 1, [](const Var& a, const Var&) { return ad::log(a); }},
      {0.2, 3, 1, 1, [](const Var& a, const Var&) { return ad::sqrt(a); }},
      {0.2, 2, 1, 1, [](const Var& a, const Var&) { return ad::pow_const(a, 1.5); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::sin(a); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::cos(a); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::tanh(a); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::row_sum(a); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::reshape(a, 4, 3); }},
      {-2, 2, 1, 1, [](const Var& a, const Var&) { return ad::mean(a); }},
  };
  double worst = 0.0;
  unsigned seed = 101;
  for (const auto& c : cases) {
    const Tensor a0(3, 4, oracle::uniform(12, c.lo, c.hi, seed++));
    const Tensor b0(c.rb, c.cb, oracle::uniform(c.rb * c.cb, c.lo, c.hi, seed++));
    Tensor w;
    {
      Tape t;
      const auto out = c.op(t.constant(a0), t.constant(b0)).value();
      w = Tensor(out.rows(), out.cols(), oracle::uniform(out.size(), -1, 1, seed++));
    }
    auto value = [&](const std::vector<double>& flat) {
      Tape t;
      const Tensor a(3, 4, std::vector<double>(flat.begin(), flat.begin() + 12));
      const Tensor b(c.rb, c.cb, std::vector<double>(flat.begin() + 12, flat.end()));
      const auto out = c.op(t.constant(a), t.constant(b)).value();
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += w[i] * out[i];
      return s;
    };
    Tape t;
    const auto a = t.leaf(a0), b = t.leaf(b0);
    const auto g = t.backward(ad::sum(ad::mul(c.op(a, b), t.constant(w))));
    std::vector<double> analytic = g[a].values();
    const auto gb = g.contains(b) ? g[b].values() : std::vector<double>(b0.size(), 0.0);
    analytic.insert(analytic.end(), gb.begin(), gb.end());
    std::vector<double> flat = a0.values();
    flat.insert(flat.end(), b0.values().begin(), b0.values().end());
    worst = std::max(worst, oracle::vec_rel_err(analytic, oracle::central_gradient(value, flat)));
  }
  return worst;
}

double loss_gradient_error(const std::string& id) {
  const auto& p = prob::get_problem(id);
  solve::TrainConfig cfg;
  cfg.n_train = 12;
  cfg.quad_order = 12;
  const auto mlp = solve::model_config(p, cfg, ModelKind::Risn);
  std::vector<net::ResidualMlpParams> params;
  for (std::size_t q = 0; q < p.unknowns(); ++q) params.push_back(net::init_params(mlp, 5 + q));
  const solve::ResidualAssembler assembler(p, solve::collocation_points(p, cfg.n_train), cfg.quad_order);
  std::vector<double> grad;
  solve::loss_and_gradient(assembler, params, &grad);
  std::vector<double> x0;
  for (const auto& ps : params) {
    const auto f = ps.flatten();
    x0.insert(x0.end(), f.begin(), f.end());
  }
  std::mt19937 rng(23);
  std::uniform_int_distribution<std::size_t> pick(0, x0.size() - 1);
  double worst = 0.0;
  auto work = params;
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = pick(rng);
    auto f = [&](const std::vector<double>& xi) {
      auto x = x0;
      x[i] = xi[0];
      std::size_t off = 0;
      for (auto& ps : work) {
        ps.assign(std::span<const double>(x).subspan(off, ps.parameter_count()));
        off += ps.parameter_count();
      }
      return solve::loss_and_gradient(assembler, work, nullptr);
    };
    worst = std::max(worst, oracle::rel_err(grad[i], oracle::central_gradient(f, {x0[i]}, 1e-5)[0], 1e-6));
  }
  return worst;
}

Line autodiff_line() {
  const double prim = primitive_error();
  double full = 0.0;
  // P20 goes through the Caputo matrix, P16 and P19 through input derivatives
  for (const char* id : {"P01", "P16", "P19", "P20"}) full = std::max(full, loss_gradient_error(id));
  return {12, prim <= 1e-5 && full <= 1e-4, "primitives " + sci(prim) + " (limit 1e-5); full loss on P01/P16/P19/P20 " +
                                                sci(full) + " (limit 1e-4)"};
}

Line self_check_line() {
  double worst_regular = 0.0, worst_abel = 0.0;
  bool ok = true;
  std::size_t n = 0;
  for (const auto& id : prob::problem_ids()) {
    const auto& p = prob::get_problem(id);
    if (!p.has_exact()) continue;
    ++n;
    const auto c = solve::self_check(p, 100);
    const double limit = p.weakly_singular ? 1e-2 : 1e-5;
    ok = ok && c.max_residual <= limit;
    (p.weakly_singular ? worst_abel : worst_regular) = std::max(p.weakly_singular ? worst_abel : worst_regular,
                                                                c.max_residual);
  }
  return {13, ok, std::to_string(n) + " problems at order 100: max |R| " + sci(worst_regular) +
                      " (limit 1e-5), Abel " + sci(worst_abel) + " (limit 1e-2)"};
}

bool wolfe_ok(const solve::LbfgsResult& r, const solve::LbfgsConfig& c) {
  return std::all_of(r.steps.begin(), r.steps.end(), [&](const solve::StepRecord& s) {
    return s.f1 <= s.f0 + c.c1 * s.alpha * s.dg0 && std::abs(s.dg1) <= c.c2 * std::abs(s.dg0);
  });
}

Line lbfgs_line() {
  solve::LbfgsConfig cfg;
  cfg.grad_tol = 1e-10;
  std::size_t worst_iters = 0, steps = 0;
  double worst_grad = 0.0;
  bool wolfe = true;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (std::size_t dim : {1, 2, 4, 10, 50}) {
    for (int start = 0; start < 4; ++start) {
      std::vector<double> c(dim), x0(dim);
      for (auto& v : c) v = u(rng);
      for (auto& v : x0) v = u(rng);
      const solve::Objective f = [&](const std::vector<double>& x, std::vector<double>& g) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          s += (x[i] - c[i]) * (x[i] - c[i]);
          g[i] = 2.0 * (x[i] - c[i]);
        }
        return s;
      };
      const auto r = solve::lbfgs_minimize(f, x0, cfg);
      worst_iters = std::max(worst_iters, r.iterations);
      worst_grad = std::max(worst_grad, r.grad_norm);
      wolfe = wolfe && wolfe_ok(r, cfg);
      steps += r.steps.size();
    }
  }
  // accepted steps of a non-convex problem and of a real training run
  const solve::Objective rosen = [](const std::vector<double>& x, std::vector<double>& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  const auto rr = solve::lbfgs_minimize(rosen, {-1.2, 1.0}, cfg);
  wolfe = wolfe && wolfe_ok(rr, cfg);
  steps += rr.steps.size();
  const auto& p12 = prob::get_problem("P12");
  solve::TrainConfig tc;
  tc.optimizer.max_iters = 60;
  const auto mlp = solve::model_config(p12, tc, ModelKind::Risn);
  std::vector<net::ResidualMlpParams> params{net::init_params(mlp, 0)};
  const solve::ResidualAssembler assembler(p12, solve::collocation_points(p12, tc.n_train), tc.quad_order);
  const solve::Objective loss = [&](const std::vector<double>& x, std::vector<double>& g) {
    params[0].assign(x);
    return solve::loss_and_gradient(assembler, params, &g);
  };
  const auto tr = solve::lbfgs_minimize(loss, params[0].flatten(), tc.optimizer);
  wolfe = wolfe && wolfe_ok(tr, tc.optimizer);
  steps += tr.steps.size();

  const bool ok = worst_iters <= 5 && worst_grad <= 1e-10 && wolfe;
  return {14, ok, "quadratics (20 starts, dim <= 50): worst " + std::to_string(worst_iters) + " iterations, grad " +
                      sci(worst_grad) + " (limits 5, 1e-10); strong Wolfe on all " + std::to_string(steps) +
                      " accepted steps: " + (wolfe ? "yes" : "no")};
}

Line determinism_line() {
  bool same = true;
  std::string d;
  for (const auto& [id, iters] : std::vector<std::pair<std::string, std::size_t>>{{"HELM", 500}, {"P02", 60}, {"P19", 30}}) {
    solve::TrainConfig c;
    c.seed = 1;
    c.optimizer.max_iters = iters;
    const auto a = solve::train(prob::get_problem(id), c, ModelKind::Risn).result;
    const auto b = solve::train(prob::get_problem(id), c, ModelKind::Risn).result;
    same = same && a.mae == b.mae && a.final_loss == b.final_loss && a.iterations == b.iterations;
    d += (d.empty() ? "" : ", ") + id + " " + sci(mean(a.mae));
  }
  // parallel sessions must not change results either
  cli::RunRequest req;
  req.problems = {prob::get_problem("HELM")};
  req.models = {ModelKind::Risn, ModelKind::Pinn};
  req.seeds = {0, 1};
  req.config.optimizer.max_iters = 100;
  const auto serial = cli::run_sessions(req);
  req.jobs = 3;
  const auto parallel = cli::run_sessions(req);
  for (std::size_t i = 0; i < serial.size(); ++i) same = same && serial[i].result.mae == parallel[i].result.mae;
  return {15, same, "repeated runs give bit-identical MAE (" + d + "; serial vs --jobs 3 on HELM)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-15"};
  std::string results_path, out_dir = "acceptance_run";
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--results", results_path, "Evaluate an existing results.json instead of training");
  app.add_option("--out", out_dir, "Where the benchmark run is written")->capture_default_str();
  app.add_option("--jobs", jobs, "Parallel training sessions")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  Runs runs;
  std::optional<double> measured_ms;
  try {
    if (results_path.empty()) {
      cli::RunRequest req;
      for (const auto& id : prob::problem_ids()) req.problems.push_back(prob::get_problem(id));
      req.models = {ModelKind::Risn, ModelKind::Pinn};
      req.seeds = kSeeds;
      req.jobs = jobs;
      req.out_dir = out_dir;
      const auto manifest = cli::make_manifest(
          "risn_acceptance", {{"train", solve::to_json(req.config)}, {"models", {"risn", "pinn"}}},
          prob::problem_ids(), kSeeds);
      std::cout << "training " << req.problems.size() * 2 * kSeeds.size() << " sessions on " << jobs
                << " worker(s); results in " << out_dir << "\n"
                << std::flush;
      const auto start = std::chrono::steady_clock::now();
      const auto records = cli::run_sessions(req, &std::cerr);
      measured_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      cli::write_run_outputs(req, records, manifest);
      for (const auto& r : records)
        if (r.error.empty()) runs.results.push_back(r.result);
    } else {
      runs.results = cli::load_results(results_path).results;
    }
  } catch (const std::exception& e) {
    std::cerr << "benchmark run failed: " << e.what() << "\n";
    return 1;
  }

  std::vector<std::function<Line()>> checks{
      [&] { return mae_limit(1, runs, "P01", 1e-4, 120.0); },
      [&] { return mae_limit(2, runs, "P07", 1e-3, 300.0); },
      [&] { return mae_limit(3, runs, "P12", 1e-5); },
      [&] { return mae_limit(4, runs, "P19", 1e-4); },
      [&] { return mae_limit(5, runs, "P20", 1e-2); },
      [&] { return helmholtz_line(runs); },
      [&] { return ordering_line(runs); },
      [&] { return runtime_line(runs, measured_ms); },
      quadrature_line,
      gamma_line,
      caputo_line,
      autodiff_line,
      self_check_line,
      lbfgs_line,
      determinism_line,
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Line l;
    try {
      l = checks[i]();
    } catch (const std::exception& e) {
      l = {int(i + 1), false, std::string("threw: ") + e.what()};
    }
    failed += !l.pass;
    std::printf("criterion %2d: %s  %s\n", l.id, l.pass ? "PASS" : "FAIL", l.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(checks.size()) - failed, checks.size());
  return failed ? 1 : 0;
}
