#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "risn/autodiff/tape.hpp"
#include "risn/fractional.hpp"
#include "risn/network.hpp"
#include "risn/problems.hpp"

namespace risn::solve {

enum class ModelKind { Risn, Pinn };
std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);

struct LbfgsConfig {
  std::size_t history = 10;
  double learning_rate = 0.01;  // trial step of the first line search
  double c1 = 1e-4;
  double c2 = 0.9;
  std::size_t max_iters = 500;
  double grad_tol = 1e-9;
  double plateau_rtol = 1e-12;
  std::size_t plateau_window = 10;
  std::size_t max_line_search = 25;

  void validate() const;
};

struct TrainConfig {
  net::MlpConfig mlp;  // input_dim and residual are set per problem and model
  std::size_t n_train = 50;
  std::size_t quad_order = 50;
  LbfgsConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing fields keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

// ------------------------------------------------------------ fields

/// The functions being solved for, one per unknown. Values and input
/// derivatives are returned on `tape`.
class FieldModel {
 public:
  virtual ~FieldModel() = default;
  virtual std::size_t unknowns() const = 0;
  virtual ad::Var value(ad::Tape& tape, std::size_t unknown, const ad::Tensor& x) = 0;
  virtual ad::Var derivative(ad::Tape& tape, std::size_t unknown, const ad::Tensor& x, std::size_t axis,
                             int order) = 0;
};

/// Networks bound to a tape; parameters are its leaves.
class NetworkFields : public FieldModel {
 public:
  NetworkFields(std::span<const net::ResidualMlpParams> params, ad::Tape& tape);
  std::size_t unknowns() const override { return nets_.size(); }
  ad::Var value(ad::Tape& tape, std::size_t unknown, const ad::Tensor& x) override;
  ad::Var derivative(ad::Tape& tape, std::size_t unknown, const ad::Tensor& x, std::size_t axis, int order) override;
  const net::BoundMlp& net(std::size_t unknown) const { return nets_.at(unknown); }

 private:
  std::vector<net::BoundMlp> nets_;
};

/// Closed-form solutions; everything they produce is a tape constant.
class ExpressionFields : public FieldModel {
 public:
  ExpressionFields(std::vector<expr::Expression> solutions, std::vector<std::string> variables);
  std::size_t unknowns() const override { return solutions_.size(); }
  ad::Var value(ad::Tape& tape, std::size_t unknown, const ad::Tensor& x) override;
  ad::Var derivative(ad::Tape& tape, std::size_t unknown, const ad::Tensor& x, std::size_t axis, int order) override;

 private:
  std::vector<expr::Expression> solutions_;
  std::vector<std::string> variables_;
};

/// Fields for the exact solutions of `spec`; throws when any is missing.
std::unique_ptr<ExpressionFields> exact_fields(const prob::ProblemSpec& spec);

// ------------------------------------------------------------ residual

/// n collocation points: 1-D gets n equispaced points, d-D a tensor grid of
/// k per axis with k the smallest integer such that k^d >= n. Axes flagged
/// exclude_lower drop their lower endpoint and keep the spacing (hi-lo)/k.
ad::Tensor collocation_points(const prob::ProblemSpec& spec, std::size_t n);

struct IntegralPlan;

/// Everything about the residual that does not depend on the unknowns:
/// collocation points, quadrature nodes, weighted kernel matrices, sources,
/// and the Caputo matrix. Built once per training run.
class ResidualAssembler {
 public:
  ResidualAssembler(const prob::ProblemSpec& spec, ad::Tensor points, std::size_t quad_order);
  ~ResidualAssembler();
  ResidualAssembler(ResidualAssembler&&) noexcept;

  const ad::Tensor& points() const { return points_; }
  const prob::ProblemSpec& spec() const { return spec_; }

  /// One N x 1 residual per equation.
  std::vector<ad::Var> assemble(ad::Tape& tape, FieldModel& fields) const;

 private:
  prob::ProblemSpec spec_;
  ad::Tensor points_;
  std::vector<ad::Tensor> sources_;
  std::vector<std::optional<ad::Tensor>> reactions_;
  std::vector<std::vector<std::size_t>> plan_index_;  // per equation, per term
  std::vector<IntegralPlan> plans_;
  std::vector<ad::Tensor> node_sets_;
  std::optional<frac::CaputoOperator> caputo_;
};

/// Convenience wrapper building a one-off assembler.
std::vector<ad::Var> assemble_residual(const prob::ProblemSpec& spec, FieldModel& fields, ad::Tape& tape,
                                       const ad::Tensor& points, std::size_t quad_order);

/// Largest |R| over all equations with the exact solutions plugged in.
double exact_residual(const prob::ProblemSpec& spec, std::size_t quad_order, const ad::Tensor& points);

/// Registry self-check: exact residual at `n` deterministic random interior
/// points, with the weakly singular tolerance for Abel problems.
struct SelfCheck {
  double max_residual = 0.0;
  double tolerance = 0.0;
  bool ok() const { return max_residual <= tolerance; }
};
SelfCheck self_check(const prob::ProblemSpec& spec, std::size_t quad_order = 100, std::size_t n = 10);

/// Loads a problem file and, when it carries exact solutions, applies the
/// registry self-check. Throws std::invalid_argument on failure.
prob::ProblemSpec load_and_check_problem(const std::string& path);

// ------------------------------------------------------------ loss

struct ConditionTerm {
  prob::ConditionKind kind = prob::ConditionKind::BC;
  ad::Var predicted;  // P x 1
  ad::Tensor target;  // P x 1
};

/// (1/(N*M)) sum_q R_q^T R_q + sum of lambda-weighted condition MSEs, where
/// each (kind, unknown) group contributes its own mean.
ad::Var compute_loss(std::span<const ad::Var> residuals, std::span<const ConditionTerm> conditions,
                     const prob::LossWeights& lambda);

/// Condition groups of `spec` evaluated through `fields`.
std::vector<ConditionTerm> condition_terms(const prob::ProblemSpec& spec, FieldModel& fields, ad::Tape& tape);

// ------------------------------------------------------------ optimizer

struct StepRecord {
  double alpha = 0.0;
  double f0 = 0.0, f1 = 0.0;    // objective before and after
  double dg0 = 0.0, dg1 = 0.0;  // directional derivatives before and after
};

struct IterationRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

enum class StopReason { GradTol, Plateau, MaxIters, LineSearchFailed };
std::string to_string(StopReason r);

struct LbfgsResult {
  std::vector<double> x;  // best point seen
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  StopReason reason = StopReason::MaxIters;
  bool converged = false;
  std::vector<IterationRecord> history;  // entry 0 is the starting point
  std::vector<StepRecord> steps;
};

/// Objective: returns f(x) and writes the gradient. Throw ad::DomainError
/// (or return a non-finite value) for points outside the domain.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

/// Limited-memory BFGS with a strong-Wolfe bracketing/zoom line search.
/// Non-finite trial points are treated as overshooting; a non-finite start
/// throws std::runtime_error.
LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsConfig& config);

// ------------------------------------------------------------ training

struct BenchmarkResult {
  std::string problem;
  ModelKind model = ModelKind::Risn;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  std::vector<double> mae;  // per unknown; empty when there is no reference
  std::size_t iterations = 0;
  double wall_ms = 0.0;
  bool converged = false;
  std::string stop_reason;
  std::vector<IterationRecord> history;
};

nlohmann::json to_json(const BenchmarkResult& r, bool with_history = false);
BenchmarkResult benchmark_from_json(const nlohmann::json& j);

struct TrainOutput {
  std::vector<net::ResidualMlpParams> params;  // one per unknown
  BenchmarkResult result;
};

/// Architecture used for `model` on `spec`: config.mlp with the problem's
/// input dimension and skips on for RISN, off for PINN.
net::MlpConfig model_config(const prob::ProblemSpec& spec, const TrainConfig& config, ModelKind model);

/// Full-batch training; deterministic in (spec, config, model).
TrainOutput train(const prob::ProblemSpec& spec, const TrainConfig& config, ModelKind model);

/// Loss and flat gradient for given parameters (used by training and by
/// gradient checks).
double loss_and_gradient(const ResidualAssembler& assembler, std::span<const net::ResidualMlpParams> params,
                         std::vector<double>* grad);

/// Tabulated reference on [0, 1] with linear interpolation.
struct Reference {
  std::vector<double> x, u;
  double at(double x) const;
};

/// u(x_j) = sum_i w_i exp(-k|x_j - s_i|)/(2k) f(s_i), composite trapezoid on
/// the grid s_i = i*step, which also carries the x_j.
Reference helmholtz_reference(double k, const expr::Expression& forcing, double grid_step = 0.001);

/// Offset test grid: per axis k points at lo + (j + 1/2)(hi - lo)/k.
ad::Tensor test_grid(const prob::ProblemSpec& spec, std::size_t per_axis);

/// Reference values of `unknown` at `x` (exact expression or Helmholtz table).
std::vector<double> reference_values(const prob::ProblemSpec& spec, std::size_t unknown, const ad::Tensor& x);

/// Mean |u_net - u_ref| per unknown; n_test defaults to 200 in 1-D and 50
/// per axis otherwise. Throws std::invalid_argument without a reference.
std::vector<double> evaluate_mae(std::span<const net::ResidualMlpParams> params, const prob::ProblemSpec& spec,
                                 std::optional<std::size_t> n_test = std::nullopt);

/// Same metric for arbitrary predictors (test hooks, exact fields).
using Predictor = std::function<std::vector<double>(std::size_t unknown, const ad::Tensor& x)>;
std::vector<double> evaluate_mae(const Predictor& predict, const prob::ProblemSpec& spec,
                                 std::optional<std::size_t> n_test = std::nullopt);

// ------------------------------------------------------------ sweep

struct SweepRow {
  std::size_t depth = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::Risn;
  double mae = 0.0;  // mean over unknowns; NaN when the run failed
  double final_loss = 0.0;
  std::vector<IterationRecord> history;
  std::string error;
};

/// Trains RISN then PINN for every (depth, lr, seed); failures are recorded
/// in the row and the sweep continues.
std::vector<SweepRow> sensitivity_sweep(const prob::ProblemSpec& spec, std::span<const std::size_t> depths,
                                        std::span<const double> lrs, std::span<const std::uint64_t> seeds,
                                        const TrainConfig& base);

}  // namespace risn::solve
