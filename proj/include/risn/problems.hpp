#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "risn/expression.hpp"

namespace risn::prob {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  bool operator==(const Interval&) const = default;
};

enum class LhsKind { Identity, Derivative, Caputo, PartialTime };

/// Differential part of the left-hand side, applied to the equation's own
/// unknown. Derivative acts along axis 0, PartialTime along `axis`.
struct LhsOperator {
  LhsKind kind = LhsKind::Identity;
  int order = 0;       // Derivative
  double alpha = 1.0;  // Caputo
  std::size_t axis = 1;  // PartialTime
  bool operator==(const LhsOperator&) const = default;
};

enum class LimitKind { Fredholm, Volterra };

/// One integrated axis. Fredholm integrates over [lo, hi]; Volterra over
/// [lo, x_axis] with x_axis the collocation coordinate.
struct IntegralAxis {
  std::size_t axis = 0;  // collocation axis being integrated
  LimitKind kind = LimitKind::Fredholm;
  double lo = 0.0;
  double hi = 1.0;
  std::string variable = "t";  // integration variable name
  bool operator==(const IntegralAxis&) const = default;
};

/// Integral of kernel(collocation vars, integration vars) * zeta(u, du, integration vars)
/// where u is `unknown` evaluated at the integration point and du its
/// derivative along the first integrated axis.
struct IntegralTerm {
  std::vector<IntegralAxis> axes;
  expr::Expression kernel;
  expr::Expression zeta;
  std::size_t unknown = 0;
  bool operator==(const IntegralTerm&) const = default;
};

/// Residual  kappa * L[u] + reaction * u - source - sum(integrals), with u the
/// unknown whose index equals the equation's position.
struct EquationSpec {
  double kappa = 1.0;
  LhsOperator lhs;
  std::optional<expr::Expression> reaction;
  expr::Expression source;
  std::vector<IntegralTerm> integrals;
  bool operator==(const EquationSpec&) const = default;
};

enum class ConditionKind { IC, BC, Data };

struct Condition {
  ConditionKind kind = ConditionKind::BC;
  std::size_t unknown = 0;
  std::vector<double> location;  // one coordinate per axis
  double value = 0.0;
  bool operator==(const Condition&) const = default;
};

struct LossWeights {
  double ic = 1.0;
  double bc = 1.0;
  double data = 1.0;
  bool operator==(const LossWeights&) const = default;
};

/// Reference computed by quadrature of a known forcing instead of an exact
/// solution: u(x) = int_0^1 exp(-k|x - s|) / (2k) * f(s) ds.
struct HelmholtzReference {
  double k = 5.0;
  expr::Expression forcing;  // in variable "t"
  bool operator==(const HelmholtzReference&) const = default;
};

/// A single equation (one unknown) or a system; equations[i] governs unknown i.
struct ProblemSpec {
  std::string id;
  std::string title;
  std::vector<std::string> variables;  // collocation axis names
  std::vector<Interval> domain;
  std::vector<bool> exclude_lower;  // drop the lower endpoint from collocation
  std::vector<EquationSpec> equations;
  std::vector<Condition> conditions;
  std::vector<std::optional<expr::Expression>> exact;  // per unknown
  std::optional<HelmholtzReference> reference;
  LossWeights lambda;
  std::optional<std::size_t> quad_order;
  bool pinn_unsolvable = false;
  bool weakly_singular = false;  // Abel kernels; exact-solution residuals are looser

  std::size_t dims() const { return variables.size(); }
  std::size_t unknowns() const { return equations.size(); }
  bool has_exact() const;
  bool operator==(const ProblemSpec&) const = default;
};

/// Throws std::invalid_argument describing the first violated invariant.
void validate(const ProblemSpec& spec);

/// Names of registry problems in table order: P01..P20 then HELM.
const std::vector<std::string>& problem_ids();

/// Throws std::out_of_range listing the valid ids.
const ProblemSpec& get_problem(const std::string& id);

nlohmann::json to_json(const ProblemSpec& spec);
/// Errors name the offending field path, e.g. "equations[0].integrals[1].kernel".
ProblemSpec problem_from_json(const nlohmann::json& j);
ProblemSpec load_problem_file(const std::filesystem::path& path);

}  // namespace risn::prob
