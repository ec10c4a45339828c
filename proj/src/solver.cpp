#include "risn/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "risn/autodiff/dual.hpp"
#include "risn/quadrature.hpp"

namespace risn::solve {

using ad::Tensor;
using ad::Var;
using nlohmann::json;

std::string to_string(ModelKind m) { return m == ModelKind::Risn ? "risn" : "pinn"; }

ModelKind model_from_string(const std::string& s) {
  if (s == "risn") return ModelKind::Risn;
  if (s == "pinn") return ModelKind::Pinn;
  throw std::invalid_argument("unknown model '" + s + "' (expected risn or pinn)");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::GradTol: return "grad_tol";
    case StopReason::Plateau: return "plateau";
    case StopReason::MaxIters: return "max_iters";
    case StopReason::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

void LbfgsConfig::validate() const {
  if (history < 1) throw std::invalid_argument("optimizer history must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning rate must be positive");
  if (!(0.0 < c1 && c1 < c2 && c2 < 1.0)) throw std::invalid_argument("Wolfe constants need 0 < c1 < c2 < 1");
  if (!(grad_tol >= 0.0)) throw std::invalid_argument("grad_tol must be non-negative");
  if (max_line_search < 2) throw std::invalid_argument("max_line_search must be at least 2");
}

void TrainConfig::validate() const {
  if (n_train < 2) throw std::invalid_argument("n_train must be at least 2");
  if (quad_order < 1 || quad_order > quad::kMaxOrder) throw std::invalid_argument("quad_order must be in [1, 512]");
  mlp.validate();
  optimizer.validate();
}

json to_json(const TrainConfig& c) {
  const auto& o = c.optimizer;
  return {{"mlp", net::to_json(c.mlp)},
          {"n_train", c.n_train},
          {"quad_order", c.quad_order},
          {"seed", c.seed},
          {"optimizer",
           {{"history", o.history},
            {"learning_rate", o.learning_rate},
            {"c1", o.c1},
            {"c2", o.c2},
            {"max_iters", o.max_iters},
            {"grad_tol", o.grad_tol},
            {"plateau_rtol", o.plateau_rtol},
            {"plateau_window", o.plateau_window},
            {"max_line_search", o.max_line_search}}}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  TrainConfig c;
  try {
    if (j.contains("mlp")) c.mlp = net::mlp_config_from_json(j.at("mlp"));
    if (j.contains("n_train")) c.n_train = j.at("n_train").get<std::size_t>();
    if (j.contains("quad_order")) c.quad_order = j.at("quad_order").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      auto& t = c.optimizer;
      if (o.contains("history")) t.history = o.at("history").get<std::size_t>();
      if (o.contains("learning_rate")) t.learning_rate = o.at("learning_rate").get<double>();
      if (o.contains("c1")) t.c1 = o.at("c1").get<double>();
      if (o.contains("c2")) t.c2 = o.at("c2").get<double>();
      if (o.contains("max_iters")) t.max_iters = o.at("max_iters").get<std::size_t>();
      if (o.contains("grad_tol")) t.grad_tol = o.at("grad_tol").get<double>();
      if (o.contains("plateau_rtol")) t.plateau_rtol = o.at("plateau_rtol").get<double>();
      if (o.contains("plateau_window")) t.plateau_window = o.at("plateau_window").get<std::size_t>();
      if (o.contains("max_line_search")) t.max_line_search = o.at("max_line_search").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------ fields

namespace {

/// Expression results may be 1x1 when they do not depend on every input.
Tensor as_column(Tensor t, std::size_t n) {
  if (t.rows() == n && t.cols() == 1) return t;
  if (t.size() == 1) return Tensor(n, 1, t[0]);
  throw ad::ShapeError("expected " + std::to_string(n) + " x 1, got " + ad::shape_string(t));
}

expr::Bindings column_bindings(const std::vector<std::string>& names, const Tensor& x) {
  expr::Bindings b;
  for (std::size_t a = 0; a < names.size(); ++a) b[names[a]] = x.col(a);
  return b;
}

}  // namespace

NetworkFields::NetworkFields(std::span<const net::ResidualMlpParams> params, ad::Tape& tape) {
  nets_.reserve(params.size());
  for (const auto& p : params) nets_.emplace_back(p, tape);
}

Var NetworkFields::value(ad::Tape& tape, std::size_t unknown, const Tensor& x) {
  return nets_.at(unknown).forward(tape.constant(x));
}

Var NetworkFields::derivative(ad::Tape& tape, std::size_t unknown, const Tensor& x, std::size_t axis, int order) {
  if (order == 0) return value(tape, unknown, x);
  const auto& net = nets_.at(unknown);
  auto f = [&net](const auto& v) { return net.forward(v); };
  return ad::input_derivative(f, tape.constant(x), axis, order);
}

ExpressionFields::ExpressionFields(std::vector<expr::Expression> solutions, std::vector<std::string> variables)
    : solutions_(std::move(solutions)), variables_(std::move(variables)) {}

Var ExpressionFields::value(ad::Tape& tape, std::size_t unknown, const Tensor& x) {
  return tape.constant(as_column(solutions_.at(unknown).evaluate(column_bindings(variables_, x)), x.rows()));
}

Var ExpressionFields::derivative(ad::Tape& tape, std::size_t unknown, const Tensor& x, std::size_t axis, int order) {
  if (order == 0) return value(tape, unknown, x);
  const auto& e = solutions_.at(unknown);
  const std::size_t d = variables_.size();
  auto f = [&](const ad::Dual<Tensor>& v) {
    std::map<std::string, ad::Dual<Tensor>, std::less<>> vars;
    for (std::size_t a = 0; a < d; ++a) {
      Tensor pick(d, 1);
      pick[a] = 1.0;
      vars[variables_[a]] = matmul(v, ad::constant_like(v, std::move(pick)));
    }
    return e.evaluate<ad::Dual<Tensor>>(vars, {});
  };
  return tape.constant(as_column(ad::input_derivative(f, x, axis, order), x.rows()));
}

std::unique_ptr<ExpressionFields> exact_fields(const prob::ProblemSpec& spec) {
  if (!spec.has_exact()) throw std::invalid_argument(spec.id + ": no exact solution");
  std::vector<expr::Expression> sol;
  for (const auto& e : spec.exact) sol.push_back(*e);
  return std::make_unique<ExpressionFields>(std::move(sol), spec.variables);
}

// ------------------------------------------------------------ residual

Tensor collocation_points(const prob::ProblemSpec& spec, std::size_t n) {
  if (n < 2) throw std::invalid_argument("collocation_points: n must be at least 2");
  const std::size_t d = spec.dims();
  std::size_t k = 1;
  if (d == 1) {
    k = n;
  } else {
    auto power = [d](std::size_t b) {
      std::size_t p = 1;
      for (std::size_t i = 0; i < d; ++i) p *= b;
      return p;
    };
    while (power(k) < n) ++k;
  }
  std::vector<std::vector<double>> axes(d);
  for (std::size_t a = 0; a < d; ++a) {
    const auto iv = spec.domain[a];
    for (std::size_t j = 0; j < k; ++j) {
      axes[a].push_back(spec.exclude_lower[a] ? iv.lo + (iv.hi - iv.lo) * double(j + 1) / double(k)
                                              : iv.lo + (iv.hi - iv.lo) * double(j) / double(k - 1));
    }
  }
  std::size_t total = 1;
  for (std::size_t a = 0; a < d; ++a) total *= k;
  Tensor x(total, d);
  for (std::size_t r = 0; r < total; ++r) {
    std::size_t rest = r;
    for (std::size_t a = d; a-- > 0;) {
      x(r, a) = axes[a][rest % k];
      rest /= k;
    }
  }
  return x;
}

/// Integration of one term. With `shared` nodes (every collocation axis
/// integrated over fixed limits) the unknown is sampled once at Q nodes and
/// I = WK * zeta. Otherwise node row i*Q + k belongs to collocation point i
/// and I_i = sum_k WK(i, k) zeta(i*Q + k).
struct IntegralPlan {
  bool shared = false;
  std::size_t node_set = 0;
  std::size_t unknown = 0;
  std::size_t du_axis = 0;
  Tensor wk;  // N x Q, quadrature weight times kernel
  expr::Expression zeta;
  expr::Bindings zeta_constants;
  std::optional<Tensor> constant_value;  // N x 1 when zeta ignores u and du
};

namespace {

Tensor integrate_constant(const IntegralPlan& plan, Tensor zeta) {
  const std::size_t n = plan.wk.rows(), q = plan.wk.cols();
  if (plan.shared) return ad::matmul(plan.wk, as_column(std::move(zeta), q));
  return ad::row_sum(ad::mul(plan.wk, as_column(std::move(zeta), n * q).reshaped(n, q)));
}

}  // namespace

ResidualAssembler::ResidualAssembler(const prob::ProblemSpec& spec, Tensor points, std::size_t quad_order)
    : spec_(spec), points_(std::move(points)) {
  prob::validate(spec_);
  const std::size_t n = points_.rows(), d = spec_.dims();
  if (points_.cols() != d) throw ad::ShapeError("collocation points need one column per variable");
  const std::size_t order = spec_.quad_order.value_or(quad_order);
  if (order < 1 || order > quad::kMaxOrder) throw std::invalid_argument("quadrature order must be in [1, 512]");
  const auto rule = quad::gauss_legendre(order);
  const auto at_points = column_bindings(spec_.variables, points_);

  for (const auto& eq : spec_.equations) {
    sources_.push_back(as_column(eq.source.evaluate(at_points), n));
    reactions_.push_back(eq.reaction ? std::optional(as_column(eq.reaction->evaluate(at_points), n)) : std::nullopt);
    if (eq.lhs.kind == prob::LhsKind::Caputo && eq.kappa != 0.0 && !caputo_) {
      const auto xs = points_.col(0);
      caputo_ = frac::build_caputo(eq.lhs.alpha, xs.values());
    }
    std::vector<std::size_t> index;
    for (const auto& term : eq.integrals) {
      std::vector<quad::MappedRule> parts;
      for (const auto& ax : term.axes) {
        if (ax.kind == prob::LimitKind::Fredholm) {
          parts.push_back(quad::map_affine(rule, ax.lo, ax.hi));
        } else {
          const auto xs = points_.col(ax.axis);
          parts.push_back(quad::map_volterra(rule, xs.values(), ax.lo));
        }
      }
      const auto mapped = parts.size() == 1 ? parts.front() : quad::tensor_product(parts);
      if (mapped.blocks != 1 && mapped.blocks != n) throw std::logic_error("quadrature blocks do not match points");
      const std::size_t q = mapped.block_size(), m = term.axes.size();

      IntegralPlan plan;
      plan.unknown = term.unknown;
      plan.du_axis = term.axes.front().axis;
      plan.zeta = term.zeta;
      plan.shared = m == d && std::all_of(term.axes.begin(), term.axes.end(),
                                           [](const auto& a) { return a.kind == prob::LimitKind::Fredholm; });
      Tensor nodes;
      if (plan.shared) {
        nodes = Tensor(q, d);
        expr::Bindings kb = at_points;
        for (std::size_t j = 0; j < m; ++j) {
          Tensor row(1, q), col(q, 1);
          for (std::size_t k = 0; k < q; ++k) {
            row[k] = col[k] = mapped.point(0, k, j);
            nodes(k, term.axes[j].axis) = row[k];
          }
          kb[term.axes[j].variable] = row;
          plan.zeta_constants[term.axes[j].variable] = col;
        }
        Tensor kernel = ad::add(Tensor(n, q), term.kernel.evaluate(kb));
        Tensor w(1, q);
        for (std::size_t k = 0; k < q; ++k) w[k] = mapped.weight(0, k);
        plan.wk = ad::mul(kernel, w);
      } else {
        nodes = Tensor(n * q, d);
        std::vector<Tensor> ivars(m, Tensor(n * q, 1));
        std::vector<std::size_t> live;  // zero-weight rows sit on a collapsed interval
        plan.wk = Tensor(n, q);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t b = mapped.blocks == 1 ? 0 : i;
          for (std::size_t k = 0; k < q; ++k) {
            const std::size_t r = i * q + k;
            for (std::size_t a = 0; a < d; ++a) nodes(r, a) = points_(i, a);
            for (std::size_t j = 0; j < m; ++j) {
              nodes(r, term.axes[j].axis) = mapped.point(b, k, j);
              ivars[j][r] = mapped.point(b, k, j);
            }
            plan.wk[r] = mapped.weight(b, k);
            if (plan.wk[r] != 0.0) live.push_back(r);
          }
        }
        expr::Bindings kb;
        for (std::size_t a = 0; a < d; ++a) {
          Tensor c(live.size(), 1);
          for (std::size_t l = 0; l < live.size(); ++l) c[l] = points_(live[l] / q, a);
          kb[spec_.variables[a]] = std::move(c);
        }
        for (std::size_t j = 0; j < m; ++j) {
          Tensor c(live.size(), 1);
          for (std::size_t l = 0; l < live.size(); ++l) c[l] = ivars[j][live[l]];
          kb[term.axes[j].variable] = std::move(c);
          plan.zeta_constants[term.axes[j].variable] = ivars[j];
        }
        if (!live.empty()) {
          const Tensor kernel = as_column(term.kernel.evaluate(kb), live.size());
          for (std::size_t l = 0; l < live.size(); ++l) plan.wk[live[l]] *= kernel[l];
        }
      }
      if (!term.zeta.depends_on("u") && !term.zeta.depends_on("du")) {
        plan.constant_value = integrate_constant(plan, term.zeta.evaluate(plan.zeta_constants));
      } else {
        auto found = std::find(node_sets_.begin(), node_sets_.end(), nodes);
        plan.node_set = std::size_t(found - node_sets_.begin());
        if (found == node_sets_.end()) node_sets_.push_back(std::move(nodes));
      }
      index.push_back(plans_.size());
      plans_.push_back(std::move(plan));
    }
    plan_index_.push_back(std::move(index));
  }
}

ResidualAssembler::~ResidualAssembler() = default;
ResidualAssembler::ResidualAssembler(ResidualAssembler&&) noexcept = default;

std::vector<Var> ResidualAssembler::assemble(ad::Tape& tape, FieldModel& fields) const {
  if (fields.unknowns() != spec_.unknowns()) {
    throw std::invalid_argument("expected " + std::to_string(spec_.unknowns()) + " fields, got " +
                                std::to_string(fields.unknowns()));
  }
  const std::size_t n = points_.rows();
  std::map<std::size_t, Var> at_points;
  auto u_at_points = [&](std::size_t q) {
    auto it = at_points.find(q);
    if (it == at_points.end()) it = at_points.emplace(q, fields.value(tape, q, points_)).first;
    return it->second;
  };
  std::map<std::tuple<std::size_t, std::size_t, int, std::size_t>, Var> at_nodes;
  auto u_at_nodes = [&](std::size_t set, std::size_t q, int order, std::size_t axis) {
    const auto key = std::make_tuple(set, q, order, order == 0 ? 0 : axis);
    auto it = at_nodes.find(key);
    if (it == at_nodes.end()) {
      const Tensor& x = node_sets_[set];
      Var v = order == 0 ? fields.value(tape, q, x) : fields.derivative(tape, q, x, axis, order);
      it = at_nodes.emplace(key, v).first;
    }
    return it->second;
  };

  std::vector<Var> residuals;
  for (std::size_t e = 0; e < spec_.equations.size(); ++e) {
    const auto& eq = spec_.equations[e];
    Tensor fixed = ad::neg(sources_[e]);
    for (std::size_t p : plan_index_[e]) {
      if (plans_[p].constant_value) fixed = ad::sub(fixed, *plans_[p].constant_value);
    }
    Var r = tape.constant(std::move(fixed));
    if (eq.kappa != 0.0) {
      Var lhs;
      switch (eq.lhs.kind) {
        case prob::LhsKind::Identity: lhs = u_at_points(e); break;
        case prob::LhsKind::Derivative:
          lhs = eq.lhs.order == 0 ? u_at_points(e) : fields.derivative(tape, e, points_, 0, eq.lhs.order);
          break;
        case prob::LhsKind::Caputo: lhs = caputo_->apply(u_at_points(e)); break;
        case prob::LhsKind::PartialTime: lhs = fields.derivative(tape, e, points_, eq.lhs.axis, 1); break;
      }
      r = ad::add(eq.kappa == 1.0 ? lhs : ad::scale(lhs, eq.kappa), r);
    }
    if (reactions_[e]) r = ad::add(ad::mul(tape.constant(*reactions_[e]), u_at_points(e)), r);
    for (std::size_t p : plan_index_[e]) {
      const auto& plan = plans_[p];
      if (plan.constant_value) continue;
      std::map<std::string, Var, std::less<>> vars;
      if (plan.zeta.depends_on("u")) vars["u"] = u_at_nodes(plan.node_set, plan.unknown, 0, 0);
      if (plan.zeta.depends_on("du")) vars["du"] = u_at_nodes(plan.node_set, plan.unknown, 1, plan.du_axis);
      const Var z = plan.zeta.evaluate<Var>(vars, plan.zeta_constants);
      const Var wk = tape.constant(plan.wk);
      const std::size_t q = plan.wk.cols();
      const Var integral = plan.shared ? ad::matmul(wk, z) : ad::row_sum(ad::mul(wk, ad::reshape(z, n, q)));
      r = ad::sub(r, integral);
    }
    residuals.push_back(r);
  }
  return residuals;
}

std::vector<Var> assemble_residual(const prob::ProblemSpec& spec, FieldModel& fields, ad::Tape& tape,
                                   const Tensor& points, std::size_t quad_order) {
  const ResidualAssembler assembler(spec, points, quad_order);
  return assembler.assemble(tape, fields);
}

double exact_residual(const prob::ProblemSpec& spec, std::size_t quad_order, const Tensor& points) {
  auto fields = exact_fields(spec);
  prob::ProblemSpec fixed = spec;
  fixed.quad_order.reset();
  ad::Tape tape;
  double worst = 0.0;
  for (const auto& r : assemble_residual(fixed, *fields, tape, points, quad_order))
    worst = std::max(worst, ad::max_abs(r.value()));
  return worst;
}

SelfCheck self_check(const prob::ProblemSpec& spec, std::size_t quad_order, std::size_t n) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  const std::size_t d = spec.dims();
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& row : rows) {
    for (std::size_t a = 0; a < d; ++a) row[a] = spec.domain[a].lo + (spec.domain[a].hi - spec.domain[a].lo) * unit(rng);
  }
  std::sort(rows.begin(), rows.end());  // the Caputo matrix needs increasing abscissae
  Tensor x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) x(i, a) = rows[i][a];
  return {exact_residual(spec, quad_order, x), spec.weakly_singular ? 1e-2 : 1e-5};
}

prob::ProblemSpec load_and_check_problem(const std::string& path) {
  auto spec = prob::load_problem_file(path);
  if (spec.has_exact()) {
    const auto check = self_check(spec);
    if (!check.ok()) {
      std::ostringstream msg;
      msg << spec.id << ": exact solution leaves residual " << check.max_residual << " (limit " << check.tolerance
          << "); check the kernel, source and exact expressions";
      throw std::invalid_argument(msg.str());
    }
  }
  return spec;
}

// ------------------------------------------------------------ loss

Var compute_loss(std::span<const Var> residuals, std::span<const ConditionTerm> conditions,
                 const prob::LossWeights& lambda) {
  if (residuals.empty()) throw std::invalid_argument("compute_loss needs at least one residual");
  const std::size_t n = residuals.front().rows();
  Var total;
  for (const auto& r : residuals) {
    Var sq = ad::sum(ad::mul(r, r));
    total = total.valid() ? ad::add(total, sq) : sq;
  }
  total = ad::scale(total, 1.0 / double(n * residuals.size()));
  for (const auto& c : conditions) {
    const double w = c.kind == prob::ConditionKind::IC   ? lambda.ic
                     : c.kind == prob::ConditionKind::BC ? lambda.bc
                                                         : lambda.data;
    if (w == 0.0) continue;
    Var diff = ad::sub(c.predicted, ad::constant_like(c.predicted, c.target));
    total = ad::add(total, ad::scale(ad::mean(ad::mul(diff, diff)), w));
  }
  return total;
}

std::vector<ConditionTerm> condition_terms(const prob::ProblemSpec& spec, FieldModel& fields, ad::Tape& tape) {
  std::map<std::pair<int, std::size_t>, std::vector<const prob::Condition*>> groups;
  for (const auto& c : spec.conditions) groups[{int(c.kind), c.unknown}].push_back(&c);
  std::vector<ConditionTerm> out;
  for (const auto& [key, list] : groups) {
    Tensor x(list.size(), spec.dims()), target(list.size(), 1);
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t a = 0; a < spec.dims(); ++a) x(i, a) = list[i]->location[a];
      target[i] = list[i]->value;
    }
    out.push_back({prob::ConditionKind(key.first), fields.value(tape, key.second, x), std::move(target)});
  }
  return out;
}

// ------------------------------------------------------------ optimizer

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

struct Trial {
  double alpha = 0.0;
  double f = 0.0;
  double dg = 0.0;
  std::vector<double> x, g;
};

/// Minimizer of the cubic matching f and f' at both ends, or the bisection
/// point when that is unavailable or too close to either end.
double cubic_step(const Trial& lo, const Trial& hi) {
  const double a = lo.alpha, b = hi.alpha, mid = 0.5 * (a + b);
  if (!std::isfinite(hi.f) || !std::isfinite(hi.dg)) return mid;
  const double d1 = lo.dg + hi.dg - 3.0 * (lo.f - hi.f) / (a - b);
  const double rad = d1 * d1 - lo.dg * hi.dg;
  if (rad < 0.0) return mid;
  const double d2 = std::copysign(std::sqrt(rad), b - a);
  const double t = b - (b - a) * (hi.dg + d2 - d1) / (hi.dg - lo.dg + 2.0 * d2);
  const double lo_b = std::min(a, b), hi_b = std::max(a, b), margin = 0.1 * (hi_b - lo_b);
  if (!std::isfinite(t) || t < lo_b + margin || t > hi_b - margin) return mid;
  return t;
}

class LineSearch {
 public:
  LineSearch(const Objective& f, const LbfgsConfig& c, const std::vector<double>& x0, double f0,
             const std::vector<double>& d, double dg0)
      : f_(f), c_(c), x0_(x0), d_(d), f0_(f0), dg0_(dg0) {}

  std::optional<Trial> run(double alpha) {
    Trial prev{0.0, f0_, dg0_, {}, {}};
    for (std::size_t i = 0; evals_ < c_.max_line_search; ++i) {
      Trial cur = eval(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + c_.c1 * alpha * dg0_ || (i > 0 && cur.f >= prev.f))
        return zoom(prev, cur);
      if (std::abs(cur.dg) <= -c_.c2 * dg0_) return cur;
      if (cur.dg >= 0.0) return zoom(cur, prev);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return std::nullopt;
  }

 private:
  Trial eval(double alpha) {
    ++evals_;
    Trial t;
    t.alpha = alpha;
    t.x.resize(x0_.size());
    t.g.assign(x0_.size(), 0.0);
    for (std::size_t i = 0; i < x0_.size(); ++i) t.x[i] = x0_[i] + alpha * d_[i];
    try {
      t.f = f_(t.x, t.g);
    } catch (const ad::DomainError&) {
      t.f = std::numeric_limits<double>::infinity();
    }
    if (std::isfinite(t.f)) {
      t.dg = dot(t.g, d_);
      if (!std::isfinite(t.dg)) t.f = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(t.f)) t.dg = std::numeric_limits<double>::quiet_NaN();
    return t;
  }

  // lo satisfies sufficient decrease and has the lowest f seen; the
  // minimizer lies between lo and hi.
  std::optional<Trial> zoom(Trial lo, Trial hi) {
    while (evals_ < c_.max_line_search) {
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
      const double alpha = cubic_step(lo, hi);
      Trial cur = eval(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + c_.c1 * alpha * dg0_ || cur.f >= lo.f) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.dg) <= -c_.c2 * dg0_) return cur;
      if (cur.dg * (hi.alpha - lo.alpha) >= 0.0) hi = std::move(lo);
      lo = std::move(cur);
    }
    return std::nullopt;
  }

  const Objective& f_;
  const LbfgsConfig& c_;
  const std::vector<double>& x0_;
  const std::vector<double>& d_;
  double f0_, dg0_;
  std::size_t evals_ = 0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& f, std::vector<double> x0, const LbfgsConfig& config) {
  config.validate();
  LbfgsResult res;
  std::vector<double> x = std::move(x0), g(x.size(), 0.0);
  double fx = f(x, g);
  double gnorm = norm(g);
  if (!std::isfinite(fx) || !std::isfinite(gnorm))
    throw std::runtime_error("non-finite loss or gradient at iteration 0");
  res.history.push_back({0, fx, gnorm});
  res.x = x;
  res.loss = fx;
  res.grad_norm = gnorm;

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho;
  bool retried = false;
  std::size_t iter = 0;
  while (true) {
    if (gnorm <= config.grad_tol) {
      res.reason = StopReason::GradTol;
      break;
    }
    if (iter >= config.max_iters) {
      res.reason = StopReason::MaxIters;
      break;
    }
    // Two-loop recursion.
    std::vector<double> d(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
    std::vector<double> a(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      a[k] = rho[k] * dot(s_hist[k], d);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= a[k] * y_hist[k][i];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double b = rho[k] * dot(y_hist[k], d);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += (a[k] - b) * s_hist[k][i];
    }
    double dg = dot(g, d);
    if (!(dg < 0.0) || !std::isfinite(dg)) {
      s_hist.clear();
      y_hist.clear();
      rho.clear();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = -g[i];
      dg = -gnorm * gnorm;
    }
    // Without curvature information the step scale comes from the learning rate.
    const double alpha0 = s_hist.empty() ? config.learning_rate : 1.0;
    LineSearch search(f, config, x, fx, d, dg);
    auto step = search.run(alpha0);
    if (!step) {
      if (retried || s_hist.empty()) {
        res.reason = StopReason::LineSearchFailed;
        break;
      }
      retried = true;
      s_hist.clear();
      y_hist.clear();
      rho.clear();
      continue;
    }
    retried = false;
    res.steps.push_back({step->alpha, fx, step->f, dg, step->dg});
    std::vector<double> s(x.size()), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      s[i] = step->x[i] - x[i];
      y[i] = step->g[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * norm(s) * norm(y)) {
      if (s_hist.size() == config.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho.push_back(1.0 / sy);
    }
    x = std::move(step->x);
    g = std::move(step->g);
    fx = step->f;
    gnorm = norm(g);
    ++iter;
    res.history.push_back({iter, fx, gnorm});
    if (fx <= res.loss) {
      res.x = x;
      res.loss = fx;
      res.grad_norm = gnorm;
    }
    if (config.plateau_window > 0 && iter >= config.plateau_window) {
      const double past = res.history[iter - config.plateau_window].loss;
      if (std::abs(past - fx) <= config.plateau_rtol * std::max(std::abs(fx), std::numeric_limits<double>::min())) {
        res.reason = StopReason::Plateau;
        break;
      }
    }
  }
  res.iterations = iter;
  res.converged = res.reason != StopReason::LineSearchFailed;
  return res;
}

// ------------------------------------------------------------ training

json to_json(const BenchmarkResult& r, bool with_history) {
  json j = {{"problem", r.problem},        {"model", to_string(r.model)},    {"seed", r.seed},
            {"final_loss", r.final_loss},  {"mae", r.mae},                   {"iterations", r.iterations},
            {"wall_ms", r.wall_ms},        {"converged", r.converged},       {"stop_reason", r.stop_reason}};
  if (with_history) {
    json h = json::array();
    for (const auto& it : r.history) h.push_back({it.iter, it.loss, it.grad_norm});
    j["history"] = std::move(h);
  }
  return j;
}

BenchmarkResult benchmark_from_json(const json& j) {
  BenchmarkResult r;
  try {
    r.problem = j.at("problem").get<std::string>();
    r.model = model_from_string(j.at("model").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_loss = j.at("final_loss").get<double>();
    r.mae = j.at("mae").get<std::vector<double>>();
    r.iterations = j.at("iterations").get<std::size_t>();
    r.wall_ms = j.at("wall_ms").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.stop_reason = j.value("stop_reason", "");
    if (j.contains("history")) {
      for (const auto& h : j.at("history"))
        r.history.push_back({h.at(0).get<std::size_t>(), h.at(1).get<double>(), h.at(2).get<double>()});
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("benchmark result: ") + e.what());
  }
  return r;
}

net::MlpConfig model_config(const prob::ProblemSpec& spec, const TrainConfig& config, ModelKind model) {
  net::MlpConfig c = config.mlp;
  c.input_dim = spec.dims();
  c.output_dim = 1;
  c.residual = model == ModelKind::Risn;
  return c;
}

double loss_and_gradient(const ResidualAssembler& assembler, std::span<const net::ResidualMlpParams> params,
                         std::vector<double>* grad) {
  ad::Tape tape;
  NetworkFields fields(params, tape);
  const auto residuals = assembler.assemble(tape, fields);
  const auto conditions = condition_terms(assembler.spec(), fields, tape);
  const Var loss = compute_loss(residuals, conditions, assembler.spec().lambda);
  const double value = loss.value().item();
  if (grad) {
    const auto g = tape.backward(loss);
    grad->clear();
    for (std::size_t q = 0; q < params.size(); ++q) {
      for (const auto& v : fields.net(q).variables()) {
        const Tensor gv = g[v];
        grad->insert(grad->end(), gv.data().begin(), gv.data().end());
      }
    }
  }
  return value;
}

TrainOutput train(const prob::ProblemSpec& spec, const TrainConfig& config, ModelKind model) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto mlp = model_config(spec, config, model);
  TrainOutput out;
  for (std::size_t q = 0; q < spec.unknowns(); ++q) out.params.push_back(net::init_params(mlp, config.seed + 7919 * q));
  const ResidualAssembler assembler(spec, collocation_points(spec, config.n_train), config.quad_order);

  std::vector<double> x0;
  for (const auto& p : out.params) {
    const auto flat = p.flatten();
    x0.insert(x0.end(), flat.begin(), flat.end());
  }
  auto working = out.params;
  auto unpack = [&working](const std::vector<double>& x) {
    std::size_t off = 0;
    for (auto& p : working) {
      const std::size_t c = p.parameter_count();
      p.assign(std::span<const double>(x).subspan(off, c));
      off += c;
    }
  };
  const Objective objective = [&](const std::vector<double>& x, std::vector<double>& g) {
    unpack(x);
    return loss_and_gradient(assembler, working, &g);
  };
  const auto opt = lbfgs_minimize(objective, std::move(x0), config.optimizer);
  unpack(opt.x);
  out.params = working;

  auto& r = out.result;
  r.problem = spec.id;
  r.model = model;
  r.seed = config.seed;
  r.final_loss = opt.loss;
  r.iterations = opt.iterations;
  r.converged = opt.converged;
  r.stop_reason = to_string(opt.reason);
  r.history = opt.history;
  if (spec.has_exact() || spec.reference) r.mae = evaluate_mae(out.params, spec);
  const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
  r.wall_ms = std::max(elapsed.count(), 1e-3);
  return out;
}

double Reference::at(double t) const {
  if (x.empty()) throw std::logic_error("empty reference table");
  if (t <= x.front()) return u.front();
  if (t >= x.back()) return u.back();
  const auto it = std::upper_bound(x.begin(), x.end(), t);
  const std::size_t j = std::size_t(it - x.begin());
  const double w = (t - x[j - 1]) / (x[j] - x[j - 1]);
  return (1.0 - w) * u[j - 1] + w * u[j];
}

Reference helmholtz_reference(double k, const expr::Expression& forcing, double grid_step) {
  if (!(grid_step > 0.0) || grid_step > 0.01) throw std::invalid_argument("grid step must be in (0, 0.01]");
  if (!(k > 0.0)) throw std::invalid_argument("wave number must be positive");
  const auto m = std::size_t(std::llround(1.0 / grid_step));
  if (std::abs(double(m) * grid_step - 1.0) > 1e-9) throw std::invalid_argument("grid step must divide [0, 1]");
  Reference ref;
  ref.x.resize(m + 1);
  for (std::size_t i = 0; i <= m; ++i) ref.x[i] = double(i) / double(m);
  const Tensor f = as_column(forcing.evaluate({{"t", Tensor::column(ref.x)}}), m + 1);
  const double h = 1.0 / double(m);
  std::vector<double> wf(m + 1);
  for (std::size_t i = 0; i <= m; ++i) wf[i] = (i == 0 || i == m ? 0.5 * h : h) * f[i] / (2.0 * k);
  ref.u.assign(m + 1, 0.0);
  for (std::size_t j = 0; j <= m; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= m; ++i) acc += wf[i] * std::exp(-k * std::abs(ref.x[j] - ref.x[i]));
    ref.u[j] = acc;
  }
  return ref;
}

Tensor test_grid(const prob::ProblemSpec& spec, std::size_t per_axis) {
  if (per_axis < 2) throw std::invalid_argument("test grid needs at least 2 points per axis");
  const std::size_t d = spec.dims();
  std::size_t total = 1;
  for (std::size_t a = 0; a < d; ++a) total *= per_axis;
  Tensor x(total, d);
  for (std::size_t r = 0; r < total; ++r) {
    std::size_t rest = r;
    for (std::size_t a = d; a-- > 0;) {
      const auto iv = spec.domain[a];
      x(r, a) = iv.lo + (iv.hi - iv.lo) * (double(rest % per_axis) + 0.5) / double(per_axis);
      rest /= per_axis;
    }
  }
  return x;
}

namespace {

std::vector<double> reference_values(const prob::ProblemSpec& spec, std::size_t unknown, const Tensor& x,
                                     const std::optional<Reference>& table) {
  if (unknown >= spec.unknowns()) throw std::out_of_range("unknown index out of range");
  if (unknown < spec.exact.size() && spec.exact[unknown]) {
    return as_column(spec.exact[unknown]->evaluate(column_bindings(spec.variables, x)), x.rows()).values();
  }
  if (!table) throw std::invalid_argument(spec.id + ": no exact solution or reference for unknown " +
                                          std::to_string(unknown));
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = table->at(x(i, 0));
  return out;
}

std::optional<Reference> reference_table(const prob::ProblemSpec& spec) {
  if (!spec.reference || spec.has_exact()) return std::nullopt;
  return helmholtz_reference(spec.reference->k, spec.reference->forcing);
}

}  // namespace

std::vector<double> reference_values(const prob::ProblemSpec& spec, std::size_t unknown, const Tensor& x) {
  return reference_values(spec, unknown, x, reference_table(spec));
}

std::vector<double> evaluate_mae(const Predictor& predict, const prob::ProblemSpec& spec,
                                 std::optional<std::size_t> n_test) {
  if (!spec.has_exact() && !spec.reference) throw std::invalid_argument(spec.id + ": no exact solution or reference");
  const std::size_t per_axis = n_test.value_or(spec.dims() == 1 ? 200 : 50);
  const Tensor x = test_grid(spec, per_axis);
  const auto table = reference_table(spec);
  std::vector<double> mae;
  for (std::size_t q = 0; q < spec.unknowns(); ++q) {
    const auto ref = reference_values(spec, q, x, table);
    const auto got = predict(q, x);
    if (got.size() != ref.size()) throw ad::ShapeError("predictor returned the wrong number of values");
    double acc = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) acc += std::abs(got[i] - ref[i]);
    mae.push_back(acc / double(ref.size()));
  }
  return mae;
}

std::vector<double> evaluate_mae(std::span<const net::ResidualMlpParams> params, const prob::ProblemSpec& spec,
                                 std::optional<std::size_t> n_test) {
  if (params.size() != spec.unknowns()) throw std::invalid_argument("one network per unknown is required");
  return evaluate_mae([&](std::size_t q, const Tensor& x) { return net::forward(params[q], x).values(); }, spec,
                      n_test);
}

// ------------------------------------------------------------ sweep

std::vector<SweepRow> sensitivity_sweep(const prob::ProblemSpec& spec, std::span<const std::size_t> depths,
                                        std::span<const double> lrs, std::span<const std::uint64_t> seeds,
                                        const TrainConfig& base) {
  if (depths.empty() || lrs.empty() || seeds.empty()) throw std::invalid_argument("sweep lists must be non-empty");
  std::vector<SweepRow> rows;
  for (std::size_t depth : depths) {
    for (double lr : lrs) {
      for (std::uint64_t seed : seeds) {
        for (ModelKind model : {ModelKind::Risn, ModelKind::Pinn}) {
          SweepRow row;
          row.depth = depth;
          row.lr = lr;
          row.seed = seed;
          row.model = model;
          try {
            TrainConfig c = base;
            c.mlp.hidden_layers = depth;
            c.optimizer.learning_rate = lr;
            c.seed = seed;
            const auto out = train(spec, c, model);
            const auto& m = out.result.mae;
            row.mae = m.empty() ? std::numeric_limits<double>::quiet_NaN()
                                : std::accumulate(m.begin(), m.end(), 0.0) / double(m.size());
            row.final_loss = out.result.final_loss;
            row.history = out.result.history;
          } catch (const std::exception& e) {
            row.mae = std::numeric_limits<double>::quiet_NaN();
            row.final_loss = std::numeric_limits<double>::quiet_NaN();
            row.error = e.what();
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

}  // namespace risn::solve
