#include "risn/problems.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace risn::prob {

using expr::Expression;
using nlohmann::json;
using NameSet = std::set<std::string, std::less<>>;

bool ProblemSpec::has_exact() const {
  return !exact.empty() && std::all_of(exact.begin(), exact.end(), [](const auto& e) { return e.has_value(); });
}

namespace {

NameSet names(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

NameSet kernel_names(const ProblemSpec& s, const IntegralTerm& term) {
  NameSet out = names(s.variables);
  for (const auto& a : term.axes) out.insert(a.variable);
  return out;
}

NameSet zeta_names(const IntegralTerm& term) {
  NameSet out{"u", "du"};
  for (const auto& a : term.axes) out.insert(a.variable);
  return out;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_subset(const Expression& e, const NameSet& allowed, const std::string& where) {
  for (const auto& v : e.free_variables())
    require(allowed.contains(v), where + ": variable '" + v + "' is not bound here");
}

std::vector<std::string> default_variables(std::size_t dims) {
  static const std::vector<std::string> all{"x", "y", "z"};
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(dims, 3))};
}

std::string default_integration_variable(std::size_t index, std::size_t count) {
  static const std::vector<std::string> one{"t"}, two{"s", "t"}, three{"r", "s", "t"};
  const auto& v = count == 1 ? one : count == 2 ? two : three;
  return index < v.size() ? v[index] : "t" + std::to_string(index);
}

}  // namespace

void validate(const ProblemSpec& s) {
  const std::string id = s.id.empty() ? "problem" : s.id;
  require(!s.variables.empty() && s.variables.size() <= 3, id + ": 1 to 3 collocation variables required");
  require(names(s.variables).size() == s.variables.size(), id + ": duplicate collocation variable");
  require(s.domain.size() == s.dims(), id + ": domain needs one interval per variable");
  for (const auto& iv : s.domain) require(iv.lo < iv.hi, id + ": empty domain interval");
  require(s.exclude_lower.size() == s.dims(), id + ": exclude_lower needs one flag per variable");
  require(!s.equations.empty(), id + ": at least one equation required");
  const std::size_t m = s.unknowns();
  const NameSet coll = names(s.variables);

  for (std::size_t q = 0; q < m; ++q) {
    const auto& eq = s.equations[q];
    const std::string where = id + ": equations[" + std::to_string(q) + "]";
    switch (eq.lhs.kind) {
      case LhsKind::Identity:
        break;
      case LhsKind::Derivative: {
        require(eq.lhs.order >= 0 && eq.lhs.order <= 2, where + ": derivative order must be 0, 1 or 2");
        const auto count = std::count_if(s.conditions.begin(), s.conditions.end(), [&](const Condition& c) {
          return c.unknown == q && c.kind != ConditionKind::Data;
        });
        require(count >= eq.lhs.order, where + ": derivative of order " + std::to_string(eq.lhs.order) +
                                           " needs at least that many conditions (insufficient conditions)");
        break;
      }
      case LhsKind::Caputo:
        require(eq.lhs.alpha > 0.0 && eq.lhs.alpha <= 1.0, where + ": Caputo order must lie in (0, 1]");
        require(s.dims() == 1, where + ": Caputo operator needs a 1-D domain");
        break;
      case LhsKind::PartialTime:
        require(eq.lhs.axis < s.dims(), where + ": time axis out of range");
        break;
    }
    require_subset(eq.source, coll, where + ".source");
    if (eq.reaction) require_subset(*eq.reaction, coll, where + ".reaction");
    for (std::size_t k = 0; k < eq.integrals.size(); ++k) {
      const auto& term = eq.integrals[k];
      const std::string tw = where + ".integrals[" + std::to_string(k) + "]";
      require(!term.axes.empty() && term.axes.size() <= s.dims(), tw + ": needs 1 to dims integrated axes");
      require(term.unknown < m, tw + ": unknown index out of range");
      std::set<std::size_t> seen_axes;
      NameSet seen_vars;
      for (const auto& a : term.axes) {
        require(a.axis < s.dims(), tw + ": axis out of range");
        require(seen_axes.insert(a.axis).second, tw + ": axis integrated twice");
        require(!coll.contains(a.variable), tw + ": integration variable '" + a.variable + "' shadows a collocation variable");
        require(a.variable != "u" && a.variable != "du", tw + ": integration variable may not be named u or du");
        require(seen_vars.insert(a.variable).second, tw + ": duplicate integration variable");
        if (a.kind == LimitKind::Fredholm) require(a.lo < a.hi, tw + ": empty Fredholm interval");
        if (a.kind == LimitKind::Volterra) require(a.lo <= s.domain[a.axis].lo, tw + ": Volterra lower limit above the domain");
      }
      require_subset(term.kernel, kernel_names(s, term), tw + ".kernel");
      require_subset(term.zeta, zeta_names(term), tw + ".zeta");
    }
  }
  require(s.exact.empty() || s.exact.size() == m, id + ": exact needs one entry per unknown");
  for (const auto& e : s.exact)
    if (e) require_subset(*e, coll, id + ": exact");
  for (const auto& c : s.conditions) {
    require(c.unknown < m, id + ": condition unknown out of range");
    require(c.location.size() == s.dims(), id + ": condition location needs one coordinate per variable");
  }
  require(s.lambda.ic >= 0 && s.lambda.bc >= 0 && s.lambda.data >= 0, id + ": loss weights must be non-negative");
  if (s.quad_order) require(*s.quad_order >= 1 && *s.quad_order <= 512, id + ": quadrature order must be in [1, 512]");
  if (s.reference) {
    require(s.reference->k > 0, id + ": Helmholtz wavenumber must be positive");
    require_subset(s.reference->forcing, {"t"}, id + ": reference forcing");
  }
}

// ---------------------------------------------------------------- registry

namespace {

struct Builder {
  ProblemSpec s;

  Builder(std::string id, std::string title, std::vector<std::string> vars, std::vector<Interval> domain) {
    s.id = std::move(id);
    s.title = std::move(title);
    s.variables = std::move(vars);
    s.domain = std::move(domain);
    s.exclude_lower.assign(s.variables.size(), false);
  }

  Expression coll(const std::string& text) const { return Expression::parse(text, names(s.variables)); }

  EquationSpec& equation(double kappa, const std::string& source, LhsOperator lhs = {}) {
    EquationSpec eq;
    eq.kappa = kappa;
    eq.lhs = lhs;
    eq.source = coll(source);
    s.equations.push_back(std::move(eq));
    return s.equations.back();
  }

  void integral(EquationSpec& eq, std::vector<IntegralAxis> axes, const std::string& kernel,
                const std::string& zeta = "u", std::size_t unknown = 0) {
    IntegralTerm term;
    term.axes = std::move(axes);
    term.unknown = unknown;
    term.kernel = Expression::parse(kernel, kernel_names(s, term));
    term.zeta = Expression::parse(zeta, zeta_names(term));
    eq.integrals.push_back(std::move(term));
  }

  void exact(const std::vector<std::string>& texts) {
    for (const auto& t : texts) s.exact.emplace_back(coll(t));
  }

  // Condition value taken from the exact solution of `unknown`.
  void condition_from_exact(ConditionKind kind, std::size_t unknown, std::vector<double> at) {
    std::map<std::string, double, std::less<>> b;
    for (std::size_t i = 0; i < at.size(); ++i) b[s.variables[i]] = at[i];
    s.conditions.push_back({kind, unknown, at, s.exact.at(unknown)->evaluate_scalar(b)});
  }

  ProblemSpec done() {
    validate(s);
    return std::move(s);
  }
};

IntegralAxis volterra(std::size_t axis = 0, std::string var = "t") {
  return {axis, LimitKind::Volterra, 0.0, 0.0, std::move(var)};
}
IntegralAxis fredholm(double lo, double hi, std::size_t axis = 0, std::string var = "t") {
  return {axis, LimitKind::Fredholm, lo, hi, std::move(var)};
}

const std::vector<std::string> kX{"x"};
const Interval kUnit{0.0, 1.0};

std::vector<ProblemSpec> build_registry() {
  std::vector<ProblemSpec> r;

  {
    Builder b("P01", "1D Second-kind Linear Volterra Integral Equation", kX, {kUnit});
    b.integral(b.equation(1, "2*exp(x) - 1 + x^3/6"), {volterra()}, "t - x");
    b.exact({"x + exp(x)"});
    r.push_back(b.done());
  }
  {
    Builder b("P02", "1D Second-kind Nonlinear Volterra Integral Equation", kX, {kUnit});
    b.integral(b.equation(1, "exp(x) - (exp(2*x) - 1)/2"), {volterra()}, "1", "u^2");
    b.exact({"exp(x)"});
    r.push_back(b.done());
  }
  {
    Builder b("P03", "1D Second-kind Volterra-Fredholm Integral Equation", kX, {kUnit});
    auto& eq = b.equation(1, "2*exp(x) - x/2 - 7/3 + x^3/6 + x*e");
    b.integral(eq, {fredholm(0, 1)}, "t - x");
    b.integral(eq, {volterra()}, "t - x");
    b.exact({"x + exp(x)"});
    r.push_back(b.done());
  }
  {
    Builder b("P04", "1D Second-kind Volterra-Fredholm Integral Equation", kX, {kUnit});
    auto& eq = b.equation(1, "exp(x) - 1 - x");
    b.integral(eq, {fredholm(0, 1)}, "x");
    b.integral(eq, {volterra()}, "1");
    b.exact({"x*exp(x)"});
    r.push_back(b.done());
  }
  {
    Builder b("P05", "1D Linear Abel Integral Equation", kX, {kUnit});
    b.integral(b.equation(0, "4/3*x^(3/2)"), {volterra()}, "-1/sqrt(x - t)");
    b.exact({"x"});
    b.s.exclude_lower = {true};
    b.s.weakly_singular = true;
    r.push_back(b.done());
  }
  {
    Builder b("P06", "1D Nonlinear Abel Integral Equation", kX, {kUnit});
    b.integral(b.equation(0, "32/35*x^(7/2)"), {volterra()}, "-1/sqrt(x - t)", "u^3");
    b.exact({"x"});
    b.s.exclude_lower = {true};
    b.s.weakly_singular = true;
    b.s.pinn_unsolvable = true;
    r.push_back(b.done());
  }
  {
    Builder b("P07", "2D Second-kind Fredholm Integral Equation", {"x", "y"}, {kUnit, {0.0, 2.0}});
    b.integral(b.equation(1, "x^2*y + 4/9*x"), {fredholm(0, 1, 0, "s"), fredholm(0, 2, 1, "t")}, "-x*t/2");
    b.exact({"x^2*y"});
    r.push_back(b.done());
  }
  {
    Builder b("P08", "2D Second-kind Volterra Integral Equation", {"x", "y"}, {kUnit, {0.0, 2.0}});
    b.integral(b.equation(1,
                          "(x + y - 2)*exp(2*x + 2*y) + (2 - y)*exp(x + 2*y) + (2 - x)*exp(2*x + y) + x + y - "
                          "2*exp(x + y)"),
               {volterra(0, "s"), volterra(1, "t")}, "-exp(x + y + s + t)");
    b.exact({"x + y"});
    b.s.quad_order = 12;  // 2-D Volterra blocks cost N*q^2 network evaluations
    r.push_back(b.done());
  }
  {
    Builder b("P09", "System of Second-kind Fredholm Integral Equations", kX, {{0.0, std::numbers::pi}});
    const auto span = fredholm(0, std::numbers::pi);
    auto& e1 = b.equation(1, "sin(x) + cos(x) - 4*x");
    b.integral(e1, {span}, "x", "u", 0);
    b.integral(e1, {span}, "x", "u", 1);
    auto& e2 = b.equation(1, "sin(x) - cos(x) - 4");
    b.integral(e2, {span}, "1", "u", 0);
    b.integral(e2, {span}, "1", "u", 1);
    b.exact({"sin(x) + cos(x)", "sin(x) - cos(x)"});
    r.push_back(b.done());
  }
  {
    Builder b("P10", "System of Second-kind Volterra Integral Equations", kX, {kUnit});
    auto& e1 = b.equation(1, "x - x^4/6");
    b.integral(e1, {volterra()}, "(x - t)^2", "u", 0);
    b.integral(e1, {volterra()}, "x - t", "u", 1);
    auto& e2 = b.equation(1, "x^2 - x^5/12");
    b.integral(e2, {volterra()}, "(x - t)^3", "u", 0);
    b.integral(e2, {volterra()}, "(x - t)^2", "u", 1);
    b.exact({"x", "x^2"});
    r.push_back(b.done());
  }
  {
    Builder b("P11", "System of First-kind Volterra Integral Equations", kX, {kUnit});
    auto& e1 = b.equation(0, "x^2/2 + x^3/2 + x^4/12");
    b.integral(e1, {volterra()}, "-(x - t - 1)", "u", 0);
    b.integral(e1, {volterra()}, "-(x - t + 1)", "u", 1);
    auto& e2 = b.equation(0, "3/2*x^2 - x^3/6 + x^4/12");
    b.integral(e2, {volterra()}, "-(x - t + 1)", "u", 0);
    b.integral(e2, {volterra()}, "-(x - t - 1)", "u", 1);
    b.exact({"1 + x", "1 + x^2"});
    r.push_back(b.done());
  }
  const LhsOperator second{LhsKind::Derivative, 2, 1.0, 1};
  const LhsOperator first{LhsKind::Derivative, 1, 1.0, 1};
  auto two_bcs = [](Builder& b) {
    b.condition_from_exact(ConditionKind::BC, 0, {0.0});
    b.condition_from_exact(ConditionKind::BC, 0, {1.0});
  };
  {
    Builder b("P12", "Second-kind Fredholm Ordinary Integro-Differential Equation", kX, {kUnit});
    b.integral(b.equation(1, "1 - e + exp(x)", second), {fredholm(0, 1)}, "1");
    b.exact({"exp(x)"});
    two_bcs(b);
    r.push_back(b.done());
  }
  {
    Builder b("P13", "Second-kind Fredholm Ordinary Integro-Differential Equation", kX, {kUnit});
    b.integral(b.equation(1, "1/2 - e + exp(x)", second), {fredholm(0, 1)}, "1");
    b.exact({"exp(x) + x"});
    two_bcs(b);
    b.s.pinn_unsolvable = true;
    r.push_back(b.done());
  }
  {
    Builder b("P14", "First-kind Volterra Ordinary Integro-Differential Equation", kX, {kUnit});
    b.integral(b.equation(0, "exp(x) + x^2/2 - 1"), {volterra()}, "-(x - t + 1)", "du");
    b.exact({"cosh(x) + x"});
    two_bcs(b);
    r.push_back(b.done());
  }
  {
    Builder b("P15", "First-kind Volterra Ordinary Integro-Differential Equation", kX, {kUnit});
    b.integral(b.equation(0, "7/8 + x^2/4 - cos(x) + cos(2*x)/8"), {volterra()}, "-(x - t)", "u^2 + du");
    b.exact({"sin(x)"});
    two_bcs(b);
    b.s.pinn_unsolvable = true;
    r.push_back(b.done());
  }
  const LhsOperator dt{LhsKind::PartialTime, 0, 1.0, 1};
  struct Pide {
    const char* id;
    const char* title;
    const char* source;
    const char* kernel;
    const char* zeta;
    bool singular_source;
  };
  for (const Pide& p : {Pide{"P16", "Fredholm Partial Integro-Differential Equation",
                             "x*cos(t*x) + (-1 + cos(x))/x", "1", "u", true},
                        Pide{"P17", "Fredholm Partial Integro-Differential Equation",
                             "x*cos(t*x) - x*sin(t) + x*sin(t)*cos(x)", "x^2*sin(t)", "u", false},
                        Pide{"P18", "Nonlinear Fredholm Partial Integro-Differential Equation",
                             "x*cos(t*x) + (cos(x)*sin(x) - x)/(2*x)", "1", "u^2", true}}) {
    Builder b(p.id, p.title, {"x", "t"}, {kUnit, kUnit});
    b.integral(b.equation(1, p.source, dt), {fredholm(0, 1, 1, "s")}, p.kernel, p.zeta);
    b.exact({"sin(x*t)"});
    b.s.exclude_lower = {p.singular_source, false};
    // Initial line t = 0 sampled on the collocation x-grid of the default run.
    for (int j = 0; j < 8; ++j) b.condition_from_exact(ConditionKind::IC, 0, {j / 7.0, 0.0});
    r.push_back(b.done());
  }
  {
    Builder b("P19", "System of Volterra Integro-Differential Equations", kX, {kUnit});
    auto& e1 = b.equation(1, "1 + x - x^2/2 + x^3/3", first);
    b.integral(e1, {volterra()}, "x - t", "u", 0);
    b.integral(e1, {volterra()}, "x - t + 1", "u", 1);
    auto& e2 = b.equation(1, "-1 - 3*x - 3/2*x^2 - x^3/3", first);
    b.integral(e2, {volterra()}, "x - t + 1", "u", 0);
    b.integral(e2, {volterra()}, "x - t", "u", 1);
    b.exact({"1 + x + x^2", "1 - x - x^2"});
    b.condition_from_exact(ConditionKind::IC, 0, {0.0});
    b.condition_from_exact(ConditionKind::IC, 1, {0.0});
    r.push_back(b.done());
  }
  {
    Builder b("P20", "Fractional Integro-Differential Equation", kX, {kUnit});
    auto& eq = b.equation(1, "6*x^2.25/gamma(3.25)", {LhsKind::Caputo, 0, 0.75, 1});
    eq.reaction = b.coll("exp(x)*x^2/5");
    b.integral(eq, {volterra()}, "exp(x)*t");
    b.exact({"x^3"});
    b.condition_from_exact(ConditionKind::IC, 0, {0.0});
    r.push_back(b.done());
  }
  {
    Builder b("HELM", "Helmholtz-type Fredholm Integral Equation", kX, {kUnit});
    b.integral(b.equation(1, "0"), {fredholm(0, 1)}, "exp(-5*abs(x - t))/10", "sin(pi*t)");
    b.s.exact = {std::nullopt};
    b.s.reference = HelmholtzReference{5.0, Expression::parse("sin(pi*t)", {"t"})};
    r.push_back(b.done());
  }
  return r;
}

const std::vector<ProblemSpec>& registry() {
  static const std::vector<ProblemSpec> r = build_registry();
  return r;
}

}  // namespace

const std::vector<std::string>& problem_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& p : registry()) v.push_back(p.id);
    return v;
  }();
  return ids;
}

const ProblemSpec& get_problem(const std::string& id) {
  for (const auto& p : registry())
    if (p.id == id) return p;
  std::string msg = "unknown problem id '" + id + "'; available:";
  for (const auto& v : problem_ids()) msg += " " + v;
  throw std::out_of_range(msg);
}

// ---------------------------------------------------------------- JSON

namespace {

const char* lhs_name(LhsKind k) {
  switch (k) {
    case LhsKind::Identity: return "identity";
    case LhsKind::Derivative: return "derivative";
    case LhsKind::Caputo: return "caputo";
    case LhsKind::PartialTime: return "partial_time";
  }
  return "identity";
}

const char* condition_name(ConditionKind k) {
  switch (k) {
    case ConditionKind::IC: return "ic";
    case ConditionKind::BC: return "bc";
    case ConditionKind::Data: return "data";
  }
  return "bc";
}

json equation_json(const EquationSpec& eq) {
  json j;
  j["kappa"] = eq.kappa;
  json lhs{{"op", lhs_name(eq.lhs.kind)}};
  if (eq.lhs.kind == LhsKind::Derivative) lhs["order"] = eq.lhs.order;
  if (eq.lhs.kind == LhsKind::Caputo) lhs["alpha"] = eq.lhs.alpha;
  if (eq.lhs.kind == LhsKind::PartialTime) lhs["axis"] = eq.lhs.axis;
  j["lhs"] = lhs;
  if (eq.reaction) j["reaction"] = eq.reaction->source();
  j["source"] = eq.source.source();
  j["integrals"] = json::array();
  for (const auto& term : eq.integrals) {
    json limits = json::array();
    for (const auto& a : term.axes) {
      json l{{"axis", a.axis}, {"type", a.kind == LimitKind::Fredholm ? "fredholm" : "volterra"},
             {"lower", a.lo}, {"variable", a.variable}};
      if (a.kind == LimitKind::Fredholm) l["upper"] = a.hi;
      limits.push_back(l);
    }
    j["integrals"].push_back(
        {{"limits", limits}, {"kernel", term.kernel.source()}, {"zeta", term.zeta.source()}, {"unknown", term.unknown}});
  }
  return j;
}

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Field {
  const json& j;
  std::string path;

  Field at(const std::string& key) const {
    if (!j.is_object()) throw SchemaError(path + ": expected an object");
    if (!j.contains(key)) throw SchemaError("missing field '" + join(key) + "'");
    return {j.at(key), join(key)};
  }
  Field at(std::size_t i) const { return {j.at(i), path + "[" + std::to_string(i) + "]"}; }
  bool has(const std::string& key) const { return j.is_object() && j.contains(key) && !j.at(key).is_null(); }
  std::string join(const std::string& key) const { return path.empty() ? key : path + "." + key; }

  double number() const {
    if (!j.is_number()) throw SchemaError("field '" + path + "' must be a number");
    return j.get<double>();
  }
  std::size_t index() const {
    if (!j.is_number_integer() || j.get<long long>() < 0)
      throw SchemaError("field '" + path + "' must be a non-negative integer");
    return j.get<std::size_t>();
  }
  bool boolean() const {
    if (!j.is_boolean()) throw SchemaError("field '" + path + "' must be a boolean");
    return j.get<bool>();
  }
  std::string text() const {
    if (!j.is_string()) throw SchemaError("field '" + path + "' must be a string");
    return j.get<std::string>();
  }
  const json& array() const {
    if (!j.is_array()) throw SchemaError("field '" + path + "' must be an array");
    return j;
  }
  Expression expression(const NameSet& allowed) const {
    if (j.is_number()) return Expression::constant(j.get<double>());
    const std::string t = text();
    try {
      return Expression::parse(t, allowed);
    } catch (const expr::ParseError& e) {
      throw SchemaError("field '" + path + "': " + e.what());
    }
  }
};

LhsOperator parse_lhs(const Field& f) {
  LhsOperator lhs;
  const std::string op = f.at("op").text();
  if (op == "identity") {
    lhs.kind = LhsKind::Identity;
  } else if (op == "derivative") {
    lhs.kind = LhsKind::Derivative;
    lhs.order = static_cast<int>(f.at("order").index());
  } else if (op == "caputo") {
    lhs.kind = LhsKind::Caputo;
    lhs.alpha = f.at("alpha").number();
  } else if (op == "partial_time") {
    lhs.kind = LhsKind::PartialTime;
    if (f.has("axis")) lhs.axis = f.at("axis").index();
  } else {
    throw SchemaError("field '" + f.join("op") + "': unknown operator '" + op + "'");
  }
  return lhs;
}

EquationSpec parse_equation(const Field& f, const ProblemSpec& s) {
  EquationSpec eq;
  eq.kappa = f.has("kappa") ? f.at("kappa").number() : 1.0;
  if (f.has("lhs")) eq.lhs = parse_lhs(f.at("lhs"));
  const NameSet coll = names(s.variables);
  eq.source = f.at("source").expression(coll);
  if (f.has("reaction")) eq.reaction = f.at("reaction").expression(coll);
  if (f.has("integrals")) {
    const auto& arr = f.at("integrals").array();
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const Field t = f.at("integrals").at(k);
      IntegralTerm term;
      const auto& limits = t.at("limits").array();
      for (std::size_t a = 0; a < limits.size(); ++a) {
        const Field l = t.at("limits").at(a);
        IntegralAxis ax;
        ax.axis = l.has("axis") ? l.at("axis").index() : a;
        const std::string type = l.at("type").text();
        if (type == "fredholm") {
          ax.kind = LimitKind::Fredholm;
          ax.lo = l.at("lower").number();
          ax.hi = l.at("upper").number();
        } else if (type == "volterra") {
          ax.kind = LimitKind::Volterra;
          ax.lo = l.has("lower") ? l.at("lower").number() : 0.0;
          ax.hi = ax.lo;
        } else {
          throw SchemaError("field '" + l.join("type") + "': expected 'fredholm' or 'volterra'");
        }
        ax.variable = l.has("variable") ? l.at("variable").text() : default_integration_variable(a, limits.size());
        term.axes.push_back(ax);
      }
      term.unknown = t.has("unknown") ? t.at("unknown").index() : 0;
      term.kernel = t.at("kernel").expression(kernel_names(s, term));
      term.zeta = t.has("zeta") ? t.at("zeta").expression(zeta_names(term)) : Expression::parse("u", {"u"});
      eq.integrals.push_back(std::move(term));
    }
  }
  return eq;
}

}  // namespace

json to_json(const ProblemSpec& s) {
  json j;
  j["id"] = s.id;
  j["title"] = s.title;
  j["kind"] = s.unknowns() == 1 ? "equation" : "system";
  j["variables"] = s.variables;
  j["domain"] = json::array();
  for (const auto& iv : s.domain) j["domain"].push_back({iv.lo, iv.hi});
  j["exclude_lower"] = s.exclude_lower;
  if (s.unknowns() == 1) {
    j.update(equation_json(s.equations[0]));
  } else {
    j["equations"] = json::array();
    for (const auto& eq : s.equations) j["equations"].push_back(equation_json(eq));
  }
  j["conditions"] = json::array();
  for (const auto& c : s.conditions)
    j["conditions"].push_back({{"kind", condition_name(c.kind)}, {"unknown", c.unknown}, {"at", c.location}, {"value", c.value}});
  if (!s.exact.empty()) {
    json ex = json::array();
    for (const auto& e : s.exact) ex.push_back(e ? json(e->source()) : json(nullptr));
    j["exact"] = s.unknowns() == 1 ? ex[0] : ex;
  }
  if (s.reference) j["reference"] = {{"type", "helmholtz"}, {"k", s.reference->k}, {"forcing", s.reference->forcing.source()}};
  j["lambda"] = {{"ic", s.lambda.ic}, {"bc", s.lambda.bc}, {"data", s.lambda.data}};
  if (s.quad_order) j["quad_order"] = *s.quad_order;
  j["pinn_unsolvable"] = s.pinn_unsolvable;
  j["weakly_singular"] = s.weakly_singular;
  return j;
}

ProblemSpec problem_from_json(const json& j) {
  const Field root{j, ""};
  ProblemSpec s;
  try {
    if (!j.is_object()) throw SchemaError("problem file must contain a JSON object");
    s.id = root.has("id") ? root.at("id").text() : "custom";
    s.title = root.has("title") ? root.at("title").text() : s.id;
    const auto& dom = root.at("domain").array();
    for (std::size_t i = 0; i < dom.size(); ++i) {
      const Field d = root.at("domain").at(i);
      if (!d.j.is_array() || d.j.size() != 2) throw SchemaError("field '" + d.path + "' must be [lower, upper]");
      s.domain.push_back({d.at(0).number(), d.at(1).number()});
    }
    if (root.has("variables")) {
      for (const auto& v : root.at("variables").array()) s.variables.push_back(v.get<std::string>());
    } else {
      s.variables = default_variables(s.domain.size());
    }
    s.exclude_lower.assign(s.variables.size(), false);
    if (root.has("exclude_lower")) {
      const auto& ex = root.at("exclude_lower").array();
      s.exclude_lower.clear();
      for (std::size_t i = 0; i < ex.size(); ++i) s.exclude_lower.push_back(root.at("exclude_lower").at(i).boolean());
    }
    const std::string kind = root.has("kind") ? root.at("kind").text() : "equation";
    if (kind == "equation") {
      s.equations.push_back(parse_equation(root, s));
    } else if (kind == "system") {
      const auto& eqs = root.at("equations").array();
      for (std::size_t q = 0; q < eqs.size(); ++q) s.equations.push_back(parse_equation(root.at("equations").at(q), s));
    } else {
      throw SchemaError("field 'kind' must be 'equation' or 'system'");
    }
    const NameSet coll = names(s.variables);
    if (root.has("conditions")) {
      const auto& cs = root.at("conditions").array();
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const Field c = root.at("conditions").at(i);
        Condition cond;
        const std::string k = c.at("kind").text();
        if (k == "ic") cond.kind = ConditionKind::IC;
        else if (k == "bc") cond.kind = ConditionKind::BC;
        else if (k == "data") cond.kind = ConditionKind::Data;
        else throw SchemaError("field '" + c.join("kind") + "' must be 'ic', 'bc' or 'data'");
        cond.unknown = c.has("unknown") ? c.at("unknown").index() : 0;
        const auto& at = c.at("at").array();
        std::map<std::string, double, std::less<>> b;
        for (std::size_t a = 0; a < at.size(); ++a) {
          cond.location.push_back(c.at("at").at(a).number());
          if (a < s.variables.size()) b[s.variables[a]] = cond.location.back();
        }
        cond.value = c.at("value").expression(coll).evaluate_scalar(b);
        s.conditions.push_back(cond);
      }
    }
    if (root.has("exact")) {
      const Field ex = root.at("exact");
      if (ex.j.is_array()) {
        for (std::size_t i = 0; i < ex.j.size(); ++i) {
          const Field e = ex.at(i);
          s.exact.push_back(e.j.is_null() ? std::nullopt : std::optional<Expression>(e.expression(coll)));
        }
      } else {
        s.exact.emplace_back(ex.expression(coll));
      }
    } else {
      s.exact.assign(s.unknowns(), std::nullopt);
    }
    if (root.has("reference")) {
      const Field r = root.at("reference");
      if (r.at("type").text() != "helmholtz") throw SchemaError("field 'reference.type' must be 'helmholtz'");
      s.reference = HelmholtzReference{r.at("k").number(), r.at("forcing").expression({"t"})};
    }
    if (root.has("lambda")) {
      const Field l = root.at("lambda");
      if (l.has("ic")) s.lambda.ic = l.at("ic").number();
      if (l.has("bc")) s.lambda.bc = l.at("bc").number();
      if (l.has("data")) s.lambda.data = l.at("data").number();
    }
    if (root.has("quad_order")) s.quad_order = root.at("quad_order").index();
    if (root.has("pinn_unsolvable")) s.pinn_unsolvable = root.at("pinn_unsolvable").boolean();
    if (root.has("weakly_singular")) s.weakly_singular = root.at("weakly_singular").boolean();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed problem: ") + e.what());
  }
  validate(s);
  return s;
}

ProblemSpec load_problem_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read problem file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return problem_from_json(j);
}

}  // namespace risn::prob
