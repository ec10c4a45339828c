#include "risn/expression.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <utility>

#include "risn/autodiff/dual.hpp"
#include "risn/quadrature.hpp"

namespace risn::expr {

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::invalid_argument(what + " at offset " + std::to_string(offset)), offset_(offset) {}

namespace {

using NodePtr = std::shared_ptr<const Node>;

struct FuncName {
  std::string_view name;
  Func func;
};

constexpr FuncName kFunctions[] = {
    {"neg", Func::Neg},   {"sin", Func::Sin},   {"cos", Func::Cos}, {"tan", Func::Tan},
    {"sinh", Func::Sinh}, {"cosh", Func::Cosh}, {"tanh", Func::Tanh}, {"exp", Func::Exp},
    {"log", Func::Log},   {"sqrt", Func::Sqrt}, {"abs", Func::Abs}, {"gamma", Func::Gamma},
};

const FuncName* find_function(std::string_view name) {
  for (const auto& f : kFunctions)
    if (f.name == name) return &f;
  return nullptr;
}

NodePtr make_constant(double v, std::size_t offset, std::string name = {}) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Constant;
  n->value = v;
  n->name = std::move(name);
  n->offset = offset;
  return n;
}

NodePtr make_unary(Func f, NodePtr a, std::size_t offset) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Unary;
  n->func = f;
  n->lhs = std::move(a);
  n->offset = offset;
  return n;
}

NodePtr make_binary(BinOp op, NodePtr a, NodePtr b, std::size_t offset) {
  auto n = std::make_shared<Node>();
  n->kind = Node::Kind::Binary;
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  n->offset = offset;
  return n;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

class Parser {
 public:
  Parser(std::string_view text, const std::set<std::string, std::less<>>& allowed) : text_(text), allowed_(allowed) {}

  NodePtr run() {
    skip_space();
    if (pos_ == text_.size()) throw ParseError("empty expression", pos_);
    auto n = parse_sum();
    skip_space();
    if (pos_ != text_.size()) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_);
    return n;
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr parse_sum() {
    auto lhs = parse_product();
    for (;;) {
      skip_space();
      const std::size_t at = pos_;
      if (accept('+')) {
        lhs = make_binary(BinOp::Add, lhs, parse_product(), at);
      } else if (accept('-')) {
        lhs = make_binary(BinOp::Sub, lhs, parse_product(), at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_product() {
    auto lhs = parse_unary();
    for (;;) {
      skip_space();
      const std::size_t at = pos_;
      if (accept('*')) {
        lhs = make_binary(BinOp::Mul, lhs, parse_unary(), at);
      } else if (accept('/')) {
        lhs = make_binary(BinOp::Div, lhs, parse_unary(), at);
      } else {
        return lhs;
      }
    }
  }

  NodePtr parse_unary() {
    skip_space();
    const std::size_t at = pos_;
    if (accept('-')) return make_unary(Func::Neg, parse_unary(), at);
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  // The exponent may carry its own sign: 2^-x is 2^(-x), while -x^2 is -(x^2).
  NodePtr parse_power() {
    auto base = parse_primary();
    skip_space();
    const std::size_t at = pos_;
    if (accept('^')) return make_binary(BinOp::Pow, base, parse_unary(), at);
    return base;
  }

  NodePtr parse_primary() {
    skip_space();
    if (pos_ == text_.size()) throw ParseError("unexpected end of expression", pos_);
    const std::size_t at = pos_;
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto inner = parse_sum();
      if (!accept(')')) throw ParseError("expected ')'", pos_);
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (is_ident_start(c)) {
      while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
      const std::string_view name = text_.substr(at, pos_ - at);
      if (const auto* f = find_function(name)) return parse_call(*f, at);
      if (name == "pi") return make_constant(std::numbers::pi, at, "pi");
      if (name == "e") return make_constant(std::numbers::e, at, "e");
      if (!allowed_.contains(name)) throw ParseError("unknown identifier '" + std::string(name) + "'", at);
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::Variable;
      n->name = std::string(name);
      n->offset = at;
      return n;
    }
    throw ParseError(std::string("unexpected '") + c + "'", at);
  }

  NodePtr parse_call(const FuncName& f, std::size_t at) {
    if (!accept('(')) throw ParseError("function '" + std::string(f.name) + "' requires a parenthesised argument", pos_);
    skip_space();
    if (accept(')')) throw ParseError("function '" + std::string(f.name) + "' takes 1 argument, got 0", at);
    auto arg = parse_sum();
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == ',')
      throw ParseError("function '" + std::string(f.name) + "' takes 1 argument", pos_);
    if (!accept(')')) throw ParseError("expected ')'", pos_);
    return make_unary(f.func, std::move(arg), at);
  }

  NodePtr parse_number() {
    const std::size_t at = pos_;
    double v = 0.0;
    auto [end, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (ec != std::errc() || end == text_.data() + pos_) throw ParseError("malformed number", at);
    pos_ = static_cast<std::size_t>(end - text_.data());
    if (pos_ < text_.size() && is_ident_char(text_[pos_])) throw ParseError("malformed number", at);
    return make_constant(v, at);
  }

  std::string_view text_;
  const std::set<std::string, std::less<>>& allowed_;
  std::size_t pos_ = 0;
};

void collect(const Node& n, std::set<std::string, std::less<>>& out) {
  if (n.kind == Node::Kind::Variable) out.insert(n.name);
  if (n.lhs) collect(*n.lhs, out);
  if (n.rhs) collect(*n.rhs, out);
}

char op_char(BinOp op) {
  switch (op) {
    case BinOp::Add: return '+';
    case BinOp::Sub: return '-';
    case BinOp::Mul: return '*';
    case BinOp::Div: return '/';
    case BinOp::Pow: return '^';
  }
  return '?';
}

void print(const Node& n, std::string& out) {
  switch (n.kind) {
    case Node::Kind::Constant: {
      if (!n.name.empty()) {
        out += n.name;
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", n.value);
        out += buf;
      }
      return;
    }
    case Node::Kind::Variable:
      out += n.name;
      return;
    case Node::Kind::Unary:
      if (n.func == Func::Neg) {
        out += "(-";
        print(*n.lhs, out);
        out += ')';
      } else {
        out += to_string(n.func);
        out += '(';
        print(*n.lhs, out);
        out += ')';
      }
      return;
    case Node::Kind::Binary:
      out += '(';
      print(*n.lhs, out);
      out += ' ';
      out += op_char(n.op);
      out += ' ';
      print(*n.rhs, out);
      out += ')';
      return;
  }
}

std::string node_text(const Node& n) {
  std::string s;
  print(n, s);
  return s;
}

// Raised once at the innermost failing node, then passed through unchanged.
class SubexpressionError : public ad::DomainError {
 public:
  using ad::DomainError::DomainError;
};

template <class F>
auto guarded(const Node& n, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SubexpressionError&) {
    throw;
  } catch (const ad::DomainError& e) {
    throw SubexpressionError(std::string(e.what()) + " in '" + node_text(n) + "'");
  } catch (const std::domain_error& e) {
    throw SubexpressionError(std::string(e.what()) + " in '" + node_text(n) + "'");
  }
}

template <class F>
ad::Tensor map_values(const ad::Tensor& a, F&& f, std::string_view op) {
  ad::Tensor out = a;
  for (double& v : out.data()) v = f(v);
  ad::check_finite(out, op);
  return out;
}

ad::Tensor eval_tensor(const Node& n, const Bindings& b) {
  using ad::Tensor;
  switch (n.kind) {
    case Node::Kind::Constant:
      return Tensor::scalar(n.value);
    case Node::Kind::Variable: {
      auto it = b.find(n.name);
      if (it == b.end()) throw std::invalid_argument("unbound variable '" + n.name + "'");
      return it->second;
    }
    case Node::Kind::Unary:
      return guarded(n, [&] {
        const Tensor a = eval_tensor(*n.lhs, b);
        switch (n.func) {
          case Func::Neg: return ad::neg(a);
          case Func::Sin: return ad::sin(a);
          case Func::Cos: return ad::cos(a);
          case Func::Tan: return map_values(a, [](double v) { return std::tan(v); }, "tan");
          case Func::Sinh: return map_values(a, [](double v) { return std::sinh(v); }, "sinh");
          case Func::Cosh: return map_values(a, [](double v) { return std::cosh(v); }, "cosh");
          case Func::Tanh: return ad::tanh(a);
          case Func::Exp: return ad::exp(a);
          case Func::Log: return ad::log(a);
          case Func::Sqrt: return ad::sqrt(a);
          case Func::Abs: return ad::abs(a);
          case Func::Gamma: return map_values(a, [](double v) { return quad::gamma(v); }, "gamma");
        }
        return a;
      });
    case Node::Kind::Binary:
      return guarded(n, [&] {
        const Tensor l = eval_tensor(*n.lhs, b), r = eval_tensor(*n.rhs, b);
        switch (n.op) {
          case BinOp::Add: return ad::add(l, r);
          case BinOp::Sub: return ad::sub(l, r);
          case BinOp::Mul: return ad::mul(l, r);
          case BinOp::Div: return ad::div(l, r);
          case BinOp::Pow:
            if (r.size() == 1) return ad::pow_const(l, r.item());
            return ad::exp(ad::mul(r, ad::log(l)));
        }
        return l;
      });
  }
  return Tensor::scalar(0.0);
}

template <class V>
struct Context {
  const std::map<std::string, V, std::less<>>& vars;
  const Bindings& constants;
  const V& like;
};

template <class V>
bool depends(const Node& n, const Context<V>& ctx) {
  if (n.kind == Node::Kind::Variable) return ctx.vars.contains(n.name);
  return (n.lhs && depends(*n.lhs, ctx)) || (n.rhs && depends(*n.rhs, ctx));
}

// A detached sub-expression folded to a single number, if it is one.
std::optional<double> as_scalar(const ad::Tensor& t) {
  if (t.size() == 1) return t.item();
  return std::nullopt;
}

template <class V>
V eval_generic(const Node& n, const Context<V>& ctx) {
  using ad::constant_like;
  if (!depends(n, ctx)) return constant_like(ctx.like, eval_tensor(n, ctx.constants));
  if (n.kind == Node::Kind::Variable) return ctx.vars.find(n.name)->second;
  if (n.kind == Node::Kind::Unary) {
    return guarded(n, [&]() -> V {
      const V a = eval_generic(*n.lhs, ctx);
      switch (n.func) {
        case Func::Neg: return neg(a);
        case Func::Sin: return sin(a);
        case Func::Cos: return cos(a);
        case Func::Tan: return div(sin(a), cos(a));
        case Func::Sinh: return scale(sub(exp(a), exp(neg(a))), 0.5);
        case Func::Cosh: return scale(add(exp(a), exp(neg(a))), 0.5);
        case Func::Tanh: return tanh(a);
        case Func::Exp: return exp(a);
        case Func::Log: return log(a);
        case Func::Sqrt: return sqrt(a);
        case Func::Abs: return abs(a);
        case Func::Gamma: throw ad::DomainError("gamma of a differentiable argument is not supported");
      }
      return a;
    });
  }
  return guarded(n, [&]() -> V {
    const bool ldep = depends(*n.lhs, ctx), rdep = depends(*n.rhs, ctx);
    std::optional<double> ls, rs;
    std::optional<ad::Tensor> lt, rt;
    if (!ldep) ls = as_scalar(*(lt = eval_tensor(*n.lhs, ctx.constants)));
    if (!rdep) rs = as_scalar(*(rt = eval_tensor(*n.rhs, ctx.constants)));
    if (n.op == BinOp::Pow) {
      const V base = eval_generic(*n.lhs, ctx);
      if (rs) return pow_const(base, *rs);
      const V expo = rdep ? eval_generic(*n.rhs, ctx) : constant_like(ctx.like, *rt);
      return exp(mul(expo, log(base)));
    }
    if (rs) {
      const V l = eval_generic(*n.lhs, ctx);
      switch (n.op) {
        case BinOp::Add: return add_scalar(l, *rs);
        case BinOp::Sub: return add_scalar(l, -*rs);
        case BinOp::Mul: return scale(l, *rs);
        case BinOp::Div:
          if (*rs == 0.0) throw ad::DomainError("division by zero");
          return scale(l, 1.0 / *rs);
        default: break;
      }
    }
    if (ls && n.op != BinOp::Div) {
      const V r = eval_generic(*n.rhs, ctx);
      switch (n.op) {
        case BinOp::Add: return add_scalar(r, *ls);
        case BinOp::Sub: return add_scalar(neg(r), *ls);
        case BinOp::Mul: return scale(r, *ls);
        default: break;
      }
    }
    const V l = ldep ? eval_generic(*n.lhs, ctx) : constant_like(ctx.like, *lt);
    const V r = rdep ? eval_generic(*n.rhs, ctx) : constant_like(ctx.like, *rt);
    switch (n.op) {
      case BinOp::Add: return add(l, r);
      case BinOp::Sub: return sub(l, r);
      case BinOp::Mul: return mul(l, r);
      case BinOp::Div: return div(l, r);
      case BinOp::Pow: break;
    }
    return l;
  });
}

}  // namespace

std::string to_string(Func f) {
  for (const auto& entry : kFunctions)
    if (entry.func == f) return std::string(entry.name);
  return "?";
}

bool structurally_equal(const Node& a, const Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Node::Kind::Constant:
      return a.value == b.value && a.name == b.name;
    case Node::Kind::Variable:
      return a.name == b.name;
    case Node::Kind::Unary:
      return a.func == b.func && structurally_equal(*a.lhs, *b.lhs);
    case Node::Kind::Binary:
      return a.op == b.op && structurally_equal(*a.lhs, *b.lhs) && structurally_equal(*a.rhs, *b.rhs);
  }
  return false;
}

Expression::Expression() : root_(make_constant(0.0, 0)), source_("0") {}

Expression Expression::parse(std::string_view text, const std::set<std::string, std::less<>>& allowed) {
  Expression e;
  e.root_ = Parser(text, allowed).run();
  e.source_ = std::string(text);
  return e;
}

Expression Expression::constant(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("Expression::constant: value must be finite");
  Expression e;
  e.root_ = v < 0 ? make_unary(Func::Neg, make_constant(-v, 0), 0) : make_constant(v, 0);
  e.source_ = e.to_string();
  return e;
}

std::set<std::string, std::less<>> Expression::free_variables() const {
  std::set<std::string, std::less<>> out;
  collect(*root_, out);
  return out;
}

bool Expression::depends_on(std::string_view name) const { return free_variables().contains(name); }

std::string Expression::to_string() const { return node_text(*root_); }

ad::Tensor Expression::evaluate(const Bindings& bindings) const { return eval_tensor(*root_, bindings); }

double Expression::evaluate_scalar(const std::map<std::string, double, std::less<>>& bindings) const {
  Bindings b;
  for (const auto& [k, v] : bindings) b.emplace(k, ad::Tensor::scalar(v));
  return eval_tensor(*root_, b).item();
}

template <class V>
V Expression::evaluate(const std::map<std::string, V, std::less<>>& vars, const Bindings& constants) const {
  if (vars.empty()) throw std::invalid_argument("Expression::evaluate: no differentiable bindings");
  const Context<V> ctx{vars, constants, vars.begin()->second};
  return eval_generic(*root_, ctx);
}

bool Expression::operator==(const Expression& o) const { return structurally_equal(*root_, *o.root_); }

template ad::Var Expression::evaluate(const std::map<std::string, ad::Var, std::less<>>&, const Bindings&) const;
template ad::Dual<ad::Var> Expression::evaluate(const std::map<std::string, ad::Dual<ad::Var>, std::less<>>&,
                                                const Bindings&) const;
template ad::Dual<ad::Tensor> Expression::evaluate(const std::map<std::string, ad::Dual<ad::Tensor>, std::less<>>&,
                                                   const Bindings&) const;

}  // namespace risn::expr
