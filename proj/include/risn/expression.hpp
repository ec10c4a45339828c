#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

#include "risn/autodiff/tensor.hpp"

namespace risn::expr {

/// Syntax or binding error; `offset` is the byte position in the source.
class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class Func { Neg, Sin, Cos, Tan, Sinh, Cosh, Tanh, Exp, Log, Sqrt, Abs, Gamma };
enum class BinOp { Add, Sub, Mul, Div, Pow };

struct Node {
  enum class Kind { Constant, Variable, Unary, Binary };
  Kind kind = Kind::Constant;
  double value = 0.0;  // Constant
  std::string name;    // Variable, or the spelling of a named constant
  Func func = Func::Neg;
  BinOp op = BinOp::Add;
  std::shared_ptr<const Node> lhs, rhs;  // Unary uses lhs only
  std::size_t offset = 0;
};

using Bindings = std::map<std::string, ad::Tensor, std::less<>>;

/// Immutable parsed expression. Copies share the tree.
class Expression {
 public:
  Expression();  // the constant 0

  /// Grammar: + - (left assoc) < * / (left assoc) < unary - < ^ (right
  /// assoc) < calls, parentheses, numbers, identifiers. `pi` and `e` are
  /// constants; any other identifier must be in `allowed`.
  static Expression parse(std::string_view text, const std::set<std::string, std::less<>>& allowed);
  static Expression constant(double v);

  const Node& root() const { return *root_; }
  const std::string& source() const { return source_; }
  std::set<std::string, std::less<>> free_variables() const;
  bool depends_on(std::string_view name) const;
  bool is_constant() const { return free_variables().empty(); }

  /// Canonical fully parenthesised form; parse(to_string()) reproduces the
  /// same tree.
  std::string to_string() const;

  /// Elementwise evaluation with broadcasting over length-1 axes. Domain
  /// failures raise ad::DomainError naming the failing sub-expression.
  ad::Tensor evaluate(const Bindings& bindings) const;
  double evaluate_scalar(const std::map<std::string, double, std::less<>>& bindings) const;

  /// Evaluation over differentiable values (ad::Var or ad::Dual). Names in
  /// `vars` are differentiable; names in `constants` are detached, as is
  /// every sub-expression that depends on no differentiable name.
  template <class V>
  V evaluate(const std::map<std::string, V, std::less<>>& vars, const Bindings& constants) const;

  bool operator==(const Expression& o) const;

 private:
  std::shared_ptr<const Node> root_;
  std::string source_;
};

std::string to_string(Func f);
bool structurally_equal(const Node& a, const Node& b);

}  // namespace risn::expr
