#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "risn/autodiff/tensor.hpp"

namespace risn::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid as long as its tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Neg,
  Scale,
  AddScalar,
  PowConst,
  Exp,
  Log,
  Sqrt,
  Abs,
  Sin,
  Cos,
  Tanh,
  Sum,
  RowSum,
  Mean,
  ConcatCols,
  Reshape,
};

/// Gradients of a scalar root with respect to every node of the tape.
class Gradients {
 public:
  /// Gradient for `v`; zeros of v's shape when v did not influence the root.
  Tensor operator[](const Var& v) const;
  bool contains(const Var& v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
};

/// Reverse-mode tape. Nodes are appended in topological order, so a node's
/// parents always have smaller indices. One tape belongs to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable input whose gradient backward() reports.
  Var leaf(Tensor value);
  /// Input that never needs a gradient.
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  Var record(OpKind op, Tensor value, std::span<const Var> parents, double param = 0.0);

  /// Reverse sweep from a 1x1 root. The tape is left intact, so backward may be
  /// called again on another root.
  Gradients backward(const Var& root) const;

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    OpKind op;
    Tensor value;
    std::vector<std::size_t> parents;
    double param = 0.0;
    bool requires_grad = false;
  };

  void propagate(const Node& node, const Tensor& g, std::vector<std::optional<Tensor>>& grads) const;

  std::deque<Node> nodes_;
};

// Primitive set. Each records one node whose VJP is exact; operands must
// live on the same tape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var pow_const(const Var& a, double p);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var sum(const Var& a);
Var row_sum(const Var& a);
Var mean(const Var& a);
Var concat_columns(std::span<const Var> parts);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);

/// Constant (detached) sign of the primal.
Var sign_const(const Var& a);
/// Constant on the same tape as `like`.
Var constant_like(const Var& like, Tensor value);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator+(double s, const Var& a) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }
inline Var operator-(double s, const Var& a) { return add_scalar(neg(a), s); }

}  // namespace risn::ad
