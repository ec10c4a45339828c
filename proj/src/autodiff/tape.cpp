#include "risn/autodiff/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <string>

namespace risn::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_matrix(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<RowMajor> as_matrix(Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Tape* common_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument(std::string(op) + ": uninitialised operand");
  if (a.tape() != b.tape()) throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

Tape* tape_of(const Var& a, const char* op) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": uninitialised operand");
  return a.tape();
}

Var record1(OpKind op, Tensor value, const Var& a, double param = 0.0) {
  const Var parents[] = {a};
  return a.tape()->record(op, std::move(value), parents, param);
}

Var record2(OpKind op, Tensor value, const Var& a, const Var& b) {
  const Var parents[] = {a, b};
  return a.tape()->record(op, std::move(value), parents);
}

void accumulate(std::vector<std::optional<Tensor>>& grads, std::size_t id, Tensor contribution) {
  auto& slot = grads[id];
  if (!slot) {
    slot = std::move(contribution);
    return;
  }
  auto dst = slot->data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor elementwise(const Tensor& g, const Tensor& x, double (*f)(double, double)) {
  Tensor out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = f(g[i], x[i]);
  return out;
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape_) throw std::invalid_argument("value() of an uninitialised Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Tensor Gradients::operator[](const Var& v) const {
  if (contains(v)) return *grads_[v.id()];
  return Tensor(v.rows(), v.cols());
}

Var Tape::leaf(Tensor value) {
  check_finite(value, "leaf");
  nodes_.push_back(Node{OpKind::Leaf, std::move(value), {}, 0.0, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  check_finite(value, "constant");
  nodes_.push_back(Node{OpKind::Constant, std::move(value), {}, 0.0, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, Tensor value, std::span<const Var> parents, double param) {
  Node node{op, std::move(value), {}, param, false};
  node.parents.reserve(parents.size());
  for (const auto& p : parents) {
    if (p.tape() != this) throw std::invalid_argument("record: parent from another tape");
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& root) const {
  if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be scalar, got shape " + shape_string(root.value()));
  }
  Gradients out;
  out.grads_.resize(root.id() + 1);
  out.grads_[root.id()] = Tensor::scalar(1.0);
  for (std::size_t k = root.id() + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!node.requires_grad || !out.grads_[k] || node.parents.empty()) continue;
    propagate(node, *out.grads_[k], out.grads_);
  }
  return out;
}

void Tape::propagate(const Node& node, const Tensor& g, std::vector<std::optional<Tensor>>& grads) const {
  auto needs = [&](std::size_t i) { return nodes_[node.parents[i]].requires_grad; };
  auto parent = [&](std::size_t i) -> const Tensor& { return nodes_[node.parents[i]].value; };
  auto push = [&](std::size_t i, Tensor contribution) {
    check_finite(contribution, "backward");
    accumulate(grads, node.parents[i], std::move(contribution));
  };
  const Tensor& y = node.value;

  switch (node.op) {
    case OpKind::Leaf:
    case OpKind::Constant:
      break;
    case OpKind::Add:
      for (std::size_t i = 0; i < 2; ++i)
        if (needs(i)) push(i, reduce_to(g, parent(i).rows(), parent(i).cols()));
      break;
    case OpKind::Sub:
      if (needs(0)) push(0, reduce_to(g, parent(0).rows(), parent(0).cols()));
      if (needs(1)) push(1, reduce_to(ad::neg(g), parent(1).rows(), parent(1).cols()));
      break;
    case OpKind::Mul:
      if (needs(0)) push(0, reduce_to(ad::mul(g, parent(1)), parent(0).rows(), parent(0).cols()));
      if (needs(1)) push(1, reduce_to(ad::mul(g, parent(0)), parent(1).rows(), parent(1).cols()));
      break;
    case OpKind::Div:
      if (needs(0)) push(0, reduce_to(ad::div(g, parent(1)), parent(0).rows(), parent(0).cols()));
      if (needs(1)) {
        // d(a/b)/db = -y/b
        push(1, reduce_to(ad::neg(ad::div(ad::mul(g, y), parent(1))), parent(1).rows(), parent(1).cols()));
      }
      break;
    case OpKind::MatMul: {
      const Tensor& a = parent(0);
      const Tensor& b = parent(1);
      if (needs(0)) {
        Tensor ga(a.rows(), a.cols());
        as_matrix(ga).noalias() = as_matrix(g) * as_matrix(b).transpose();
        push(0, std::move(ga));
      }
      if (needs(1)) {
        Tensor gb(b.rows(), b.cols());
        as_matrix(gb).noalias() = as_matrix(a).transpose() * as_matrix(g);
        push(1, std::move(gb));
      }
      break;
    }
    case OpKind::Neg:
      push(0, ad::neg(g));
      break;
    case OpKind::Scale:
      push(0, ad::scale(g, node.param));
      break;
    case OpKind::AddScalar:
      push(0, g);
      break;
    case OpKind::PowConst: {
      const double p = node.param;
      Tensor out(g.rows(), g.cols());
      const Tensor& x = parent(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] = g[i] * (p == 1.0 ? 1.0 : p == 2.0 ? 2.0 * x[i] : p * std::pow(x[i], p - 1.0));
      }
      push(0, std::move(out));
      break;
    }
    case OpKind::Exp:
      push(0, elementwise(g, y, [](double gi, double yi) { return gi * yi; }));
      break;
    case OpKind::Log:
      push(0, elementwise(g, parent(0), [](double gi, double xi) { return gi / xi; }));
      break;
    case OpKind::Sqrt:
      push(0, elementwise(g, y, [](double gi, double yi) { return 0.5 * gi / yi; }));
      break;
    case OpKind::Abs:
      push(0, elementwise(g, parent(0), [](double gi, double xi) { return gi * ((xi > 0.0) - (xi < 0.0)); }));
      break;
    case OpKind::Sin:
      push(0, elementwise(g, parent(0), [](double gi, double xi) { return gi * std::cos(xi); }));
      break;
    case OpKind::Cos:
      push(0, elementwise(g, parent(0), [](double gi, double xi) { return -gi * std::sin(xi); }));
      break;
    case OpKind::Tanh:
      push(0, elementwise(g, y, [](double gi, double yi) { return gi * (1.0 - yi * yi); }));
      break;
    case OpKind::Sum:
      push(0, Tensor(parent(0).rows(), parent(0).cols(), g.item()));
      break;
    case OpKind::Mean:
      push(0, Tensor(parent(0).rows(), parent(0).cols(), g.item() / static_cast<double>(parent(0).size())));
      break;
    case OpKind::RowSum: {
      const Tensor& x = parent(0);
      Tensor out(x.rows(), x.cols());
      for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = g[i];
      push(0, std::move(out));
      break;
    }
    case OpKind::ConcatCols: {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < node.parents.size(); ++p) {
        const Tensor& x = parent(p);
        if (needs(p)) {
          Tensor out(x.rows(), x.cols());
          for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = g(i, offset + j);
          push(p, std::move(out));
        }
        offset += x.cols();
      }
      break;
    }
    case OpKind::Reshape:
      push(0, g.reshaped(parent(0).rows(), parent(0).cols()));
      break;
  }
}

Var add(const Var& a, const Var& b) {
  common_tape(a, b, "add");
  return record2(OpKind::Add, ad::add(a.value(), b.value()), a, b);
}

Var sub(const Var& a, const Var& b) {
  common_tape(a, b, "sub");
  return record2(OpKind::Sub, ad::sub(a.value(), b.value()), a, b);
}

Var mul(const Var& a, const Var& b) {
  common_tape(a, b, "mul");
  return record2(OpKind::Mul, ad::mul(a.value(), b.value()), a, b);
}

Var div(const Var& a, const Var& b) {
  common_tape(a, b, "div");
  return record2(OpKind::Div, ad::div(a.value(), b.value()), a, b);
}

Var matmul(const Var& a, const Var& b) {
  common_tape(a, b, "matmul");
  return record2(OpKind::MatMul, ad::matmul(a.value(), b.value()), a, b);
}

Var neg(const Var& a) {
  tape_of(a, "neg");
  return record1(OpKind::Neg, ad::neg(a.value()), a);
}

Var scale(const Var& a, double s) {
  tape_of(a, "scale");
  return record1(OpKind::Scale, ad::scale(a.value(), s), a, s);
}

Var add_scalar(const Var& a, double s) {
  tape_of(a, "add_scalar");
  return record1(OpKind::AddScalar, ad::add_scalar(a.value(), s), a, s);
}

Var pow_const(const Var& a, double p) {
  tape_of(a, "pow");
  return record1(OpKind::PowConst, ad::pow_const(a.value(), p), a, p);
}

Var exp(const Var& a) {
  tape_of(a, "exp");
  return record1(OpKind::Exp, ad::exp(a.value()), a);
}

Var log(const Var& a) {
  tape_of(a, "log");
  return record1(OpKind::Log, ad::log(a.value()), a);
}

Var sqrt(const Var& a) {
  tape_of(a, "sqrt");
  return record1(OpKind::Sqrt, ad::sqrt(a.value()), a);
}

Var abs(const Var& a) {
  tape_of(a, "abs");
  return record1(OpKind::Abs, ad::abs(a.value()), a);
}

Var sin(const Var& a) {
  tape_of(a, "sin");
  return record1(OpKind::Sin, ad::sin(a.value()), a);
}

Var cos(const Var& a) {
  tape_of(a, "cos");
  return record1(OpKind::Cos, ad::cos(a.value()), a);
}

Var tanh(const Var& a) {
  tape_of(a, "tanh");
  return record1(OpKind::Tanh, ad::tanh(a.value()), a);
}

Var sum(const Var& a) {
  tape_of(a, "sum");
  return record1(OpKind::Sum, ad::sum(a.value()), a);
}

Var row_sum(const Var& a) {
  tape_of(a, "row_sum");
  return record1(OpKind::RowSum, ad::row_sum(a.value()), a);
}

Var mean(const Var& a) {
  tape_of(a, "mean");
  return record1(OpKind::Mean, ad::mean(a.value()), a);
}

Var concat_columns(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no operands");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) {
    common_tape(parts[0], p, "concat_columns");
    values.push_back(p.value());
  }
  return parts[0].tape()->record(OpKind::ConcatCols, ad::concat_columns(values), parts);
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  tape_of(a, "reshape");
  return record1(OpKind::Reshape, a.value().reshaped(rows, cols), a);
}

Var sign_const(const Var& a) { return tape_of(a, "sign")->constant(ad::sign(a.value())); }

Var constant_like(const Var& like, Tensor value) { return tape_of(like, "constant")->constant(std::move(value)); }

}  // namespace risn::ad
