#include "risn/autodiff/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace risn::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_matrix(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

Eigen::Map<RowMajor> as_matrix(Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, std::string_view op, F&& f) {
  auto [r, c] = broadcast_shape(a, b, op);
  Tensor out(r, c);
  if (a.same_shape(b)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  const bool ar = a.rows() == 1, ac = a.cols() == 1;
  const bool br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out(i, j) = f(a(ar ? 0 : i, ac ? 0 : j), b(br ? 0 : i, bc ? 0 : j));
    }
  }
  return out;
}

template <class F>
Tensor unary(const Tensor& a, F&& f) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor dimensions must be positive");
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) throw ShapeError("tensor dimensions must be positive");
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape [" +
                     std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
}

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(n, 1, std::move(values));
}

Tensor Tensor::row(std::vector<double> values) {
  const auto n = values.size();
  return Tensor(1, n, std::move(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(*this));
  return data_[0];
}

Tensor Tensor::col(std::size_t c) const {
  if (c >= cols_) throw ShapeError("column index out of range");
  Tensor out(rows_, 1);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, c);
  return out;
}

Tensor Tensor::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != size()) {
    throw ShapeError("cannot reshape " + shape_string(*this) + " to [" + std::to_string(rows) + "," +
                     std::to_string(cols) + "]");
  }
  return Tensor(rows, cols, data_);
}

Tensor Tensor::transposed() const {
  Tensor out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
  return out;
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << '[' << t.rows() << ',' << t.cols() << ']';
  return os.str();
}

void check_finite(const Tensor& t, std::string_view op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw DomainError("non-finite value produced by " + std::string(op));
  }
}

std::array<std::size_t, 2> broadcast_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  auto axis = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                     " do not broadcast");
  };
  return {axis(a.rows(), b.rows()), axis(a.cols(), b.cols())};
}

Tensor reduce_to(const Tensor& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor out(rows, cols);
  for (std::size_t i = 0; i < g.rows(); ++i) {
    for (std::size_t j = 0; j < g.cols(); ++j) {
      out(rows == 1 ? 0 : i, cols == 1 ? 0 : j) += g(i, j);
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto out = binary(a, b, "add", [](double x, double y) { return x + y; });
  check_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto out = binary(a, b, "sub", [](double x, double y) { return x - y; });
  check_finite(out, "sub");
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto out = binary(a, b, "mul", [](double x, double y) { return x * y; });
  check_finite(out, "mul");
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  auto out = binary(a, b, "div", [](double x, double y) { return x / y; });
  check_finite(out, "div");
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a) + " x " + shape_string(b));
  }
  Tensor out(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  check_finite(out, "matmul");
  return out;
}

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; });
}

Tensor scale(const Tensor& a, double s) {
  auto out = unary(a, [s](double x) { return s * x; });
  check_finite(out, "scale");
  return out;
}

Tensor add_scalar(const Tensor& a, double s) {
  auto out = unary(a, [s](double x) { return x + s; });
  check_finite(out, "add_scalar");
  return out;
}

Tensor pow_const(const Tensor& a, double p) {
  const bool integral = std::floor(p) == p;
  for (double v : a.data()) {
    if (v < 0.0 && !integral) throw DomainError("pow: negative base with non-integer exponent");
    if (v == 0.0 && p < 0.0) throw DomainError("pow: zero base with negative exponent");
  }
  Tensor out;
  if (p == 2.0) {
    out = unary(a, [](double x) { return x * x; });
  } else if (p == 3.0) {
    out = unary(a, [](double x) { return x * x * x; });
  } else {
    out = unary(a, [p](double x) { return std::pow(x, p); });
  }
  check_finite(out, "pow");
  return out;
}

Tensor exp(const Tensor& a) {
  auto out = unary(a, [](double x) { return std::exp(x); });
  check_finite(out, "exp");
  return out;
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: argument must be positive");
  }
  return unary(a, [](double x) { return std::log(x); });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("sqrt: negative argument");
  }
  return unary(a, [](double x) { return std::sqrt(x); });
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::abs(x); });
}

Tensor sign(const Tensor& a) {
  return unary(a, [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
}

Tensor sin(const Tensor& a) {
  auto out = unary(a, [](double x) { return std::sin(x); });
  check_finite(out, "sin");
  return out;
}

Tensor cos(const Tensor& a) {
  auto out = unary(a, [](double x) { return std::cos(x); });
  check_finite(out, "cos");
  return out;
}

Tensor tanh(const Tensor& a) {
  auto out = unary(a, [](double x) { return std::tanh(x); });
  check_finite(out, "tanh");
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  check_finite(out, "sum");
  return out;
}

Tensor row_sum(const Tensor& a) {
  Tensor out(a.rows(), 1);
  as_matrix(out) = as_matrix(a).rowwise().sum();
  check_finite(out, "row_sum");
  return out;
}

Tensor mean(const Tensor& a) {
  Tensor out = sum(a);
  out[0] /= static_cast<double>(a.size());
  return out;
}

Tensor concat_columns(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no operands");
  const std::size_t r = parts[0].rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_columns: row counts differ");
    c += p.cols();
  }
  Tensor out(r, c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, offset + j) = p(i, j);
    offset += p.cols();
  }
  return out;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace risn::ad
