#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace risn::ad {

/// Raised when a primitive is evaluated outside its domain or produces a
/// non-finite value.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles. Every value in the library is at most
/// rank 2; scalars are 1x1 and column vectors are Nx1.
class Tensor {
 public:
  Tensor() : Tensor(1, 1) {}
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor column(std::vector<double> values);
  static Tensor row(std::vector<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  /// Value of a 1x1 tensor.
  double item() const;
  Tensor col(std::size_t c) const;
  Tensor reshaped(std::size_t rows, std::size_t cols) const;
  Tensor transposed() const;

  bool operator==(const Tensor& o) const = default;

 private:
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
  std::vector<double> data_;
};

std::string shape_string(const Tensor& t);

/// Throws DomainError naming `op` when `t` holds a NaN or infinity.
void check_finite(const Tensor& t, std::string_view op);

/// Result shape of an elementwise op; length-1 axes broadcast.
std::array<std::size_t, 2> broadcast_shape(const Tensor& a, const Tensor& b, std::string_view op);

/// Sums `g` down to `rows x cols`, undoing a broadcast.
Tensor reduce_to(const Tensor& g, std::size_t rows, std::size_t cols);

// Pure value-level math. All functions validate their domain and reject
// non-finite results.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor pow_const(const Tensor& a, double p);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sign(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor row_sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor concat_columns(std::span<const Tensor> parts);

double max_abs(const Tensor& a);

}  // namespace risn::ad
