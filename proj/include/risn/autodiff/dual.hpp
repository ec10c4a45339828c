#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "risn/autodiff/tape.hpp"

namespace risn::ad {

/// Dual tensor carrying a primal together with its first (and optionally
/// second) directional derivative along one fixed input direction.
///
/// The components are themselves differentiable values (a `Var`, or another
/// `Dual` for nested directions), so any loss built from tangents stays on
/// the reverse tape. An absent tangent means "identically zero", which is
/// how constants enter. `order` caps the highest component that is
/// propagated: order 1 skips all curvature work.
///
/// For y = g(z): tangent' = g'(z) z', curvature' = g''(z) z'^2 + g'(z) z''.
template <class T>
struct Dual {
  T primal;
  std::optional<T> tangent;
  std::optional<T> curvature;
  int order = 1;
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

namespace detail {

template <class T>
std::optional<T> opt_add(const std::optional<T>& a, const std::optional<T>& b) {
  if (a && b) return add(*a, *b);
  return a ? a : b;
}

template <class T>
std::optional<T> opt_sub(const std::optional<T>& a, const std::optional<T>& b) {
  if (a && b) return sub(*a, *b);
  if (a) return a;
  if (b) return neg(*b);
  return std::nullopt;
}

template <class T, class F>
std::optional<T> opt_map(const std::optional<T>& a, F&& f) {
  if (!a) return std::nullopt;
  return f(*a);
}

inline int max_order(int a, int b) { return a > b ? a : b; }

/// Applies the chain rule for a scalar function with first derivative `g1`
/// and second derivative `g2` (both already evaluated at the primal).
template <class T, class G2>
Dual<T> chain(T value, const Dual<T>& z, const T& g1, G2&& make_g2) {
  Dual<T> out{std::move(value), std::nullopt, std::nullopt, z.order};
  if (z.tangent) out.tangent = mul(g1, *z.tangent);
  if (z.order >= 2) {
    std::optional<T> c;
    if (z.tangent) c = mul(make_g2(), mul(*z.tangent, *z.tangent));
    if (z.curvature) c = opt_add(c, std::optional<T>(mul(g1, *z.curvature)));
    out.curvature = c;
  }
  return out;
}

}  // namespace detail

template <class T>
Dual<T> constant_like(const Dual<T>& like, Tensor value) {
  return Dual<T>{constant_like(like.primal, std::move(value)), std::nullopt, std::nullopt, like.order};
}

template <class T>
Dual<T> sign_const(const Dual<T>& a) {
  return Dual<T>{sign_const(a.primal), std::nullopt, std::nullopt, a.order};
}

template <class T>
const Tensor& primal_value(const Dual<T>& a) {
  return primal_value(a.primal);
}
inline const Tensor& primal_value(const Var& a) { return a.value(); }
inline const Tensor& primal_value(const Tensor& a) { return a; }

/// Plain tensors are their own constants, so derivative code can run
/// without a tape.
inline Tensor constant_like(const Tensor&, Tensor value) { return value; }
inline Tensor sign_const(const Tensor& a) { return sign(a); }

template <class T>
Dual<T> add(const Dual<T>& a, const Dual<T>& b) {
  return {add(a.primal, b.primal), detail::opt_add(a.tangent, b.tangent), detail::opt_add(a.curvature, b.curvature),
          detail::max_order(a.order, b.order)};
}

template <class T>
Dual<T> sub(const Dual<T>& a, const Dual<T>& b) {
  return {sub(a.primal, b.primal), detail::opt_sub(a.tangent, b.tangent), detail::opt_sub(a.curvature, b.curvature),
          detail::max_order(a.order, b.order)};
}

template <class T>
Dual<T> neg(const Dual<T>& a) {
  auto f = [](const T& v) { return neg(v); };
  return {neg(a.primal), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f), a.order};
}

template <class T>
Dual<T> scale(const Dual<T>& a, double s) {
  auto f = [s](const T& v) { return scale(v, s); };
  return {scale(a.primal, s), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f), a.order};
}

template <class T>
Dual<T> add_scalar(const Dual<T>& a, double s) {
  return {add_scalar(a.primal, s), a.tangent, a.curvature, a.order};
}

namespace detail {

/// Product rule shared by elementwise mul and matmul.
template <class T, class Op>
Dual<T> bilinear(const Dual<T>& a, const Dual<T>& b, Op&& op) {
  const int order = max_order(a.order, b.order);
  Dual<T> out{op(a.primal, b.primal), std::nullopt, std::nullopt, order};
  std::optional<T> t;
  if (a.tangent) t = op(*a.tangent, b.primal);
  if (b.tangent) t = opt_add(t, std::optional<T>(op(a.primal, *b.tangent)));
  out.tangent = t;
  if (order >= 2) {
    std::optional<T> c;
    if (a.curvature) c = op(*a.curvature, b.primal);
    if (a.tangent && b.tangent) c = opt_add(c, std::optional<T>(scale(op(*a.tangent, *b.tangent), 2.0)));
    if (b.curvature) c = opt_add(c, std::optional<T>(op(a.primal, *b.curvature)));
    out.curvature = c;
  }
  return out;
}

}  // namespace detail

template <class T>
Dual<T> mul(const Dual<T>& a, const Dual<T>& b) {
  return detail::bilinear(a, b, [](const T& x, const T& y) { return mul(x, y); });
}

template <class T>
Dual<T> matmul(const Dual<T>& a, const Dual<T>& b) {
  return detail::bilinear(a, b, [](const T& x, const T& y) { return matmul(x, y); });
}

template <class T>
Dual<T> pow_const(const Dual<T>& a, double p) {
  T y = pow_const(a.primal, p);
  T g1 = p == 1.0 ? constant_like(a.primal, Tensor::scalar(1.0)) : scale(pow_const(a.primal, p - 1.0), p);
  return detail::chain(std::move(y), a, g1, [&] {
    if (p == 1.0) return constant_like(a.primal, Tensor::scalar(0.0));
    if (p == 2.0) return constant_like(a.primal, Tensor::scalar(2.0));
    return scale(pow_const(a.primal, p - 2.0), p * (p - 1.0));
  });
}

template <class T>
Dual<T> div(const Dual<T>& a, const Dual<T>& b) {
  if (!b.tangent && !b.curvature) {
    // Denominator constant in the seeded direction: plain quotient rule.
    auto f = [&](const T& v) { return div(v, b.primal); };
    return {div(a.primal, b.primal), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f),
            detail::max_order(a.order, b.order)};
  }
  return mul(a, pow_const(b, -1.0));
}

template <class T>
Dual<T> exp(const Dual<T>& a) {
  T y = exp(a.primal);
  T g1 = y;
  return detail::chain(std::move(y), a, g1, [&] { return g1; });
}

template <class T>
Dual<T> log(const Dual<T>& a) {
  T g1 = pow_const(a.primal, -1.0);
  return detail::chain(log(a.primal), a, g1, [&] { return neg(mul(g1, g1)); });
}

template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  T y = sqrt(a.primal);
  T g1 = scale(pow_const(y, -1.0), 0.5);
  return detail::chain(std::move(y), a, g1, [&] { return scale(div(g1, a.primal), -0.5); });
}

template <class T>
Dual<T> abs(const Dual<T>& a) {
  T g1 = sign_const(a.primal);
  return detail::chain(abs(a.primal), a, g1, [&] { return constant_like(a.primal, Tensor::scalar(0.0)); });
}

template <class T>
Dual<T> sin(const Dual<T>& a) {
  T y = sin(a.primal);
  T g1 = cos(a.primal);
  return detail::chain(y, a, g1, [&] { return neg(y); });
}

template <class T>
Dual<T> cos(const Dual<T>& a) {
  T y = cos(a.primal);
  T g1 = neg(sin(a.primal));
  return detail::chain(y, a, g1, [&] { return neg(y); });
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T y = tanh(a.primal);
  T g1 = add_scalar(neg(mul(y, y)), 1.0);
  return detail::chain(y, a, g1, [&] { return scale(mul(y, g1), -2.0); });
}

template <class T>
Dual<T> sum(const Dual<T>& a) {
  auto f = [](const T& v) { return sum(v); };
  return {sum(a.primal), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f), a.order};
}

template <class T>
Dual<T> row_sum(const Dual<T>& a) {
  auto f = [](const T& v) { return row_sum(v); };
  return {row_sum(a.primal), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f), a.order};
}

template <class T>
Dual<T> mean(const Dual<T>& a) {
  auto f = [](const T& v) { return mean(v); };
  return {mean(a.primal), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f), a.order};
}

template <class T>
Dual<T> reshape(const Dual<T>& a, std::size_t rows, std::size_t cols) {
  auto f = [&](const T& v) { return reshape(v, rows, cols); };
  return {reshape(a.primal, rows, cols), detail::opt_map(a.tangent, f), detail::opt_map(a.curvature, f), a.order};
}

template <class T>
Dual<T> concat_columns(std::span<const Dual<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no operands");
  std::vector<T> p, t, c;
  bool any_t = false, any_c = false;
  int order = 1;
  for (const auto& d : parts) {
    any_t = any_t || d.tangent.has_value();
    any_c = any_c || d.curvature.has_value();
    order = detail::max_order(order, d.order);
  }
  auto zeros_like = [](const T& v) {
    const Tensor& pv = primal_value(v);
    return constant_like(v, Tensor(pv.rows(), pv.cols()));
  };
  for (const auto& d : parts) {
    p.push_back(d.primal);
    if (any_t) t.push_back(d.tangent ? *d.tangent : zeros_like(d.primal));
    if (any_c) c.push_back(d.curvature ? *d.curvature : zeros_like(d.primal));
  }
  Dual<T> out{concat_columns(std::span<const T>(p)), std::nullopt, std::nullopt, order};
  if (any_t) out.tangent = concat_columns(std::span<const T>(t));
  if (any_c) out.curvature = concat_columns(std::span<const T>(c));
  return out;
}

/// Lifts a value of the underlying type into a Dual with zero tangents,
/// recursing through nested Duals.
template <class V>
V lift(const Var& v, int order = 1) {
  if constexpr (std::is_same_v<V, Var>) {
    (void)order;
    return v;
  } else {
    using Inner = decltype(V{}.primal);
    return V{lift<Inner>(v, order), std::nullopt, std::nullopt, order};
  }
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) { return add(a, b); }
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) { return sub(a, b); }
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) { return mul(a, b); }

/// Zero-filled value of `like`'s shape, as a constant.
template <class T>
T zeros_like(const T& like) {
  const Tensor& v = primal_value(like);
  return constant_like(like, Tensor(v.rows(), v.cols()));
}

/// Derivative of `f` with respect to column `dim` of `x`, evaluated at
/// every row: order 1 gives df/dx_dim, order 2 gives d²f/dx_dim².
///
/// `f` must be generic over its argument type (it is invoked with a Dual)
/// and built from primitives only. The result stays attached to the reverse
/// tape, so losses containing it can be differentiated with respect to the
/// parameters inside `f`.
template <class F, class T>
T input_derivative(F&& f, const T& x, std::size_t dim, int order) {
  if (order < 1 || order > 2) throw std::invalid_argument("input_derivative: order must be 1 or 2");
  const Tensor& xv = primal_value(x);
  if (dim >= xv.cols()) throw std::invalid_argument("input_derivative: dim out of range");
  Tensor seed(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) seed(i, dim) = 1.0;
  Dual<T> dx{x, constant_like(x, std::move(seed)), std::nullopt, order};
  Dual<T> y = f(dx);
  const std::optional<T>& component = order == 1 ? y.tangent : y.curvature;
  if (component) return *component;
  return zeros_like(y.primal);
}

}  // namespace risn::ad
