#include <cmath>
#include <numbers>

#include "ect/ops.hpp"
#include "ops_detail.hpp"

namespace ect {

using detail::parent_grad;
using detail::require_same_shape;

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto g = parent_grad(n, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
    auto ga = parent_grad(n, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    auto gb = parent_grad(n, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= n.grad[i];
  }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
    const auto& x = n.parents[0]->data;
    const auto& y = n.parents[1]->data;
    auto ga = parent_grad(n, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * y[i];
    auto gb = parent_grad(n, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i] * x[i];
  }, "mul");
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "div");
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  const bool checked = checked_mode();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (checked && y[i] == T(0)) throw NumericError("div: division by zero at flat index " + std::to_string(i));
    out[i] = x[i] / y[i];
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](TensorNode<T>& n) {
    const auto& y = n.parents[1]->data;
    auto ga = parent_grad(n, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] / y[i];
    auto gb = parent_grad(n, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= n.grad[i] * n.data[i] / y[i];
  }, "div");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {a}, [factor](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * factor;
  }, "scale");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return make_result<T>(a.shape(), std::move(out), {a}, [](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }, "add_scalar");
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [](TensorNode<T>& n) {
    const auto& x = n.parents[0]->data;
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T(0))
        g[i] += n.grad[i];
      else if (x[i] < T(0))
        g[i] -= n.grad[i];
    }
  }, "abs");
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(x[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / (T(2) * n.data[i]);
  }, "sqrt");
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  return make_result<T>(a.shape(), std::move(out), {a}, [inv_sqrt2](TensorNode<T>& n) {
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    const auto& x = n.parents[0]->data;
    auto g = parent_grad(n, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
      g[i] += n.grad[i] * (cdf + x[i] * pdf);
    }
  }, "gelu");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return make_result<T>(Shape{1}, {acc}, {a}, [](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (auto& v : g) v += n.grad[0];
  }, "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  const T count = static_cast<T>(a.numel());
  return make_result<T>(Shape{1}, {acc / count}, {a}, [count](TensorNode<T>& n) {
    auto g = parent_grad(n, 0);
    for (auto& v : g) v += n.grad[0] / count;
  }, "mean");
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  T acc = 0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return make_result<T>(Shape{1}, {acc}, {a, b}, [](TensorNode<T>& n) {
    const auto& x = n.parents[0]->data;
    const auto& y = n.parents[1]->data;
    auto ga = parent_grad(n, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[0] * y[i];
    auto gb = parent_grad(n, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[0] * x[i];
  }, "dot");
}

#define ECT_INST(T)                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> scale(const Tensor<T>&, T);                         \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                    \
  template Tensor<T> abs(const Tensor<T>&);                              \
  template Tensor<T> sqrt(const Tensor<T>&);                             \
  template Tensor<T> gelu(const Tensor<T>&);                             \
  template Tensor<T> sum(const Tensor<T>&);                              \
  template Tensor<T> mean(const Tensor<T>&);                             \
  template Tensor<T> dot(const Tensor<T>&, const Tensor<T>&);
ECT_INSTANTIATE_FLOAT_DOUBLE(ECT_INST)
#undef ECT_INST

}  // namespace ect
