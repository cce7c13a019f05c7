#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ect/error.hpp"

namespace ect {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Thread-local switches. Grad mode controls whether ops record the autodiff
// graph; checked mode makes every op validate that its output is finite.
bool grad_enabled();
bool checked_mode();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class CheckedModeGuard {
 public:
  explicit CheckedModeGuard(bool enabled);
  ~CheckedModeGuard();
  CheckedModeGuard(const CheckedModeGuard&) = delete;
  CheckedModeGuard& operator=(const CheckedModeGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  // Graph edges. A node with a backward function reads its own grad and
  // accumulates into its parents.
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::span<T> ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor with shared storage. Copies alias the same node,
/// which is how parameters are shared between modules and the registry.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  // Direct writes are meant for leaves (parameters, inputs); writing into an
  // interior node does not invalidate values saved by its consumers.
  std::span<T> mutable_data() { return node().data; }
  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  Tensor grad_tensor() const;
  void zero_grad() { node().grad.clear(); }

  /// Same values, fresh leaf without history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  Node& node() const;
  std::shared_ptr<Node> node_;
};

/// Runs reverse-mode accumulation from a scalar sink into every reachable
/// leaf that requires grad. Leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& sink);

/// Creates an op result wired into the graph when any input requires grad
/// and grad mode is on. `backward_fn` receives the result node.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backward_fn, const char* op_name);

template <typename T>
bool all_finite(std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ect
