#pragma once

#include <span>
#include <string>

#include "ect/tensor.hpp"

namespace ect::detail {

/// Gradient buffer of parent `i`, or an empty span when that parent does
/// not take part in differentiation.
template <typename T>
std::span<T> parent_grad(TensorNode<T>& node, std::size_t i) {
  auto& parent = *node.parents[i];
  if (!parent.requires_grad) return {};
  return parent.ensure_grad();
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// outer x len x inner decomposition around `axis`.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace ect::detail

#define ECT_INSTANTIATE_FLOAT_DOUBLE(MACRO) \
  MACRO(float)                              \
  MACRO(double)
