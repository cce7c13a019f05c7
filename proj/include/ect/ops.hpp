#pragma once

// Differentiable kernels. Every reduction runs in ascending index order so
// that repeated evaluation is bit-identical.

#include <cstddef>
#include <optional>
#include <vector>

#include "ect/tensor.hpp"

namespace ect {

// Elementwise, same-shape operands.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
/// Raises NumericError on a zero divisor in checked mode.
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T value);
/// Subgradient of |x| at 0 is 0.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
/// Exact form x * Phi(x).
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

// Full reductions to a 1-element tensor.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
/// sum(a * b) over all elements.
template <typename T> Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b);

/// [m,p]x[p,q] or batched [B,m,p]x[B,p,q].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Swaps the last two axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& axes);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// out[i] = a[index[i]]; backward scatter-adds, so repeated indices are fine.
template <typename T> Tensor<T> gather(const Tensor<T>& a, const std::vector<std::size_t>& index, Shape shape);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
/// Each slice along the last axis divided by max(||row||_2, eps).
template <typename T> Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12));
/// Normalizes along `axis`; gamma/beta have length dim(axis).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t axis,
                     T eps = T(1e-5));
/// x[b, ...] * factors[b % factors.numel()].
template <typename T> Tensor<T> scale_batches(const Tensor<T>& x, const Tensor<T>& factors);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

/// Cross-correlation. input [B,Cin,H,W], weight [Cout,Cin/groups,kh,kw],
/// bias [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opts = {});
/// Only the 2x2 / stride-2 configuration used for upsampling is supported.
/// input [B,Cin,H,W], weight [Cin,Cout,2,2] -> [B,Cout,2H,2W].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride = 2);
/// input [B,Cin,L], weight [Cout,Cin,kl] -> [B,Cout,L+2p-kl+1].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t padding = 0);
/// Pools the last two axes of a rank>=2 tensor onto an out_h x out_w grid.
template <typename T> Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, std::size_t out_h = 2, std::size_t out_w = 2);
/// Reflect padding on the last two axes; folds repeatedly for pads >= extent.
template <typename T>
Tensor<T> pad_reflect2d(const Tensor<T>& input, std::size_t top, std::size_t bottom, std::size_t left,
                        std::size_t right);

}  // namespace ect
