#pragma once

// Spectral-wise discontinuous 3D token splitting: each token is one
// contiguous spatial tile crossed with a strided group of channels.

#include <cstddef>
#include <vector>

#include "ect/tensor.hpp"

namespace ect {

struct SplitSpec {
  std::size_t channels = 0;  // C
  std::size_t height = 0;    // H
  std::size_t width = 0;     // W
  std::size_t group = 0;     // c, channels per token
  std::size_t splits = 0;    // s, tiles per side

  /// Throws DimensionError naming the first offending pair.
  void validate() const;
  /// C / c: number of strided spectral groups, also the channel stride inside a token.
  std::size_t spectral_groups() const { return channels / group; }
  std::size_t tile_height() const { return height / splits; }
  std::size_t tile_width() const { return width / splits; }
  std::size_t tile_area() const { return tile_height() * tile_width(); }
  /// n = C * s^2 / c
  std::size_t token_count() const { return spectral_groups() * splits * splits; }
  /// d = H * W * c / s^2
  std::size_t token_dim() const { return group * tile_area(); }
};

SplitSpec make_split_spec(std::size_t channels, std::size_t height, std::size_t width, std::size_t group,
                          std::size_t splits);

template <typename T>
struct TokenGrid {
  Tensor<T> tokens;  // [n, d] or [B, n, d]
  SplitSpec spec;
  std::size_t head_count = 1;
};

/// Flat source offsets into a [B,C,H,W] buffer for every [B,n,d] token entry.
std::vector<std::size_t> sd3d_token_index(const SplitSpec& spec, std::size_t batch);

/// fmap is [C,H,W] (tokens [n,d]) or [B,C,H,W] (tokens [B,n,d]).
template <typename T>
TokenGrid<T> sd3d_split(const Tensor<T>& fmap, std::size_t group, std::size_t splits, std::size_t head_count = 1);

template <typename T>
Tensor<T> sd3d_align(const TokenGrid<T>& grid);

/// Views channels as (groups, C/groups), transposes, flattens. Accepts
/// [C,H,W] or [B,C,H,W].
template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& fmap, std::size_t groups);

/// Output-channel -> source-channel map of channel_shuffle.
std::vector<std::size_t> channel_shuffle_order(std::size_t channels, std::size_t groups);

}  // namespace ect
