#pragma once

// Exhaustive self-attention: cosine attention over SD3D tokens (USSA), a
// rank-limited dependence map built from pooled token features (LRF/DLRM),
// and the residual block that wraps them with LayerNorm and a conv FFN.
//
// Orientation: tokens are rows. For tokens T_Q, T_K, T_V of shape [n, d]
//   A = softmax_rows(tau * cos(T_Q, T_K))         [n, n]
//   D = LRF(T_Q) * LRF(T_K)^T                      [n, n], rank <= k
//   ESA(X) = shuffle(align(D * split(W(align(A * T_V)))))
// where W is a per-pixel C x C linear map.

#include <cstddef>
#include <optional>
#include <string>

#include "ect/param_store.hpp"
#include "ect/sd3d.hpp"
#include "ect/tensor.hpp"

namespace ect {

enum class EsaVariant {
  Cross,  // attention between the n tokens
  Inter,  // attention between the c channel slices inside each token
};

struct EsaConfig {
  EsaVariant variant = EsaVariant::Cross;
  std::size_t channels = 32;
  std::size_t group = 4;   // c
  std::size_t splits = 2;  // s
  std::size_t rank = 12;   // k
  std::size_t heads = 1;
  double tau_init = 1.0;
  bool use_dlrm = true;  // false replaces D by the identity
  std::size_t ffn_expansion = 4;

  static EsaConfig cross_default(std::size_t channels, std::size_t heads = 1);
  static EsaConfig inter_default(std::size_t channels);

  /// Cross: gcd(heads, c), so heads always split the spectral depth of a
  /// token evenly. Inter: a single head.
  std::size_t effective_heads() const;
  /// Length of the attention axis for an H x W input: n for Cross, c for Inter.
  std::size_t attention_length(std::size_t height, std::size_t width) const;
  /// Checks channel/group/head/rank compatibility (not spatial extents).
  void validate() const;
};

template <typename T>
struct EsaParams {
  Tensor<T> pos1_weight, pos1_bias, pos2_weight, pos2_bias;  // grouped 3x3, group width c
  Tensor<T> query, key, value;                               // [C,C,1,1]
  Tensor<T> proj_weight, proj_bias;                          // W: [C,C,1,1]
  Tensor<T> tau;                                             // [effective heads]
  Tensor<T> lrf_q_weight, lrf_q_bias, lrf_k_weight, lrf_k_bias;  // conv1d [k, 4*depth, 3]
};

template <typename T>
struct FfnParams {
  Tensor<T> expand;     // [eC, C, 1, 1]
  Tensor<T> depthwise;  // [eC, 1, 3, 3]
  Tensor<T> reduce;     // [C, eC, 1, 1]
};

template <typename T>
struct EsabParams {
  Tensor<T> norm1_gamma, norm1_beta, norm2_gamma, norm2_beta;
  EsaParams<T> esa;
  FfnParams<T> ffn;
};

/// Registers the parameters of one block under `prefix` (e.g. "enc0.esab").
template <typename T>
EsabParams<T> make_esab_params(const EsaConfig& cfg, ParamStore<T>& store, const std::string& prefix, Rng& rng);

/// Intermediates of one ESA evaluation, for diagnostics and tests.
template <typename T>
struct EsaTrace {
  Tensor<T> attention;   // [B*heads, n, n] (Cross) or [B*n, c, c] (Inter)
  Tensor<T> dependence;  // [B, n, n] or [B*n, c, c]; undefined without DLRM
};

template <typename T>
Tensor<T> positional_encoding(const Tensor<T>& fmap, const EsaParams<T>& params, const EsaConfig& cfg);

/// Q, K: [n, d] or [B, n, d]; tau holds one factor per batch slice modulo
/// its length. Returns the row-stochastic [.., n, n] attention map.
template <typename T>
Tensor<T> ussa(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& tau);

/// Low-rank features of tokens [B, L, depth*th*tw] whose entries are laid
/// out as depth planes of th x tw. Each plane is pooled to 2x2, the pooled
/// features are mixed along L by a kernel-3 conv1d, then softmax over k.
/// Returns [B, L, k].
template <typename T>
Tensor<T> lrf(const Tensor<T>& tokens, std::size_t depth, std::size_t tile_h, std::size_t tile_w,
              const Tensor<T>& weight, const Tensor<T>& bias);

/// D = Qf * Kf^T for [.., n, k] inputs.
template <typename T>
Tensor<T> dlrm(const Tensor<T>& query_features, const Tensor<T>& key_features);

/// fmap [B, C, H, W] -> [B, C, H, W].
template <typename T>
Tensor<T> esa_forward(const Tensor<T>& fmap, const EsaParams<T>& params, const EsaConfig& cfg,
                      EsaTrace<T>* trace = nullptr);

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& fmap, const FfnParams<T>& params);

/// Pre-norm residual block: X + ESA(LN(X)), then + FFN(LN(.)).
template <typename T>
Tensor<T> esab_forward(const Tensor<T>& fmap, const EsabParams<T>& params, const EsaConfig& cfg,
                       EsaTrace<T>* trace = nullptr);

}  // namespace ect
