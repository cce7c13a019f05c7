#pragma once

// Multi-stage U-shaped reconstruction network: a 3->31 head conv, then N_s
// stages of embedding, ESAB encoder levels with 4x4/2 downsampling, an Inter
// bottleneck, transpose-conv decoder levels with concat+1x1 skip fusion, and
// a 31-channel mapping conv. The head output is added to every stage output.

#include <cstdint>
#include <string>
#include <vector>

#include "ect/esa.hpp"
#include "ect/param_store.hpp"
#include "ect/tensor.hpp"

namespace ect {

struct EctConfig {
  std::size_t stages = 2;
  std::size_t base_channels = 32;
  std::size_t levels = 2;
  std::size_t esab_per_level = 1;
  std::size_t ffn_expansion = 4;
  std::size_t cross_c = 4, cross_s = 2, cross_k = 12;
  std::size_t inter_c = 16, inter_s = 4, inter_k = 8;
  std::size_t in_channels = 3;
  std::size_t out_channels = 31;
  bool ablate_sd3d = false;  // every block becomes Cross with c=1, s=1
  bool ablate_dlrm = false;  // dependence map replaced by the identity

  /// Base 8 channels, one stage, small splits; used for gradient checks and
  /// the overfit smoke test.
  static EctConfig tiny();

  std::size_t channels_at(std::size_t level) const { return base_channels << level; }
  std::size_t heads_at(std::size_t level) const { return std::size_t{1} << level; }
  EsaConfig encoder_block(std::size_t level) const;
  EsaConfig bottleneck_block() const;
  /// Padded extents are multiples of this.
  std::size_t pad_multiple() const;
  /// Smallest padded extent that keeps every token tile at least 2x2.
  std::size_t min_extent() const;
  /// Padded size for an input extent.
  std::size_t padded_extent(std::size_t extent) const;
  void validate() const;
};

template <typename T>
struct EctStage {
  Tensor<T> embed_weight, embed_bias;
  std::vector<std::vector<EsabParams<T>>> encoder;  // [level][block]
  std::vector<Tensor<T>> down;                      // 4x4 stride 2, C -> 2C
  std::vector<EsabParams<T>> bottleneck;
  std::vector<Tensor<T>> up_weight, up_bias;        // 2x2 transpose, 2C -> C
  std::vector<Tensor<T>> fuse;                      // 1x1, 2C -> C
  std::vector<std::vector<EsabParams<T>>> decoder;
  Tensor<T> mapping_weight, mapping_bias;
};

template <typename T>
class EctModel {
 public:
  /// Deterministic in (cfg, seed). Stage i draws from its own derived stream,
  /// so the first stages of models with different N_s start identical.
  static EctModel build(const EctConfig& cfg, std::uint64_t seed);

  /// rgb [3,H,W] or [B,3,H,W] -> [31,H,W] or [B,31,H,W]. Extents are
  /// reflect-padded internally and cropped back.
  Tensor<T> forward(const Tensor<T>& rgb) const;

  const EctConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const std::vector<EctStage<T>>& stages() const { return stages_; }
  Tensor<T> head_weight() const { return head_weight_; }
  Tensor<T> head_bias() const { return head_bias_; }

 private:
  Tensor<T> run_stage(const EctStage<T>& stage, const Tensor<T>& x) const;

  EctConfig cfg_;
  ParamStore<T> store_;
  Tensor<T> head_weight_, head_bias_;
  std::vector<EctStage<T>> stages_;
};

template <typename T>
std::size_t count_params(const ParamStore<T>& store) {
  return store.scalar_count();
}
template <typename T>
std::size_t count_params(const EctModel<T>& model) {
  return model.params().scalar_count();
}

struct FlopLine {
  std::string layer;
  std::string formula;
  std::uint64_t flops = 0;
};

struct FlopReport {
  std::vector<FlopLine> lines;
  std::uint64_t total = 0;
  std::size_t padded_height = 0, padded_width = 0;
  /// One line per layer: "<layer>  <formula>  <flops>".
  std::string sheet() const;
};

/// Analytic multiply-accumulate x2 counts at the padded extents. Convs count
/// 2*Cout*Cin/g*kh*kw*Hout*Wout; attention counts QK^T and A*V; the
/// dependence branch counts its conv1d, D = Qf*Kf^T and D*Y. Elementwise ops,
/// norms, softmax and pooling are excluded.
FlopReport count_flops(const EctConfig& cfg, std::size_t height, std::size_t width);

std::uint64_t conv_flops(std::size_t cout, std::size_t cin, std::size_t groups, std::size_t kh, std::size_t kw,
                         std::size_t hout, std::size_t wout);

extern template class EctModel<float>;
extern template class EctModel<double>;

}  // namespace ect
