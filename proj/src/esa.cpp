#include "ect/esa.hpp"

#include <numeric>

#include "ect/ops.hpp"

namespace ect {

EsaConfig EsaConfig::cross_default(std::size_t channels, std::size_t heads) {
  EsaConfig cfg;
  cfg.variant = EsaVariant::Cross;
  cfg.channels = channels;
  cfg.group = 4;
  cfg.splits = 2;
  cfg.rank = 12;
  cfg.heads = heads;
  return cfg;
}

EsaConfig EsaConfig::inter_default(std::size_t channels) {
  EsaConfig cfg;
  cfg.variant = EsaVariant::Inter;
  cfg.channels = channels;
  cfg.group = 16;
  cfg.splits = 4;
  cfg.rank = 8;
  cfg.heads = 1;
  return cfg;
}

std::size_t EsaConfig::effective_heads() const {
  return variant == EsaVariant::Cross ? std::gcd(heads, group) : 1;
}

std::size_t EsaConfig::attention_length(std::size_t, std::size_t) const {
  if (variant == EsaVariant::Inter) return group;
  return channels / group * splits * splits;
}

void EsaConfig::validate() const {
  if (channels == 0 || group == 0 || splits == 0 || rank == 0 || heads == 0 || ffn_expansion == 0)
    throw ConfigError("esa: all sizes must be positive");
  if (channels % group != 0)
    throw DimensionError("esa: channels=" + std::to_string(channels) + " not divisible by c=" + std::to_string(group));
  const std::size_t axis = attention_length(0, 0);
  if (use_dlrm && rank > axis)
    throw ConfigError("esa: low-rank factor k=" + std::to_string(rank) + " exceeds attention length " +
                      std::to_string(axis));
}

template <typename T>
EsabParams<T> make_esab_params(const EsaConfig& cfg, ParamStore<T>& store, const std::string& prefix, Rng& rng) {
  cfg.validate();
  const std::size_t C = cfg.channels, c = cfg.group, e = cfg.ffn_expansion * C;
  const std::size_t lrf_in = 4 * (cfg.variant == EsaVariant::Cross ? c : 1);
  auto name = [&](const char* leaf) { return prefix + "." + leaf; };
  EsabParams<T> p;
  p.norm1_gamma = store.create(name("norm1.gamma"), {C}, Init::ones(), rng);
  p.norm1_beta = store.create(name("norm1.beta"), {C}, Init::zeros(), rng);
  auto& a = p.esa;
  a.pos1_weight = store.create(name("esa.pos1.weight"), {C, c, 3, 3}, Init::normal(), rng);
  a.pos1_bias = store.create(name("esa.pos1.bias"), {C}, Init::zeros(), rng);
  a.pos2_weight = store.create(name("esa.pos2.weight"), {C, c, 3, 3}, Init::normal(), rng);
  a.pos2_bias = store.create(name("esa.pos2.bias"), {C}, Init::zeros(), rng);
  a.query = store.create(name("esa.query.weight"), {C, C, 1, 1}, Init::normal(), rng);
  a.key = store.create(name("esa.key.weight"), {C, C, 1, 1}, Init::normal(), rng);
  a.value = store.create(name("esa.value.weight"), {C, C, 1, 1}, Init::normal(), rng);
  a.tau = store.create(name("esa.tau"), {cfg.effective_heads()}, Init::constant(cfg.tau_init), rng);
  if (cfg.use_dlrm) {
    a.lrf_q_weight = store.create(name("esa.lrf_q.weight"), {cfg.rank, lrf_in, 3}, Init::normal(), rng);
    a.lrf_q_bias = store.create(name("esa.lrf_q.bias"), {cfg.rank}, Init::zeros(), rng);
    a.lrf_k_weight = store.create(name("esa.lrf_k.weight"), {cfg.rank, lrf_in, 3}, Init::normal(), rng);
    a.lrf_k_bias = store.create(name("esa.lrf_k.bias"), {cfg.rank}, Init::zeros(), rng);
  }
  a.proj_weight = store.create(name("esa.proj.weight"), {C, C, 1, 1}, Init::normal(), rng);
  a.proj_bias = store.create(name("esa.proj.bias"), {C}, Init::zeros(), rng);
  p.norm2_gamma = store.create(name("norm2.gamma"), {C}, Init::ones(), rng);
  p.norm2_beta = store.create(name("norm2.beta"), {C}, Init::zeros(), rng);
  p.ffn.expand = store.create(name("ffn.expand.weight"), {e, C, 1, 1}, Init::normal(), rng);
  p.ffn.depthwise = store.create(name("ffn.depthwise.weight"), {e, 1, 3, 3}, Init::normal(), rng);
  p.ffn.reduce = store.create(name("ffn.reduce.weight"), {C, e, 1, 1}, Init::normal(), rng);
  return p;
}

template <typename T>
Tensor<T> positional_encoding(const Tensor<T>& fmap, const EsaParams<T>& params, const EsaConfig& cfg) {
  const std::size_t C = fmap.dim(1), c = cfg.group, G = C / c;
  // Gather each strided spectral group {g, g+G, ...} into a contiguous run,
  // convolve group-wise, then scatter back.
  auto grouped = channel_shuffle(fmap, c);
  auto h = gelu(conv2d(grouped, params.pos1_weight, params.pos1_bias, {1, 1, G}));
  h = conv2d(h, params.pos2_weight, params.pos2_bias, {1, 1, G});
  return add(fmap, channel_shuffle(h, G));
}

template <typename T>
Tensor<T> ussa(const Tensor<T>& query, const Tensor<T>& key, const Tensor<T>& tau) {
  if (query.shape() != key.shape())
    throw DimensionError("ussa: query " + shape_str(query.shape()) + " vs key " + shape_str(key.shape()));
  const bool batched = query.rank() == 3;
  auto q = batched ? query : reshape(query, {1, query.dim(0), query.dim(1)});
  auto k = batched ? key : reshape(key, {1, key.dim(0), key.dim(1)});
  auto cosine = matmul(l2_normalize_rows(q), transpose(l2_normalize_rows(k)));
  auto attn = softmax(scale_batches(cosine, tau), 2);
  return batched ? attn : reshape(attn, {query.dim(0), query.dim(0)});
}

template <typename T>
Tensor<T> lrf(const Tensor<T>& tokens, std::size_t depth, std::size_t tile_h, std::size_t tile_w,
              const Tensor<T>& weight, const Tensor<T>& bias) {
  if (tokens.rank() != 3 || tokens.dim(2) != depth * tile_h * tile_w)
    throw DimensionError("lrf: tokens " + shape_str(tokens.shape()) + " do not hold " + std::to_string(depth) +
                         " planes of " + std::to_string(tile_h) + "x" + std::to_string(tile_w));
  if (tile_h < 2 || tile_w < 2)
    throw DimensionError("lrf: token tile " + std::to_string(tile_h) + "x" + std::to_string(tile_w) +
                         " is smaller than 2x2");
  const std::size_t batch = tokens.dim(0), len = tokens.dim(1);
  auto planes = reshape(tokens, {batch, len * depth, tile_h, tile_w});
  auto pooled = reshape(adaptive_avg_pool2d(planes, 2, 2), {batch, len, depth * 4});
  auto mixed = conv1d(transpose(pooled), weight, bias, 1);  // [B, k, L]
  return softmax(transpose(mixed), 2);
}

template <typename T>
Tensor<T> dlrm(const Tensor<T>& query_features, const Tensor<T>& key_features) {
  if (query_features.shape() != key_features.shape())
    throw DimensionError("dlrm: low-rank features differ " + shape_str(query_features.shape()) + " vs " +
                         shape_str(key_features.shape()));
  return matmul(query_features, transpose(key_features));
}

namespace {

// [B, n, h*dh] -> [B*h, n, dh]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& tokens, std::size_t heads) {
  const std::size_t B = tokens.dim(0), n = tokens.dim(1), d = tokens.dim(2);
  if (heads == 1) return tokens;
  auto t = permute(reshape(tokens, {B, n, heads, d / heads}), {0, 2, 1, 3});
  return reshape(t, {B * heads, n, d / heads});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& tokens, std::size_t heads) {
  if (heads == 1) return tokens;
  const std::size_t B = tokens.dim(0) / heads, n = tokens.dim(1), dh = tokens.dim(2);
  auto t = permute(reshape(tokens, {B, heads, n, dh}), {0, 2, 1, 3});
  return reshape(t, {B, n, heads * dh});
}

}  // namespace

template <typename T>
Tensor<T> esa_forward(const Tensor<T>& fmap, const EsaParams<T>& params, const EsaConfig& cfg, EsaTrace<T>* trace) {
  if (fmap.rank() != 4) throw DimensionError("esa_forward: expected [B,C,H,W], got " + shape_str(fmap.shape()));
  if (fmap.dim(1) != cfg.channels)
    throw DimensionError("esa_forward: input has " + std::to_string(fmap.dim(1)) + " channels, block expects " +
                         std::to_string(cfg.channels));
  cfg.validate();
  const std::size_t c = cfg.group, s = cfg.splits;
  auto x = positional_encoding(fmap, params, cfg);
  auto tq = sd3d_split(conv2d(x, params.query, Tensor<T>()), c, s);
  auto tk = sd3d_split(conv2d(x, params.key, Tensor<T>()), c, s);
  auto tv = sd3d_split(conv2d(x, params.value, Tensor<T>()), c, s);
  const SplitSpec spec = tq.spec;
  const std::size_t B = fmap.dim(0), n = spec.token_count(), d = spec.token_dim(), area = spec.tile_area();

  Tensor<T> fused;
  if (cfg.variant == EsaVariant::Cross) {
    const std::size_t h = cfg.effective_heads();
    auto attn = ussa(split_heads(tq.tokens, h), split_heads(tk.tokens, h), params.tau);
    if (trace) trace->attention = attn;
    fused = merge_heads(matmul(attn, split_heads(tv.tokens, h)), h);
  } else {
    auto sub = [&](const Tensor<T>& t) { return reshape(t, {B * n, c, area}); };
    auto attn = ussa(sub(tq.tokens), sub(tk.tokens), params.tau);
    if (trace) trace->attention = attn;
    fused = reshape(matmul(attn, sub(tv.tokens)), {B, n, d});
  }

  auto y = conv2d(sd3d_align(TokenGrid<T>{fused, spec, 1}), params.proj_weight, params.proj_bias);

  if (cfg.use_dlrm) {
    auto ty = sd3d_split(y, c, s).tokens;
    Tensor<T> dep, mixed;
    if (cfg.variant == EsaVariant::Cross) {
      dep = dlrm(lrf(tq.tokens, c, spec.tile_height(), spec.tile_width(), params.lrf_q_weight, params.lrf_q_bias),
                 lrf(tk.tokens, c, spec.tile_height(), spec.tile_width(), params.lrf_k_weight, params.lrf_k_bias));
      mixed = matmul(dep, ty);
    } else {
      auto sub = [&](const Tensor<T>& t) { return reshape(t, {B * n, c, area}); };
      dep = dlrm(lrf(sub(tq.tokens), 1, spec.tile_height(), spec.tile_width(), params.lrf_q_weight, params.lrf_q_bias),
                 lrf(sub(tk.tokens), 1, spec.tile_height(), spec.tile_width(), params.lrf_k_weight, params.lrf_k_bias));
      mixed = reshape(matmul(dep, sub(ty)), {B, n, d});
    }
    if (trace) trace->dependence = dep;
    y = sd3d_align(TokenGrid<T>{mixed, spec, 1});
  }
  return channel_shuffle(y, spec.spectral_groups());
}

template <typename T>
Tensor<T> ffn_forward(const Tensor<T>& fmap, const FfnParams<T>& params) {
  const std::size_t hidden = params.expand.dim(0);
  auto h = gelu(conv2d(fmap, params.expand, Tensor<T>()));
  h = gelu(conv2d(h, params.depthwise, Tensor<T>(), {1, 1, hidden}));
  return conv2d(h, params.reduce, Tensor<T>());
}

template <typename T>
Tensor<T> esab_forward(const Tensor<T>& fmap, const EsabParams<T>& params, const EsaConfig& cfg, EsaTrace<T>* trace) {
  auto x1 = add(fmap, esa_forward(layer_norm(fmap, params.norm1_gamma, params.norm1_beta, 1), params.esa, cfg, trace));
  return add(x1, ffn_forward(layer_norm(x1, params.norm2_gamma, params.norm2_beta, 1), params.ffn));
}

#define ECT_INST(T)                                                                                               \
  template EsabParams<T> make_esab_params(const EsaConfig&, ParamStore<T>&, const std::string&, Rng&);            \
  template Tensor<T> positional_encoding(const Tensor<T>&, const EsaParams<T>&, const EsaConfig&);                \
  template Tensor<T> ussa(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> lrf(const Tensor<T>&, std::size_t, std::size_t, std::size_t, const Tensor<T>&,               \
                         const Tensor<T>&);                                                                       \
  template Tensor<T> dlrm(const Tensor<T>&, const Tensor<T>&);                                                    \
  template Tensor<T> esa_forward(const Tensor<T>&, const EsaParams<T>&, const EsaConfig&, EsaTrace<T>*);          \
  template Tensor<T> ffn_forward(const Tensor<T>&, const FfnParams<T>&);                                          \
  template Tensor<T> esab_forward(const Tensor<T>&, const EsabParams<T>&, const EsaConfig&, EsaTrace<T>*);
ECT_INST(float)
ECT_INST(double)
#undef ECT_INST

}  // namespace ect
