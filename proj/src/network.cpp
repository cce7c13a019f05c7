#include "ect/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ect/ops.hpp"
#include "ect/rng.hpp"

namespace ect {

EctConfig EctConfig::tiny() {
  EctConfig cfg;
  cfg.stages = 1;
  cfg.base_channels = 8;
  cfg.cross_c = 4;
  cfg.cross_s = 2;
  cfg.cross_k = 4;
  cfg.inter_c = 8;
  cfg.inter_s = 2;
  cfg.inter_k = 4;
  return cfg;
}

EsaConfig EctConfig::encoder_block(std::size_t level) const {
  EsaConfig b = EsaConfig::cross_default(channels_at(level), heads_at(level));
  b.group = ablate_sd3d ? 1 : cross_c;
  b.splits = ablate_sd3d ? 1 : cross_s;
  b.rank = cross_k;
  b.use_dlrm = !ablate_dlrm;
  b.ffn_expansion = ffn_expansion;
  return b;
}

EsaConfig EctConfig::bottleneck_block() const {
  if (ablate_sd3d) return encoder_block(levels);
  EsaConfig b = EsaConfig::inter_default(channels_at(levels));
  b.group = inter_c;
  b.splits = inter_s;
  b.rank = inter_k;
  b.use_dlrm = !ablate_dlrm;
  b.ffn_expansion = ffn_expansion;
  return b;
}

std::size_t EctConfig::pad_multiple() const {
  const std::size_t s = std::max(encoder_block(0).splits, bottleneck_block().splits);
  return (std::size_t{1} << levels) * s;
}

std::size_t EctConfig::min_extent() const {
  std::size_t m = 2 * bottleneck_block().splits << levels;
  for (std::size_t l = 0; l < levels; ++l) m = std::max(m, 2 * encoder_block(l).splits << l);
  return m;
}

std::size_t EctConfig::padded_extent(std::size_t extent) const {
  const std::size_t mult = pad_multiple();
  auto round_up = [&](std::size_t v) { return (v + mult - 1) / mult * mult; };
  return std::max(round_up(extent), round_up(min_extent()));
}

void EctConfig::validate() const {
  if (stages == 0 || base_channels == 0 || esab_per_level == 0)
    throw ConfigError("network: stages, base channels and blocks per level must be positive");
  if (in_channels == 0 || out_channels == 0) throw ConfigError("network: io channel counts must be positive");
  for (std::size_t l = 0; l < levels; ++l) encoder_block(l).validate();
  bottleneck_block().validate();
}

namespace {

template <typename T>
std::vector<EsabParams<T>> make_blocks(const EsaConfig& cfg, std::size_t count, ParamStore<T>& store,
                                       const std::string& prefix, Rng& rng) {
  std::vector<EsabParams<T>> blocks;
  for (std::size_t i = 0; i < count; ++i)
    blocks.push_back(make_esab_params(cfg, store, prefix + ".esab" + std::to_string(i), rng));
  return blocks;
}

template <typename T>
Tensor<T> run_blocks(Tensor<T> x, const std::vector<EsabParams<T>>& blocks, const EsaConfig& cfg) {
  for (const auto& b : blocks) x = esab_forward(x, b, cfg);
  return x;
}

}  // namespace

template <typename T>
EctModel<T> EctModel<T>::build(const EctConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EctModel m;
  m.cfg_ = cfg;
  const std::size_t io = cfg.out_channels;
  {
    Rng rng(derive_seed(seed, 0));
    m.head_weight_ = m.store_.create("head.weight", {io, cfg.in_channels, 3, 3}, Init::normal(), rng);
    m.head_bias_ = m.store_.create("head.bias", {io}, Init::zeros(), rng);
  }
  for (std::size_t si = 0; si < cfg.stages; ++si) {
    Rng rng(derive_seed(seed, si + 1));
    const std::string sp = "stage" + std::to_string(si);
    EctStage<T> st;
    auto& store = m.store_;
    const std::size_t C0 = cfg.channels_at(0);
    st.embed_weight = store.create(sp + ".embed.weight", {C0, io, 3, 3}, Init::normal(), rng);
    st.embed_bias = store.create(sp + ".embed.bias", {C0}, Init::zeros(), rng);
    for (std::size_t l = 0; l < cfg.levels; ++l) {
      const std::size_t C = cfg.channels_at(l);
      const std::string lp = sp + ".enc" + std::to_string(l);
      st.encoder.push_back(make_blocks(cfg.encoder_block(l), cfg.esab_per_level, store, lp, rng));
      st.down.push_back(store.create(lp + ".down.weight", {2 * C, C, 4, 4}, Init::normal(), rng));
    }
    st.bottleneck = make_blocks(cfg.bottleneck_block(), cfg.esab_per_level, store, sp + ".bottleneck", rng);
    for (std::size_t i = 0; i < cfg.levels; ++i) {
      const std::size_t l = cfg.levels - 1 - i;
      const std::size_t C = cfg.channels_at(l);
      const std::string lp = sp + ".dec" + std::to_string(l);
      st.up_weight.push_back(store.create(lp + ".up.weight", {2 * C, C, 2, 2}, Init::normal(), rng));
      st.up_bias.push_back(store.create(lp + ".up.bias", {C}, Init::zeros(), rng));
      st.fuse.push_back(store.create(lp + ".fuse.weight", {C, 2 * C, 1, 1}, Init::normal(), rng));
      st.decoder.push_back(make_blocks(cfg.encoder_block(l), cfg.esab_per_level, store, lp, rng));
    }
    st.mapping_weight = store.create(sp + ".mapping.weight", {io, C0, 3, 3}, Init::normal(), rng);
    st.mapping_bias = store.create(sp + ".mapping.bias", {io}, Init::zeros(), rng);
    m.stages_.push_back(std::move(st));
  }
  return m;
}

template <typename T>
Tensor<T> EctModel<T>::run_stage(const EctStage<T>& st, const Tensor<T>& x) const {
  auto h = conv2d(x, st.embed_weight, st.embed_bias, {1, 1, 1});
  std::vector<Tensor<T>> skips;
  for (std::size_t l = 0; l < cfg_.levels; ++l) {
    h = run_blocks(h, st.encoder[l], cfg_.encoder_block(l));
    skips.push_back(h);
    h = conv2d(h, st.down[l], Tensor<T>(), {2, 1, 1});
  }
  h = run_blocks(h, st.bottleneck, cfg_.bottleneck_block());
  for (std::size_t i = 0; i < cfg_.levels; ++i) {
    const std::size_t l = cfg_.levels - 1 - i;
    h = conv_transpose2d(h, st.up_weight[i], st.up_bias[i]);
    h = conv2d(concat<T>({skips[l], h}, 1), st.fuse[i], Tensor<T>());
    h = run_blocks(h, st.decoder[i], cfg_.encoder_block(l));
  }
  return conv2d(h, st.mapping_weight, st.mapping_bias, {1, 1, 1});
}

template <typename T>
Tensor<T> EctModel<T>::forward(const Tensor<T>& rgb) const {
  const bool batched = rgb.rank() == 4;
  if (rgb.rank() != 3 && !batched)
    throw DimensionError("forward: expected [3,H,W] or [B,3,H,W], got " + shape_str(rgb.shape()));
  const std::size_t ch = rgb.dim(batched ? 1 : 0);
  if (ch != cfg_.in_channels)
    throw DimensionError("forward: input has " + std::to_string(ch) + " channels, model expects " +
                         std::to_string(cfg_.in_channels));
  if (!all_finite<T>(rgb.data())) throw NumericError("forward: input contains non-finite values");

  auto x = batched ? rgb : reshape(rgb, {1, rgb.dim(0), rgb.dim(1), rgb.dim(2)});
  const std::size_t H = x.dim(2), W = x.dim(3);
  const std::size_t PH = cfg_.padded_extent(H), PW = cfg_.padded_extent(W);
  const std::size_t top = (PH - H) / 2, left = (PW - W) / 2;
  if (PH != H || PW != W) x = pad_reflect2d(x, top, PH - H - top, left, PW - W - left);

  auto head = conv2d(x, head_weight_, head_bias_, {1, 1, 1});
  auto y = head;
  for (const auto& st : stages_) y = add(run_stage(st, y), head);

  if (PH != H) y = slice(y, 2, top, H);
  if (PW != W) y = slice(y, 3, left, W);
  return batched ? y : reshape(y, {y.dim(1), H, W});
}

std::uint64_t conv_flops(std::size_t cout, std::size_t cin, std::size_t groups, std::size_t kh, std::size_t kw,
                         std::size_t hout, std::size_t wout) {
  return 2ull * cout * (cin / groups) * kh * kw * hout * wout;
}

namespace {

std::string conv_formula(std::size_t cout, std::size_t cin, std::size_t g, std::size_t k, std::size_t h,
                         std::size_t w) {
  std::ostringstream os;
  os << "2*" << cout << "*" << cin << "/" << g << "*" << k << "*" << k << "*" << h << "*" << w;
  return os.str();
}

void add_esab_flops(FlopReport& r, const std::string& name, const EsaConfig& b, std::size_t h, std::size_t w) {
  const std::size_t C = b.channels, c = b.group, s = b.splits, G = C / c;
  const std::size_t n = b.attention_length(h, w), area = (h / s) * (w / s);
  const std::size_t tokens = G * s * s, d = c * area;
  auto line = [&](const std::string& part, const std::string& f, std::uint64_t v) {
    r.lines.push_back({name + "." + part, f, v});
  };
  for (const char* p : {"pos1", "pos2"}) line(p, conv_formula(C, C, G, 3, h, w), conv_flops(C, C, G, 3, 3, h, w));
  for (const char* p : {"query", "key", "value", "proj"})
    line(p, conv_formula(C, C, 1, 1, h, w), conv_flops(C, C, 1, 1, 1, h, w));
  if (b.variant == EsaVariant::Cross) {
    const std::size_t heads = b.effective_heads(), dh = d / heads;
    const std::uint64_t att = 2ull * heads * n * n * dh;
    const std::string f = "2*" + std::to_string(heads) + "*" + std::to_string(n) + "^2*" + std::to_string(dh);
    line("qk", f, att);
    line("av", f, att);
    if (b.use_dlrm) {
      const std::uint64_t conv = 2ull * b.rank * 4 * c * 3 * n;
      line("lrf_q", "2*k*4c*3*n", conv);
      line("lrf_k", "2*k*4c*3*n", conv);
      line("dlrm", "2*n^2*k", 2ull * n * n * b.rank);
      line("dy", "2*n^2*d", 2ull * n * n * d);
    }
  } else {
    const std::uint64_t att = 2ull * tokens * c * c * area;
    const std::string f = "2*" + std::to_string(tokens) + "*" + std::to_string(c) + "^2*" + std::to_string(area);
    line("qk", f, att);
    line("av", f, att);
    if (b.use_dlrm) {
      const std::uint64_t conv = 2ull * tokens * b.rank * 4 * 3 * c;
      line("lrf_q", "2*n*k*4*3*c", conv);
      line("lrf_k", "2*n*k*4*3*c", conv);
      line("dlrm", "2*n*c^2*k", 2ull * tokens * c * c * b.rank);
      line("dy", "2*n*c^2*area", 2ull * tokens * c * c * area);
    }
  }
  const std::size_t e = b.ffn_expansion * C;
  line("ffn.expand", conv_formula(e, C, 1, 1, h, w), conv_flops(e, C, 1, 1, 1, h, w));
  line("ffn.depthwise", conv_formula(e, e, e, 3, h, w), conv_flops(e, e, e, 3, 3, h, w));
  line("ffn.reduce", conv_formula(C, e, 1, 1, h, w), conv_flops(C, e, 1, 1, 1, h, w));
}

}  // namespace

FlopReport count_flops(const EctConfig& cfg, std::size_t height, std::size_t width) {
  cfg.validate();
  FlopReport r;
  const std::size_t H = cfg.padded_extent(height), W = cfg.padded_extent(width);
  r.padded_height = H;
  r.padded_width = W;
  const std::size_t io = cfg.out_channels, C0 = cfg.channels_at(0);
  r.lines.push_back({"head", conv_formula(io, cfg.in_channels, 1, 3, H, W),
                     conv_flops(io, cfg.in_channels, 1, 3, 3, H, W)});
  for (std::size_t si = 0; si < cfg.stages; ++si) {
    const std::string sp = "stage" + std::to_string(si);
    r.lines.push_back({sp + ".embed", conv_formula(C0, io, 1, 3, H, W), conv_flops(C0, io, 1, 3, 3, H, W)});
    for (std::size_t l = 0; l < cfg.levels; ++l) {
      const std::size_t C = cfg.channels_at(l), h = H >> l, w = W >> l;
      const std::string lp = sp + ".enc" + std::to_string(l);
      for (std::size_t b = 0; b < cfg.esab_per_level; ++b)
        add_esab_flops(r, lp + ".esab" + std::to_string(b), cfg.encoder_block(l), h, w);
      r.lines.push_back({lp + ".down", conv_formula(2 * C, C, 1, 4, h / 2, w / 2),
                         conv_flops(2 * C, C, 1, 4, 4, h / 2, w / 2)});
    }
    for (std::size_t b = 0; b < cfg.esab_per_level; ++b)
      add_esab_flops(r, sp + ".bottleneck.esab" + std::to_string(b), cfg.bottleneck_block(), H >> cfg.levels,
                     W >> cfg.levels);
    for (std::size_t i = 0; i < cfg.levels; ++i) {
      const std::size_t l = cfg.levels - 1 - i;
      const std::size_t C = cfg.channels_at(l), h = H >> l, w = W >> l;
      const std::string lp = sp + ".dec" + std::to_string(l);
      r.lines.push_back({lp + ".up", "2*" + std::to_string(2 * C) + "*" + std::to_string(C) + "*2*2*" +
                                         std::to_string(h / 2) + "*" + std::to_string(w / 2),
                         2ull * 2 * C * C * 4 * (h / 2) * (w / 2)});
      r.lines.push_back({lp + ".fuse", conv_formula(C, 2 * C, 1, 1, h, w), conv_flops(C, 2 * C, 1, 1, 1, h, w)});
      for (std::size_t b = 0; b < cfg.esab_per_level; ++b)
        add_esab_flops(r, lp + ".esab" + std::to_string(b), cfg.encoder_block(l), h, w);
    }
    r.lines.push_back({sp + ".mapping", conv_formula(io, C0, 1, 3, H, W), conv_flops(io, C0, 1, 3, 3, H, W)});
  }
  for (const auto& l : r.lines) r.total += l.flops;
  return r;
}

std::string FlopReport::sheet() const {
  std::ostringstream os;
  os << "# padded input " << padded_height << "x" << padded_width << "\n";
  for (const auto& l : lines) os << l.layer << "  " << l.formula << "  " << l.flops << "\n";
  os << "total  " << total << "\n";
  return os.str();
}

template class EctModel<float>;
template class EctModel<double>;

}  // namespace ect
