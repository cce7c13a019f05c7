#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ect/checkpoint.hpp"
#include "ect/gradcheck.hpp"
#include "ect/network.hpp"
#include "ect/ops.hpp"
#include "test_support.hpp"

using namespace ect;
using ect::testing::random_param;
using ect::testing::random_tensor;
using ect::testing::to_vec;

namespace {

std::string temp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / ("ect_test_network_" + leaf)).string();
}

// Closed-form scalar count of one ESAB, written independently of the
// registration code.
std::size_t esab_count(std::size_t C, std::size_t c, std::size_t k, bool inter, bool dlrm, std::size_t heads) {
  std::size_t n = 4 * C;                    // two LayerNorms
  n += 2 * (C * c * 9 + C);                 // grouped positional convs
  n += 4 * C * C + C;                       // Q, K, V, output projection
  n += inter ? 1 : std::gcd(heads, c);      // tau
  if (dlrm) n += 2 * (k * 4 * (inter ? 1 : c) * 3 + k);
  n += 4 * C * C + 4 * C * 9 + 4 * C * C;   // FFN
  return n;
}

std::size_t stage_count(const EctConfig& cfg) {
  const std::size_t io = cfg.out_channels, C0 = cfg.base_channels;
  std::size_t n = io * C0 * 9 + C0 + C0 * io * 9 + io;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::size_t C = C0 << l, h = std::size_t{1} << l;
    const std::size_t c = cfg.ablate_sd3d ? 1 : cfg.cross_c;
    n += 2 * esab_count(C, c, cfg.cross_k, false, !cfg.ablate_dlrm, h);
    n += 2 * C * C * 16;                        // down
    n += 2 * C * C * 4 + C + C * 2 * C;         // up + fuse
  }
  const std::size_t Cb = C0 << cfg.levels;
  if (cfg.ablate_sd3d)
    n += esab_count(Cb, 1, cfg.cross_k, false, !cfg.ablate_dlrm, 1);
  else
    n += esab_count(Cb, cfg.inter_c, cfg.inter_k, true, !cfg.ablate_dlrm, 1);
  return n;
}

}  // namespace

TEST_CASE("parameter count of a single conv") {
  Rng rng(1);
  ParamStore<float> store;
  CHECK(count_params(store) == 0);
  store.create("w", {32, 31, 3, 3}, Init::normal(), rng);
  store.create("b", {32}, Init::zeros(), rng);
  CHECK(count_params(store) == 8960);
}

TEST_CASE("model parameter counts") {
  std::size_t counts[3];
  for (std::size_t s = 1; s <= 3; ++s) {
    EctConfig cfg;
    cfg.stages = s;
    auto m = EctModel<float>::build(cfg, 1);
    counts[s - 1] = count_params(m);
    CHECK(counts[s - 1] == 31 * 3 * 9 + 31 + s * stage_count(cfg));
  }
  CHECK(counts[2] - counts[1] == counts[1] - counts[0]);
  CHECK(std::abs(double(counts[0]) - 0.60e6) <= 0.15 * 0.60e6);
  CHECK(std::abs(double(counts[1]) - 1.19e6) <= 0.15 * 1.19e6);
  CHECK(std::abs(double(counts[2]) - 1.78e6) <= 0.15 * 1.78e6);

  SUBCASE("ablations") {
    std::size_t ablated[4];
    for (int a = 0; a < 4; ++a) {
      EctConfig cfg;
      cfg.ablate_sd3d = !(a & 2);
      cfg.ablate_dlrm = !(a & 1);
      ablated[a] = count_params(EctModel<float>::build(cfg, 1));
      CHECK(ablated[a] == 31 * 3 * 9 + 31 + 2 * stage_count(cfg));
    }
    CHECK(ablated[0] < ablated[1]);
    CHECK(ablated[1] < ablated[2]);
    CHECK(ablated[2] < ablated[3]);
  }
}

TEST_CASE("configuration") {
  EctConfig cfg;
  CHECK(cfg.channels_at(2) == 128);
  CHECK(cfg.heads_at(2) == 4);
  CHECK(cfg.pad_multiple() == 16);
  CHECK(cfg.padded_extent(128) == 128);
  CHECK(cfg.padded_extent(482) == 496);
  CHECK(cfg.padded_extent(5) == 32);
  CHECK(cfg.bottleneck_block().variant == EsaVariant::Inter);
  auto bad = cfg;
  bad.base_channels = 6;
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  auto wide = cfg;
  wide.inter_k = 17;
  CHECK_THROWS_AS(EctModel<float>::build(wide, 1), ConfigError);
  auto baseline = cfg;
  baseline.ablate_sd3d = true;
  CHECK(baseline.bottleneck_block().variant == EsaVariant::Cross);
  CHECK(baseline.bottleneck_block().group == 1);
  CHECK(baseline.bottleneck_block().attention_length(8, 8) == 128);
}

TEST_CASE("deterministic construction") {
  auto a = EctModel<float>::build(EctConfig::tiny(), 5);
  auto b = EctModel<float>::build(EctConfig::tiny(), 5);
  auto c = EctModel<float>::build(EctConfig::tiny(), 6);
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    same = same && to_vec(a.params().entries()[i].second) == to_vec(b.params().entries()[i].second);
    differs = differs || to_vec(a.params().entries()[i].second) != to_vec(c.params().entries()[i].second);
  }
  CHECK(same);
  CHECK(differs);
  // The first stage is independent of the stage count.
  auto two = EctConfig::tiny();
  two.stages = 2;
  auto d = EctModel<float>::build(two, 5);
  for (const auto& [name, t] : a.params().entries()) CHECK(to_vec(d.params().get(name)) == to_vec(t));
}

TEST_CASE("forward shapes") {
  Rng rng(3);
  NoGradGuard ng;
  SUBCASE("default model at patch size") {
    auto m = EctModel<float>::build(EctConfig{}, 1);
    CHECK(m.forward(random_tensor<float>({3, 128, 128}, rng, 0, 1)).shape() == Shape{31, 128, 128});
  }
  SUBCASE("odd sizes are padded and cropped") {
    auto m = EctModel<float>::build(EctConfig::tiny(), 1);
    CHECK(m.forward(random_tensor<float>({3, 482, 512}, rng, 0, 1)).shape() == Shape{31, 482, 512});
    CHECK(m.forward(random_tensor<float>({2, 3, 9, 21}, rng, 0, 1)).shape() == Shape{2, 31, 9, 21});
  }
  SUBCASE("input validation") {
    auto m = EctModel<float>::build(EctConfig::tiny(), 1);
    CHECK_THROWS_AS(m.forward(Tensor<float>({4, 16, 16}, 0.f)), DimensionError);
    auto bad = Tensor<float>({3, 16, 16}, 0.f);
    bad.mutable_data()[7] = std::nanf("");
    CHECK_THROWS_AS(m.forward(bad), NumericError);
  }
}

TEST_CASE("zero mapping reduces to the head conv") {
  Rng rng(4);
  auto cfg = EctConfig::tiny();
  cfg.stages = 2;
  auto m = EctModel<double>::build(cfg, 1);
  for (const auto& st : m.stages())
    for (auto t : {st.mapping_weight, st.mapping_bias})
      for (auto& v : t.mutable_data()) v = 0.0;
  auto x = random_tensor({1, 3, 16, 16}, rng, 0, 1);
  auto head = conv2d(x, m.head_weight(), m.head_bias(), {1, 1, 1});
  CHECK(to_vec(m.forward(x)) == to_vec(head));
}

TEST_CASE("end-to-end gradient") {
  Rng rng(5);
  auto m = EctModel<double>::build(EctConfig::tiny(), 2);
  for (auto t : m.params().tensors())
    for (auto& v : t.mutable_data()) v = rng.uniform(-0.3, 0.3);
  auto x = random_param({1, 3, 16, 16}, rng, 0, 1);
  auto params = m.params().tensors();
  params.push_back(x);
  GradCheckOptions opts;
  opts.max_coords_per_param = 6;
  opts.seed = 9;
  // Some gradients here are ~1e-6, so the 2-point stencil at small h is
  // dominated by cancellation; the 4-point stencil allows h = 1e-3.
  opts.stencil = 4;
  opts.eps = 1e-3;
  auto err = ect::testing::probe_check([&] { return m.forward(x); }, params, 7, opts);
  CHECK(err <= 1e-4);
}

TEST_CASE("flop accounting") {
  CHECK(conv_flops(16, 16, 1, 1, 1, 8, 8) == 2ull * 16 * 16 * 8 * 8);
  auto base = count_flops(EctConfig::tiny(), 32, 32);
  auto tall = count_flops(EctConfig::tiny(), 64, 32);
  std::uint64_t conv_a = 0, conv_b = 0;
  for (std::size_t i = 0; i < base.lines.size(); ++i) {
    REQUIRE(base.lines[i].layer == tall.lines[i].layer);
    const auto& name = base.lines[i].layer;
    if (name.find("embed") != std::string::npos || name.find("mapping") != std::string::npos ||
        name.find("down") != std::string::npos || name.find("ffn") != std::string::npos) {
      conv_a += base.lines[i].flops;
      conv_b += tall.lines[i].flops;
    }
  }
  CHECK(conv_b == 2 * conv_a);
  auto full = count_flops(EctConfig{}, 256, 256);
  CHECK(full.total > 16.75e9 / 10);
  CHECK(full.total < 16.75e9 * 10);
  CHECK(full.sheet().find("total") != std::string::npos);
}

TEST_CASE("checkpoint round trip") {
  Rng rng(6);
  auto m = EctModel<float>::build(EctConfig::tiny(), 3);
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(m.params(), path);
  auto other = EctModel<float>::build(EctConfig::tiny(), 4);
  load_checkpoint(other.params(), path);
  for (const auto& [name, t] : m.params().entries()) CHECK(to_vec(other.params().get(name)) == to_vec(t));
  NoGradGuard ng;
  auto x = random_tensor<float>({3, 16, 16}, rng, 0, 1);
  CHECK(to_vec(other.forward(x)) == to_vec(m.forward(x)));

  SUBCASE("truncated file") {
    const auto cut = temp_path("cut.ckpt");
    {
      std::ifstream in(path, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), {});
      std::ofstream(cut, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(other.params(), cut), FormatError);
    std::remove(cut.c_str());
  }
  SUBCASE("bad magic") {
    const auto bad = temp_path("magic.ckpt");
    std::ofstream(bad, std::ios::binary) << "NOTACKPT";
    CHECK_THROWS_AS(load_checkpoint(other.params(), bad), FormatError);
    std::remove(bad.c_str());
  }
  SUBCASE("shape mismatch names the tensor") {
    auto cfg = EctConfig::tiny();
    cfg.base_channels = 16;
    auto wider = EctModel<float>::build(cfg, 1);
    try {
      load_checkpoint(wider.params(), path);
      FAIL("expected a shape mismatch");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("head.weight") == std::string::npos);
      CHECK(std::string(e.what()).find("stage0.embed.weight") != std::string::npos);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("partial load into a deeper model") {
  Rng rng(7);
  auto one = EctModel<float>::build(EctConfig::tiny(), 11);
  auto cfg2 = EctConfig::tiny();
  cfg2.stages = 2;
  auto two = EctModel<float>::build(cfg2, 12);
  std::vector<std::vector<double>> stage1_before;
  for (const auto& [name, t] : two.params().entries())
    if (name.rfind("stage1.", 0) == 0) stage1_before.push_back(to_vec(t));

  const auto path = temp_path("partial.ckpt");
  save_checkpoint(one.params(), path);
  CHECK(load_partial(two.params(), path) == one.params().size());
  for (const auto& [name, t] : one.params().entries()) CHECK(to_vec(two.params().get(name)) == to_vec(t));
  std::size_t i = 0;
  for (const auto& [name, t] : two.params().entries())
    if (name.rfind("stage1.", 0) == 0) CHECK(to_vec(t) == stage1_before[i++]);

  NoGradGuard ng;
  auto y = two.forward(random_tensor<float>({3, 16, 16}, rng, 0, 1));
  CHECK(all_finite<float>(y.data()));

  ParamStore<float> unrelated;
  unrelated.create("something.else", {2}, Init::zeros(), rng);
  CHECK_THROWS_AS(load_partial(unrelated, path), FormatError);
  std::remove(path.c_str());
}
