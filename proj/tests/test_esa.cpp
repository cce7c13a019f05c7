#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ect/esa.hpp"
#include "ect/ops.hpp"
#include "test_support.hpp"

using namespace ect;
using ect::testing::probe_check;
using ect::testing::random_param;
using ect::testing::random_tensor;
using ect::testing::singular_values;
using ect::testing::to_vec;
using T64 = Tensor<double>;

namespace {

// Replaces every registered value with U(lo, hi) so gradients are not
// dominated by the tiny default initialization.
void randomize(ParamStore<double>& store, Rng& rng, double lo = -0.5, double hi = 0.5) {
  for (auto t : store.tensors())
    for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
}

void fill(T64 t, double value) {
  for (auto& v : t.mutable_data()) v = value;
}

double max_abs_diff(const T64& a, const T64& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

EsaConfig small_cross(std::size_t C, std::size_t c, std::size_t s, std::size_t k, std::size_t heads = 1) {
  EsaConfig cfg = EsaConfig::cross_default(C, heads);
  cfg.group = c;
  cfg.splits = s;
  cfg.rank = k;
  return cfg;
}

}  // namespace

TEST_CASE("default block configurations") {
  auto cross = EsaConfig::cross_default(32);
  CHECK(cross.group == 4);
  CHECK(cross.splits == 2);
  CHECK(cross.rank == 12);
  CHECK(cross.attention_length(16, 16) == 32);
  auto inter = EsaConfig::inter_default(128);
  CHECK(inter.group == 16);
  CHECK(inter.splits == 4);
  CHECK(inter.rank == 8);
  CHECK(inter.attention_length(8, 8) == 16);
  CHECK(EsaConfig::cross_default(64, 2).effective_heads() == 2);
  auto too_wide = small_cross(8, 4, 1, 3);
  CHECK_THROWS_AS(too_wide.validate(), ConfigError);
  auto bad_group = small_cross(6, 4, 1, 1);
  CHECK_THROWS_AS(bad_group.validate(), DimensionError);
}

TEST_CASE("positional encoding") {
  Rng rng(3);
  ParamStore<double> store;
  auto cfg = small_cross(8, 4, 2, 2);
  auto p = make_esab_params(cfg, store, "blk", rng).esa;
  auto x = random_tensor({2, 8, 6, 6}, rng);

  SUBCASE("zero weights give the identity") {
    for (auto t : {p.pos1_weight, p.pos2_weight, p.pos1_bias, p.pos2_bias}) fill(t, 0.0);
    auto y = positional_encoding(x, p, cfg);
    CHECK(to_vec(y) == to_vec(x));
  }
  SUBCASE("shape and gradient") {
    randomize(store, rng);
    CHECK(positional_encoding(x, p, cfg).shape() == x.shape());
    auto xp = random_param({1, 8, 4, 4}, rng);
    double err = probe_check([&] { return positional_encoding(xp, p, cfg); },
                             {xp, p.pos1_weight, p.pos1_bias, p.pos2_weight, p.pos2_bias});
    CHECK(err <= 1e-5);
  }
  SUBCASE("group width one is depthwise") {
    auto dw = small_cross(4, 1, 1, 1);
    ParamStore<double> s2;
    auto q = make_esab_params(dw, s2, "dw", rng).esa;
    CHECK(q.pos1_weight.shape() == Shape{4, 1, 3, 3});
    // Perturbing channel 2 of the input changes only channel 2 of the output.
    randomize(s2, rng);
    auto a = random_tensor({1, 4, 5, 5}, rng);
    auto b = a.clone();
    b.mutable_data()[2 * 25 + 12] += 1.0;
    auto ya = positional_encoding(a, q, dw), yb = positional_encoding(b, q, dw);
    for (std::size_t ch = 0; ch < 4; ++ch) {
      double diff = 0.0;
      for (std::size_t i = 0; i < 25; ++i) diff += std::abs(ya.data()[ch * 25 + i] - yb.data()[ch * 25 + i]);
      if (ch == 2)
        CHECK(diff > 0.0);
      else
        CHECK(diff == 0.0);
    }
  }
}

TEST_CASE("ussa closed forms") {
  Rng rng(5);
  T64 one({1}, 1.0);
  SUBCASE("single token") {
    auto q = random_tensor({1, 4}, rng);
    auto a = ussa(q, q, one);
    CHECK(to_vec(a) == std::vector<double>{1.0});
  }
  SUBCASE("zero temperature is uniform") {
    auto q = random_tensor({5, 3}, rng), k = random_tensor({5, 3}, rng);
    auto a = ussa(q, k, T64({1}, 0.0));
    for (double v : to_vec(a)) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  }
  SUBCASE("orthogonal unit tokens") {
    T64 q({2, 2}, std::vector<double>{1, 0, 0, 1});
    auto a = to_vec(ussa(q, q, one));
    const double e = std::exp(1.0);
    CHECK(a[0] == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(a[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
    CHECK(a[2] == doctest::Approx(1 / (e + 1)).epsilon(1e-12));
    CHECK(a[3] == doctest::Approx(e / (e + 1)).epsilon(1e-12));
    CHECK(a[0] == doctest::Approx(0.73106).epsilon(1e-5));
    CHECK(a[1] == doctest::Approx(0.26894).epsilon(1e-5));
  }
  SUBCASE("zero token is handled") {
    T64 q({2, 3}, std::vector<double>{0, 0, 0, 1, 2, 3});
    auto a = to_vec(ussa(q, q, one));
    for (double v : a) CHECK(std::isfinite(v));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(ussa(T64({2, 3}, 1.0), T64({3, 3}, 1.0), one), DimensionError);
  }
}

TEST_CASE("ussa properties over random trials") {
  Rng rng(11);
  double worst_row = 0.0, worst_scale = 0.0, worst_perm = 0.0;
  bool positive = true;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(12), d = 1 + rng.below(9);
    auto q = random_tensor({n, d}, rng), k = random_tensor({n, d}, rng);
    T64 tau({1}, rng.uniform(0.0, 5.0));
    auto a = ussa(q, k, tau);
    auto av = to_vec(a);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row += av[i * n + j];
        positive = positive && av[i * n + j] > 0.0;
      }
      worst_row = std::max(worst_row, std::abs(row - 1.0));
    }

    auto qs = q.clone(), ks = k.clone();
    for (std::size_t i = 0; i < n; ++i) {
      const double alpha = rng.uniform(0.01, 100.0), beta = rng.uniform(0.01, 100.0);
      for (std::size_t j = 0; j < d; ++j) {
        qs.mutable_data()[i * d + j] *= alpha;
        ks.mutable_data()[i * d + j] *= beta;
      }
    }
    worst_scale = std::max(worst_scale, max_abs_diff(ussa(qs, ks, tau), a));

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    T64 qp({n, d}, 0.0), kp({n, d}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        qp.mutable_data()[i * d + j] = q.data()[perm[i] * d + j];
        kp.mutable_data()[i * d + j] = k.data()[perm[i] * d + j];
      }
    auto ap = to_vec(ussa(qp, kp, tau));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        worst_perm = std::max(worst_perm, std::abs(ap[i * n + j] - av[perm[i] * n + perm[j]]));
  }
  CHECK(positive);
  CHECK(worst_row <= 1e-5);
  CHECK(worst_scale <= 1e-5);
  CHECK(worst_perm <= 1e-6);
}

TEST_CASE("lrf") {
  Rng rng(13);
  const std::size_t B = 2, L = 6, depth = 3, th = 2, tw = 4;
  auto tokens = random_tensor({B, L, depth * th * tw}, rng);
  SUBCASE("single rank factor yields ones") {
    auto w = random_tensor({1, 4 * depth, 3}, rng), b = random_tensor({1}, rng);
    for (double v : to_vec(lrf(tokens, depth, th, tw, w, b))) CHECK(v == 1.0);
  }
  SUBCASE("rows lie on the simplex") {
    auto w = random_tensor({5, 4 * depth, 3}, rng), b = random_tensor({5}, rng);
    auto f = lrf(tokens, depth, th, tw, w, b);
    REQUIRE(f.shape() == Shape{B, L, 5});
    auto v = to_vec(f);
    for (std::size_t r = 0; r < B * L; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(v[r * 5 + j] > 0.0);
        s += v[r * 5 + j];
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
  SUBCASE("constant field from bias") {
    T64 w({3, 4 * depth, 3}, 0.0), b({3}, std::vector<double>{0.5, -1.0, 2.0});
    auto v = to_vec(lrf(tokens, depth, th, tw, w, b));
    const double z = std::exp(0.5) + std::exp(-1.0) + std::exp(2.0);
    for (std::size_t r = 0; r < B * L; ++r) {
      CHECK(v[r * 3 + 0] == doctest::Approx(std::exp(0.5) / z).epsilon(1e-14));
      CHECK(v[r * 3 + 1] == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-14));
      CHECK(v[r * 3 + 2] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
    }
  }
  SUBCASE("pooling and token mixing oracle") {
    // Hand evaluation: pooled[l][p*4 + q] = mean over the q-th quadrant of
    // plane p, logits = zero-padded correlation along l, then softmax.
    const std::size_t k = 2;
    auto w = random_tensor({k, 4 * depth, 3}, rng), b = random_tensor({k}, rng);
    auto got = to_vec(lrf(tokens, depth, th, tw, w, b));
    auto tv = to_vec(tokens);
    auto wv = to_vec(w), bv = to_vec(b);
    for (std::size_t bi = 0; bi < B; ++bi) {
      std::vector<double> pooled(L * 4 * depth, 0.0);
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t p = 0; p < depth; ++p)
          for (std::size_t y = 0; y < th; ++y)
            for (std::size_t x = 0; x < tw; ++x) {
              const std::size_t quad = (y / (th / 2)) * 2 + x / (tw / 2);
              pooled[l * 4 * depth + p * 4 + quad] +=
                  tv[(bi * L + l) * depth * th * tw + p * th * tw + y * tw + x] / double(th * tw / 4);
            }
      for (std::size_t l = 0; l < L; ++l) {
        std::vector<double> logits(k);
        for (std::size_t o = 0; o < k; ++o) {
          double acc = bv[o];
          for (std::size_t i = 0; i < 4 * depth; ++i)
            for (std::size_t t = 0; t < 3; ++t) {
              const long src = long(l) + long(t) - 1;
              if (src < 0 || src >= long(L)) continue;
              acc += wv[(o * 4 * depth + i) * 3 + t] * pooled[std::size_t(src) * 4 * depth + i];
            }
          logits[o] = acc;
        }
        const double m = std::max(logits[0], logits[1]);
        const double z = std::exp(logits[0] - m) + std::exp(logits[1] - m);
        for (std::size_t o = 0; o < k; ++o)
          CHECK(got[(bi * L + l) * k + o] == doctest::Approx(std::exp(logits[o] - m) / z).epsilon(1e-12));
      }
    }
  }
  SUBCASE("errors") {
    auto w = random_tensor({2, 4, 3}, rng), b = random_tensor({2}, rng);
    CHECK_THROWS_AS(lrf(random_tensor({1, 3, 2}, rng), 1, 1, 2, w, b), DimensionError);
    CHECK_THROWS_AS(lrf(random_tensor({1, 3, 4}, rng), 1, 2, 3, w, b), DimensionError);
  }
}

TEST_CASE("dlrm") {
  Rng rng(17);
  SUBCASE("rank one factor") {
    T64 ones({6, 1}, 1.0);
    for (double v : to_vec(dlrm(ones, ones))) CHECK(v == 1.0);
  }
  SUBCASE("one-hot rows form blocks") {
    const std::vector<std::size_t> hot{0, 2, 0, 1, 2, 2};
    T64 f({6, 3}, 0.0);
    for (std::size_t i = 0; i < 6; ++i) f.mutable_data()[i * 3 + hot[i]] = 1.0;
    auto d = to_vec(dlrm(f, f));
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) CHECK(d[i * 6 + j] == (hot[i] == hot[j] ? 1.0 : 0.0));
  }
  SUBCASE("rank of simplex products") {
    T64 zero_w({3, 4, 3}, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
      auto qf = softmax(random_tensor({8, 3}, rng, -3, 3), 1);
      auto kf = softmax(random_tensor({8, 3}, rng, -3, 3), 1);
      auto d = to_vec(dlrm(qf, kf));
      auto sv = singular_values(d, 8, 8);
      CHECK(sv[3] / sv[0] < 1e-6);
      for (double v : d) {
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  SUBCASE("mismatched factors") {
    CHECK_THROWS_AS(dlrm(T64({4, 2}, 0.5), T64({4, 3}, 0.5)), DimensionError);
  }
}

TEST_CASE("esa preserves shape") {
  Rng rng(19);
  struct Case {
    EsaConfig cfg;
    Shape shape;
  };
  auto inter = EsaConfig::inter_default(16);
  inter.splits = 2;
  inter.rank = 8;
  auto no_dlrm = small_cross(8, 4, 2, 3);
  no_dlrm.use_dlrm = false;
  std::vector<Case> cases{
      {small_cross(8, 4, 2, 1), {1, 8, 8, 8}},
      {small_cross(8, 4, 2, 3), {2, 8, 4, 8}},
      {small_cross(16, 4, 2, 12, 2), {1, 16, 8, 8}},
      {small_cross(8, 8, 1, 1, 4), {1, 8, 4, 4}},
      {inter, {1, 16, 8, 8}},
      {no_dlrm, {1, 8, 4, 4}},
  };
  for (auto& c : cases) {
    ParamStore<float> store;
    auto p = make_esab_params(c.cfg, store, "b", rng);
    auto x = random_tensor<float>(c.shape, rng);
    CHECK(esa_forward(x, p.esa, c.cfg).shape() == c.shape);
    CHECK(esab_forward(x, p, c.cfg).shape() == c.shape);
  }
}

TEST_CASE("esa matrix chain with an all-ones dependence map") {
  // C=3, c=1, s=1: three tokens, one per channel. k=1 forces D = ones, so
  // every output token is the column sum of the projected fused tokens.
  Rng rng(23);
  auto cfg = small_cross(3, 1, 1, 1);
  ParamStore<double> store;
  auto p = make_esab_params(cfg, store, "b", rng).esa;
  randomize(store, rng);
  for (auto t : {p.pos1_weight, p.pos2_weight, p.pos1_bias, p.pos2_bias}) fill(t, 0.0);
  const std::size_t n = 3, d = 4;
  auto x = random_tensor({1, 3, 2, 2}, rng);
  EsaTrace<double> trace;
  auto got = to_vec(esa_forward(x, p, cfg, &trace));

  auto xv = to_vec(x), wq = to_vec(p.query), wk = to_vec(p.key), wv = to_vec(p.value);
  auto wp = to_vec(p.proj_weight), bp = to_vec(p.proj_bias);
  const double tau = p.tau.item();
  auto project = [&](const std::vector<double>& w) {
    std::vector<double> out(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t px = 0; px < d; ++px) out[i * d + px] += w[i * n + j] * xv[j * d + px];
    return out;
  };
  auto q = project(wq), k = project(wk), v = project(wv);
  auto norm = [&](const std::vector<double>& m, std::size_t i) {
    double s = 0.0;
    for (std::size_t px = 0; px < d; ++px) s += m[i * d + px] * m[i * d + px];
    return std::sqrt(s);
  };
  std::vector<double> a(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double cosv = 0.0;
      for (std::size_t px = 0; px < d; ++px) cosv += q[i * d + px] * k[j * d + px];
      a[i * n + j] = std::exp(tau * cosv / (norm(q, i) * norm(k, j)));
      z += a[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= z;
  }
  auto fused = ect::testing::naive_matmul(a, v, n, n, d);
  std::vector<double> projected(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t px = 0; px < d; ++px) {
      double acc = bp[i];
      for (std::size_t j = 0; j < n; ++j) acc += wp[i * n + j] * fused[j * d + px];
      projected[i * d + px] = acc;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t px = 0; px < d; ++px) {
      double colsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) colsum += projected[j * d + px];
      CHECK(got[i * d + px] == doctest::Approx(colsum).epsilon(1e-12));
    }
  for (double dv : to_vec(trace.dependence)) CHECK(dv == 1.0);
  auto at = to_vec(trace.attention);
  for (std::size_t i = 0; i < n * n; ++i) CHECK(at[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("dependence maps in running blocks") {
  Rng rng(29);
  SUBCASE("inter block with sixteen slices") {
    auto cfg = EsaConfig::inter_default(16);
    ParamStore<double> store;
    auto p = make_esab_params(cfg, store, "b", rng);
    randomize(store, rng, -1.0, 1.0);
    EsaTrace<double> trace;
    esab_forward(random_tensor({1, 16, 8, 8}, rng), p, cfg, &trace);
    // n = 16 * 16 / 16 tokens, each with a 16 x 16 map.
    REQUIRE(trace.dependence.shape() == Shape{16, 16, 16});
    REQUIRE(trace.attention.shape() == Shape{16, 16, 16});
    auto dv = to_vec(trace.dependence);
    for (std::size_t t = 0; t < 16; ++t) {
      std::vector<double> m(dv.begin() + t * 256, dv.begin() + (t + 1) * 256);
      auto sv = singular_values(m, 16, 16);
      CHECK(sv[8] / sv[0] < 1e-5);
      for (double v : m) CHECK((v > 0.0 && v <= 1.0));
    }
  }
  SUBCASE("cross block with thirty-two tokens") {
    auto cfg = EsaConfig::cross_default(32);
    ParamStore<double> store;
    auto p = make_esab_params(cfg, store, "b", rng);
    EsaTrace<double> trace;
    esab_forward(random_tensor({1, 32, 8, 8}, rng), p, cfg, &trace);
    CHECK(trace.attention.shape() == Shape{1, 32, 32});
    CHECK(trace.dependence.shape() == Shape{1, 32, 32});
  }
  SUBCASE("full rank factor for the k = n ablation") {
    auto cfg = EsaConfig::cross_default(32);
    cfg.rank = 32;
    CHECK_NOTHROW(cfg.validate());
    cfg.rank = 33;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("ffn") {
  Rng rng(31);
  ParamStore<double> store;
  auto cfg = small_cross(4, 2, 2, 2);
  auto p = make_esab_params(cfg, store, "b", rng);
  auto x = random_tensor({1, 4, 4, 4}, rng);
  CHECK(p.ffn.expand.shape() == Shape{16, 4, 1, 1});
  CHECK(p.ffn.depthwise.shape() == Shape{16, 1, 3, 3});
  CHECK(ffn_forward(x, p.ffn).shape() == x.shape());
  for (auto t : {p.ffn.expand, p.ffn.depthwise, p.ffn.reduce}) fill(t, 0.0);
  for (double v : to_vec(ffn_forward(x, p.ffn))) CHECK(v == 0.0);
}

TEST_CASE("residual identity with zero output projections") {
  Rng rng(37);
  for (auto cfg : {small_cross(8, 4, 2, 3), EsaConfig::inter_default(16)}) {
    ParamStore<double> store;
    auto p = make_esab_params(cfg, store, "b", rng);
    randomize(store, rng);
    for (auto t : {p.esa.proj_weight, p.esa.proj_bias, p.ffn.reduce}) fill(t, 0.0);
    auto x = random_tensor({1, cfg.channels, 8, 8}, rng);
    CHECK(to_vec(esab_forward(x, p, cfg)) == to_vec(x));
  }
}

TEST_CASE("block gradients") {
  Rng rng(41);
  auto check_block = [&](const EsaConfig& cfg, Shape shape) {
    ParamStore<double> store;
    auto p = make_esab_params(cfg, store, "b", rng);
    randomize(store, rng);
    auto x = random_param(shape, rng);
    auto params = store.tensors();
    std::vector<T64> esa_params;
    for (auto& [name, t] : store.entries())
      if (name.find(".esa.") != std::string::npos) esa_params.push_back(t);
    std::vector<T64> ffn_params{p.ffn.expand, p.ffn.depthwise, p.ffn.reduce};

    auto with_x = [&](std::vector<T64> v) {
      v.push_back(x);
      return v;
    };
    CHECK(probe_check([&] { return esa_forward(x, p.esa, cfg); }, with_x(esa_params)) <= 1e-5);
    CHECK(probe_check([&] { return ffn_forward(x, p.ffn); }, with_x(ffn_params)) <= 1e-5);
    CHECK(probe_check([&] { return esab_forward(x, p, cfg); }, with_x(params)) <= 1e-5);
  };
  SUBCASE("cross") { check_block(small_cross(4, 2, 2, 3), {1, 4, 4, 4}); }
  SUBCASE("cross with two heads") { check_block(small_cross(4, 2, 2, 3, 2), {1, 4, 4, 4}); }
  SUBCASE("inter") {
    auto cfg = EsaConfig::inter_default(4);
    cfg.group = 4;
    cfg.splits = 2;
    cfg.rank = 2;
    check_block(cfg, {1, 4, 4, 4});
  }
  SUBCASE("without dependence map") {
    auto cfg = small_cross(4, 2, 2, 3);
    cfg.use_dlrm = false;
    check_block(cfg, {1, 4, 4, 4});
  }
}

TEST_CASE("parameter registration") {
  Rng rng(43);
  ParamStore<float> store;
  auto cfg = EsaConfig::cross_default(32);
  make_esab_params(cfg, store, "stage0.enc0", rng);
  CHECK(store.contains("stage0.enc0.esa.query.weight"));
  CHECK(store.contains("stage0.enc0.esa.lrf_k.bias"));
  CHECK(store.get("stage0.enc0.esa.tau").item() == 1.0f);
  CHECK_THROWS_AS(make_esab_params(cfg, store, "stage0.enc0", rng), ConfigError);
  auto plain = cfg;
  plain.use_dlrm = false;
  ParamStore<float> s2;
  make_esab_params(plain, s2, "x", rng);
  CHECK(s2.scalar_count() < store.scalar_count());
  CHECK_FALSE(s2.contains("x.esa.lrf_q.weight"));
}
