#include "ect/datapipe.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ect/error.hpp"
#include "ect/rng.hpp"

namespace ect {

Cube::Cube(std::size_t b, std::size_t h, std::size_t w, float fill) : bands(b), height(h), width(w) {
  if (b == 0 || h == 0 || w == 0)
    throw DimensionError("cube: zero extent " + std::to_string(b) + "x" + std::to_string(h) + "x" + std::to_string(w));
  data.assign(b * h * w, fill);
}

double Cube::mean() const {
  double acc = 0.0;
  for (float v : data) acc += v;
  return acc / static_cast<double>(data.size());
}

void Srf::validate() const {
  if (weights.size() != kHsiBands * 3)
    throw DimensionError("srf: expected 31x3 values, got " + std::to_string(weights.size()));
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < kHsiBands; ++b) {
      const double v = at(b, ch);
      if (!(v >= 0.0) || !std::isfinite(v)) throw FormatError("srf: negative or non-finite response");
      sum += v;
    }
    if (sum <= 0.0) throw FormatError("srf: column " + std::to_string(ch) + " has zero sum");
  }
}

Srf default_srf() {
  const double centre[3] = {610.0, 550.0, 465.0};
  const double sigma[3] = {40.0, 35.0, 30.0};
  Srf srf;
  srf.weights.assign(kHsiBands * 3, 0.0);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < kHsiBands; ++b) {
      const double z = (kFirstBandNm + kBandStepNm * b - centre[ch]) / sigma[ch];
      srf.weights[b * 3 + ch] = std::exp(-0.5 * z * z);
      sum += srf.weights[b * 3 + ch];
    }
    for (std::size_t b = 0; b < kHsiBands; ++b) srf.weights[b * 3 + ch] /= sum;
  }
  return srf;
}

Srf load_srf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("srf " + path + ": cannot open");
  Srf srf;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    double v;
    while (ls >> v) srf.weights.push_back(v);
    if (!ls.eof()) throw FormatError("srf " + path + ": unparsable line '" + line + "'");
  }
  srf.validate();
  return srf;
}

void save_srf(const Srf& srf, const std::string& path) {
  srf.validate();
  std::ofstream out(path);
  if (!out) throw FormatError("srf " + path + ": cannot open for writing");
  out << "# band_nm R G B (columns sum to 1)\n";
  out.precision(17);
  for (std::size_t b = 0; b < kHsiBands; ++b)
    out << "# " << kFirstBandNm + kBandStepNm * b << "\n" << srf.at(b, 0) << " " << srf.at(b, 1) << " " << srf.at(b, 2)
        << "\n";
}

void SimConfig::validate() const {
  if (!(shot_gain >= 0.0) || !(dark_std >= 0.0)) throw ConfigError("simulation: noise parameters must be >= 0");
  if (!(target_mean > 0.0)) throw ConfigError("simulation: target mean must be positive");
  if (jpeg_quality < 1 || jpeg_quality > 100) throw ConfigError("simulation: jpeg quality must be in [1, 100]");
}

namespace {

// Separable box blur with clamped borders, radius r.
void box_blur(std::vector<double>& f, std::size_t h, std::size_t w, std::size_t r) {
  std::vector<double> tmp(f.size());
  auto clampi = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, long(n) - 1)); };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long d = -long(r); d <= long(r); ++d) acc += f[y * w + clampi(long(x) + d, w)];
      tmp[y * w + x] = acc / double(2 * r + 1);
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (long d = -long(r); d <= long(r); ++d) acc += tmp[clampi(long(y) + d, h) * w + x];
      f[y * w + x] = acc / double(2 * r + 1);
    }
}

std::vector<double> smooth_field(Rng& rng, std::size_t h, std::size_t w) {
  std::vector<double> f(h * w);
  for (auto& v : f) v = rng.uniform();
  const std::size_t r = std::max<std::size_t>(1, std::min(h, w) / 6);
  for (int pass = 0; pass < 3; ++pass) box_blur(f, h, w, r);
  double lo = f[0], hi = f[0];
  for (double v : f) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (auto& v : f) v = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  return f;
}

void require_rgb(const Cube& img, const char* who) {
  if (img.bands != 3) throw DimensionError(std::string(who) + ": expected 3 bands, got " + std::to_string(img.bands));
}

}  // namespace

Cube synth_hsi(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t n_materials) {
  if (n_materials == 0) throw ConfigError("synth_hsi: need at least one material");
  Rng rng(seed);
  std::vector<std::array<double, kHsiBands>> spectra(n_materials);
  for (auto& s : spectra) {
    const std::size_t peaks = 1 + rng.below(3);
    s.fill(0.02);
    for (std::size_t p = 0; p < peaks; ++p) {
      const double mu = rng.uniform(380.0, 720.0), sigma = rng.uniform(25.0, 90.0), amp = rng.uniform(0.3, 1.0);
      for (std::size_t b = 0; b < kHsiBands; ++b) {
        const double z = (kFirstBandNm + kBandStepNm * b - mu) / sigma;
        s[b] += amp * std::exp(-0.5 * z * z);
      }
    }
    const double peak = *std::max_element(s.begin(), s.end());
    const double target = rng.uniform(0.4, 0.95);
    for (auto& v : s) v *= target / peak;
  }
  const std::size_t n = height * width;
  std::vector<std::vector<double>> abundance(n_materials, std::vector<double>(n, 1.0));
  if (n_materials > 1) {
    for (auto& a : abundance) {
      a = smooth_field(rng, height, width);
      for (auto& v : a) {
        const double t = (v + 0.05) * (v + 0.05);
        v = t * t;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (auto& a : abundance) total += a[i];
      for (auto& a : abundance) a[i] /= total;
    }
  }
  auto shading = smooth_field(rng, height, width);
  for (auto& v : shading) v = 0.6 + 0.4 * v;

  Cube cube(kHsiBands, height, width);
  for (std::size_t b = 0; b < kHsiBands; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0.0;
      for (std::size_t m = 0; m < n_materials; ++m) v += abundance[m][i] * spectra[m][b];
      cube.data[b * n + i] = static_cast<float>(v * shading[i]);
    }
  return cube;
}

Cube project_rgb(const Cube& hsi, const Srf& srf) {
  if (hsi.bands != kHsiBands)
    throw DimensionError("project_rgb: expected 31 bands, got " + std::to_string(hsi.bands));
  srf.validate();
  Cube rgb(3, hsi.height, hsi.width);
  const std::size_t n = hsi.plane();
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t b = 0; b < kHsiBands; ++b) acc += double(hsi.data[b * n + i]) * srf.at(b, ch);
      rgb.data[ch * n + i] = static_cast<float>(acc);
    }
  return rgb;
}

Cube add_noise(const Cube& raw, double shot_gain, double dark_std, std::uint64_t seed) {
  if (!(shot_gain >= 0.0) || !(dark_std >= 0.0)) throw ConfigError("add_noise: noise parameters must be >= 0");
  for (float v : raw.data)
    if (!(v >= 0.0f)) throw NumericError("add_noise: raw values must be non-negative");
  if (shot_gain == 0.0 && dark_std == 0.0) return raw;
  Rng rng(seed);
  Cube out = raw;
  for (auto& v : out.data) {
    const double x = v;
    const double shot = std::sqrt(shot_gain * x) * rng.normal();
    const double dark = dark_std * rng.normal();
    v = static_cast<float>(x + shot + dark);
  }
  return out;
}

Cube normalize_mean(const Cube& img, double target) {
  const double m = img.mean();
  if (!(m > 0.0)) throw NumericError("normalize_mean: image mean must be positive");
  const double factor = target / m;
  Cube out = img;
  for (auto& v : out.data) v = static_cast<float>(double(v) * factor);
  return out;
}

Cube clip01(const Cube& img) {
  Cube out = img;
  for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::uint8_t quantize8(double v) {
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(scaled);
}

namespace {

constexpr int kLumaBase[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                               14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                               18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                               49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kChromaBase[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

// cos(m * pi / 16) for m = 0..8, written out so the transform does not
// depend on the platform's libm.
constexpr double kCos16[9] = {1.0,
                              0.98078528040323043,
                              0.92387953251128674,
                              0.83146961230254524,
                              0.70710678118654752,
                              0.55557023301960218,
                              0.38268343236508977,
                              0.19509032201612826,
                              0.0};

double cos16(int m) {
  m %= 32;
  if (m <= 8) return kCos16[m];
  if (m <= 16) return -kCos16[16 - m];
  if (m <= 24) return -kCos16[m - 16];
  return kCos16[32 - m];
}

struct DctBasis {
  double b[8][8];  // b[u][x] = C(u)/2 * cos((2x+1) u pi / 16)
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) b[u][x] = (u == 0 ? kCos16[4] : 1.0) * 0.5 * cos16((2 * x + 1) * u);
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

void quantize_block(double (&blk)[8][8], const std::vector<int>& table) {
  const auto& B = basis().b;
  double tmp[8][8], coef[8][8];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += B[u][x] * blk[y][x];
      tmp[y][u] = acc;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += B[v][y] * tmp[y][u];
      const double q = table[v * 8 + u];
      coef[v][u] = std::round(acc / q) * q;
    }
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += B[u][x] * coef[v][u];
      tmp[v][x] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += B[v][y] * tmp[v][x];
      blk[y][x] = acc;
    }
}

}  // namespace

std::vector<int> jpeg_quant_table(bool chroma, int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("jpeg: quality must be in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::vector<int> t(64);
  for (int i = 0; i < 64; ++i)
    t[i] = std::clamp(((chroma ? kChromaBase : kLumaBase)[i] * scale + 50) / 100, 1, 255);
  return t;
}

Cube jpeg_roundtrip(const Cube& img, int quality) {
  require_rgb(img, "jpeg_roundtrip");
  const auto luma = jpeg_quant_table(false, quality), chroma = jpeg_quant_table(true, quality);
  for (float v : img.data)
    if (!(v >= 0.0f && v <= 1.0f)) throw NumericError("jpeg_roundtrip: input must lie in [0, 1]");
  const std::size_t H = img.height, W = img.width, n = img.plane();
  const std::size_t PH = (H + 7) / 8 * 8, PW = (W + 7) / 8 * 8;

  std::vector<double> planes[3];
  for (auto& p : planes) p.assign(PH * PW, 0.0);
  for (std::size_t y = 0; y < PH; ++y)
    for (std::size_t x = 0; x < PW; ++x) {
      const std::size_t i = std::min(y, H - 1) * W + std::min(x, W - 1);
      const double r = quantize8(img.data[i]), g = quantize8(img.data[n + i]), b = quantize8(img.data[2 * n + i]);
      planes[0][y * PW + x] = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
      planes[1][y * PW + x] = -0.168736 * r - 0.331264 * g + 0.5 * b;
      planes[2][y * PW + x] = 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
  for (int c = 0; c < 3; ++c)
    for (std::size_t by = 0; by < PH; by += 8)
      for (std::size_t bx = 0; bx < PW; bx += 8) {
        double blk[8][8];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) blk[y][x] = planes[c][(by + y) * PW + bx + x];
        quantize_block(blk, c == 0 ? luma : chroma);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) planes[c][(by + y) * PW + bx + x] = blk[y][x];
      }
  Cube out(3, H, W);
  auto to8 = [](double v) { return std::clamp(std::floor(v + 0.5), 0.0, 255.0) / 255.0; };
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const double Y = planes[0][y * PW + x] + 128.0, cb = planes[1][y * PW + x], cr = planes[2][y * PW + x];
      const std::size_t i = y * W + x;
      out.data[i] = static_cast<float>(to8(Y + 1.402 * cr));
      out.data[n + i] = static_cast<float>(to8(Y - 0.344136 * cb - 0.714136 * cr));
      out.data[2 * n + i] = static_cast<float>(to8(Y + 1.772 * cb));
    }
  return out;
}

namespace {
// Channel sampled at (y, x) by the RGGB pattern.
std::size_t bayer_channel(std::size_t y, std::size_t x) {
  if (y % 2 == 0) return x % 2 == 0 ? 0 : 1;
  return x % 2 == 0 ? 1 : 2;
}
}  // namespace

Cube mosaic_rggb(const Cube& rgb) {
  require_rgb(rgb, "mosaic_rggb");
  Cube raw(1, rgb.height, rgb.width);
  for (std::size_t y = 0; y < rgb.height; ++y)
    for (std::size_t x = 0; x < rgb.width; ++x) raw.at(0, y, x) = rgb.at(bayer_channel(y, x), y, x);
  return raw;
}

Cube demosaic_bilinear(const Cube& raw) {
  if (raw.bands != 1) throw DimensionError("demosaic_bilinear: expected one plane, got " + std::to_string(raw.bands));
  static constexpr double kRb[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};
  static constexpr double kG[3][3] = {{0, 1, 0}, {1, 4, 1}, {0, 1, 0}};
  const std::size_t H = raw.height, W = raw.width;
  Cube out(3, H, W);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const auto& k = ch == 1 ? kG : kRb;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0, weight = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long yy = long(y) + dy, xx = long(x) + dx;
            if (yy < 0 || xx < 0 || yy >= long(H) || xx >= long(W)) continue;
            if (bayer_channel(std::size_t(yy), std::size_t(xx)) != ch) continue;
            acc += k[dy + 1][dx + 1] * raw.at(0, std::size_t(yy), std::size_t(xx));
            weight += k[dy + 1][dx + 1];
          }
        out.at(ch, y, x) = static_cast<float>(weight > 0 ? acc / weight : 0.0);
      }
  }
  return out;
}

Cube simulate_rgb(const Cube& hsi, const Srf& srf, const SimConfig& cfg) {
  cfg.validate();
  Cube img = project_rgb(hsi, srf);
  if (cfg.mosaic) {
    img = demosaic_bilinear(add_noise(mosaic_rggb(img), cfg.shot_gain, cfg.dark_std, cfg.seed));
  } else {
    img = normalize_mean(add_noise(img, cfg.shot_gain, cfg.dark_std, cfg.seed), cfg.target_mean);
  }
  img = clip01(img);
  if (cfg.codec == Codec::Jpeg) img = jpeg_roundtrip(img, cfg.jpeg_quality);
  return img;
}

Cube crop(const Cube& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (y + h > img.height || x + w > img.width)
    throw DimensionError("crop: window exceeds " + std::to_string(img.height) + "x" + std::to_string(img.width));
  Cube out(img.bands, h, w);
  for (std::size_t b = 0; b < img.bands; ++b)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(&img.data[(b * img.height + y + r) * img.width + x], w, &out.data[(b * h + r) * w]);
  return out;
}

std::vector<PatchPair> extract_patches(const Cube& rgb, const Cube& hsi, std::size_t size, std::size_t stride,
                                       std::uint64_t seed) {
  if (rgb.height != hsi.height || rgb.width != hsi.width)
    throw DimensionError("extract_patches: RGB and HSI extents differ");
  if (size == 0 || size > rgb.height || size > rgb.width)
    throw DimensionError("extract_patches: patch size " + std::to_string(size) + " does not fit " +
                         std::to_string(rgb.height) + "x" + std::to_string(rgb.width));
  if (stride == 0) stride = size;
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  for (std::size_t y = 0; y + size <= rgb.height; y += stride)
    for (std::size_t x = 0; x + size <= rgb.width; x += stride) offsets.emplace_back(y, x);
  Rng rng(seed);
  for (std::size_t i = offsets.size(); i > 1; --i) std::swap(offsets[i - 1], offsets[rng.below(i)]);
  std::vector<PatchPair> out;
  for (auto [y, x] : offsets) out.push_back({y, x, crop(rgb, y, x, size, size), crop(hsi, y, x, size, size)});
  return out;
}

Cube augment(const Cube& img, int op) {
  if (op < 0 || op >= 8) throw ConfigError("augment: op must be in [0, 8)");
  Cube cur = img;
  if (op >= 4) {
    for (std::size_t b = 0; b < cur.bands; ++b)
      for (std::size_t y = 0; y < cur.height; ++y)
        for (std::size_t x = 0; x < cur.width; ++x) cur.at(b, y, x) = img.at(b, y, img.width - 1 - x);
  }
  for (int r = 0; r < op % 4; ++r) {
    // Counter-clockwise: out(y, x) = in(x, W - 1 - y), extents swap.
    Cube next(cur.bands, cur.width, cur.height);
    for (std::size_t b = 0; b < cur.bands; ++b)
      for (std::size_t y = 0; y < next.height; ++y)
        for (std::size_t x = 0; x < next.width; ++x) next.at(b, y, x) = cur.at(b, x, cur.width - 1 - y);
    cur = std::move(next);
  }
  return cur;
}

PatchPair augment(const PatchPair& pair, int op) { return {pair.y, pair.x, augment(pair.rgb, op), augment(pair.hsi, op)}; }

namespace {

constexpr char kHsiMagic[] = "ECTHSI1\n";

void write_le_floats(std::ostream& os, const std::vector<float>& values) {
  std::vector<unsigned char> buf(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(values[i]);
    for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<unsigned char>(u >> (8 * k));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

// Reads a PNM header token, skipping whitespace and comments.
std::string pnm_token(std::istream& in, const std::string& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw FormatError("pnm " + path + ": truncated header");
  return tok;
}

std::size_t parse_extent(const std::string& tok, const std::string& path, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || v == 0 || v > (1ull << 20))
    throw FormatError(path + ": bad " + std::string(what) + " '" + tok + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

void write_hsi(const Cube& cube, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("hsi " + path + ": cannot open for writing");
  os << kHsiMagic << cube.height << " " << cube.width << " " << cube.bands << "\n";
  write_le_floats(os, cube.data);
  if (!os) throw FormatError("hsi " + path + ": write failed");
}

Cube read_hsi(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("hsi " + path + ": cannot open");
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kHsiMagic, 8) != 0) throw FormatError("hsi " + path + ": bad magic");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("hsi " + path + ": missing shape line");
  std::istringstream ls(line);
  std::string th, tw, tb, extra;
  if (!(ls >> th >> tw >> tb) || (ls >> extra)) throw FormatError("hsi " + path + ": bad shape line '" + line + "'");
  Cube cube(parse_extent(tb, path, "band count"), parse_extent(th, path, "height"), parse_extent(tw, path, "width"));
  std::vector<unsigned char> buf(cube.data.size() * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw FormatError("hsi " + path + ": payload length mismatch, expected " + std::to_string(buf.size()) +
                      " bytes, got " + std::to_string(in.gcount()));
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("hsi " + path + ": payload length mismatch (trailing bytes)");
  for (std::size_t i = 0; i < cube.data.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= std::uint32_t(buf[i * 4 + k]) << (8 * k);
    cube.data[i] = std::bit_cast<float>(u);
  }
  return cube;
}

void write_ppm(const Cube& rgb, const std::string& path) {
  require_rgb(rgb, "write_ppm");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("ppm " + path + ": cannot open for writing");
  os << "P6\n" << rgb.width << " " << rgb.height << "\n255\n";
  std::vector<unsigned char> buf(rgb.plane() * 3);
  for (std::size_t i = 0; i < rgb.plane(); ++i)
    for (std::size_t c = 0; c < 3; ++c) buf[i * 3 + c] = quantize8(rgb.data[c * rgb.plane() + i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw FormatError("ppm " + path + ": write failed");
}

Cube read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("ppm " + path + ": cannot open");
  if (pnm_token(in, path) != "P6") throw FormatError("ppm " + path + ": bad magic");
  const std::size_t w = parse_extent(pnm_token(in, path), path, "width");
  const std::size_t h = parse_extent(pnm_token(in, path), path, "height");
  if (pnm_token(in, path) != "255") throw FormatError("ppm " + path + ": only maxval 255 is supported");
  Cube rgb(3, h, w);
  std::vector<unsigned char> buf(h * w * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError("ppm " + path + ": truncated pixel data");
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) rgb.data[c * h * w + i] = static_cast<float>(buf[i * 3 + c] / 255.0);
  return rgb;
}

void write_pgm(const Cube& gray, const std::string& path) {
  if (gray.bands != 1) throw DimensionError("write_pgm: expected one plane, got " + std::to_string(gray.bands));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("pgm " + path + ": cannot open for writing");
  os << "P5\n" << gray.width << " " << gray.height << "\n255\n";
  std::vector<unsigned char> buf(gray.plane());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize8(gray.data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw FormatError("pgm " + path + ": write failed");
}

std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("manifest " + path + ": cannot open");
  const auto base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw FormatError("manifest " + path + ":" + std::to_string(lineno) + ": expected rgb_path<TAB>hsi_path");
    out.emplace_back(resolve(line.substr(0, tab)), resolve(line.substr(tab + 1)));
  }
  if (out.empty()) throw FormatError("manifest " + path + ": no entries");
  return out;
}

void write_manifest(const std::vector<std::pair<std::string, std::string>>& entries, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("manifest " + path + ": cannot open for writing");
  for (const auto& [rgb, hsi] : entries) os << rgb << "\t" << hsi << "\n";
}

Cube read_rgb(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  Cube img = ext == ".ppm" ? read_ppm(path) : read_hsi(path);
  require_rgb(img, "read_rgb");
  return img;
}

void convert_archive(const std::string& input, const std::string&) {
  throw UnsupportedError("convert " + input + ": unimplemented (official challenge archives are not supported)");
}

}  // namespace ect
