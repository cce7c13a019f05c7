#pragma once

// Synthetic hyperspectral scenes, the HSI -> RGB camera simulation
// (SRF projection, shot/dark noise, mean normalization, JPEG-style DCT
// quantization), patch extraction, dihedral augmentation, and file I/O.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ect {

constexpr std::size_t kHsiBands = 31;
constexpr double kFirstBandNm = 400.0;
constexpr double kBandStepNm = 10.0;

/// Band-major image cube: value(b, y, x) = data[(b * height + y) * width + x].
struct Cube {
  std::size_t bands = 0, height = 0, width = 0;
  std::vector<float> data;

  Cube() = default;
  Cube(std::size_t b, std::size_t h, std::size_t w, float fill = 0.0f);

  std::size_t plane() const { return height * width; }
  float& at(std::size_t b, std::size_t y, std::size_t x) { return data[(b * height + y) * width + x]; }
  float at(std::size_t b, std::size_t y, std::size_t x) const { return data[(b * height + y) * width + x]; }
  double mean() const;
};

/// 31 x 3 band -> (R, G, B) response, row-major.
struct Srf {
  std::vector<double> weights;  // weights[band * 3 + channel]
  double at(std::size_t band, std::size_t channel) const { return weights[band * 3 + channel]; }
  void validate() const;
};

/// Gaussian responses centred at 610/550/465 nm (sigma 40/35/30 nm), each
/// column normalized to unit sum. Matches data/srf_default.txt.
Srf default_srf();
/// Whitespace-separated 31 rows of 3 values; '#' starts a comment.
Srf load_srf(const std::string& path);
void save_srf(const Srf& srf, const std::string& path);

enum class Codec { None, Jpeg };

struct SimConfig {
  double shot_gain = 0.01;   // a: shot noise variance a * x
  double dark_std = 0.005;   // b: dark noise N(0, b^2)
  double target_mean = 0.18;
  Codec codec = Codec::Jpeg;
  int jpeg_quality = 95;
  bool mosaic = false;  // RGGB mosaic before noise, bilinear demosaic after, no mean normalization
  std::uint64_t seed = 0;
  void validate() const;
};

/// Abundance-weighted mixture of n_materials smooth positive spectra.
Cube synth_hsi(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t n_materials);

Cube project_rgb(const Cube& hsi, const Srf& srf);
/// y = x + N(0, a x) + N(0, b^2). a = b = 0 returns the input unchanged.
Cube add_noise(const Cube& raw, double shot_gain, double dark_std, std::uint64_t seed);
/// Scales so that the mean over all values equals target.
Cube normalize_mean(const Cube& img, double target = 0.18);
Cube clip01(const Cube& img);
/// 3-band image in [0,1] through 8-bit YCbCr, 8x8 DCT quantization with the
/// standard tables scaled by quality, and back. quality 100 quantizes with
/// all-ones tables.
Cube jpeg_roundtrip(const Cube& img, int quality);
/// Quantization table (row-major 8x8) for quality in [1, 100].
std::vector<int> jpeg_quant_table(bool chroma, int quality);
/// RGGB Bayer sampling of a 3-band image into one plane.
Cube mosaic_rggb(const Cube& rgb);
/// Bilinear interpolation of an RGGB plane back to three bands.
Cube demosaic_bilinear(const Cube& raw);

/// Full camera simulation of one HSI cube.
Cube simulate_rgb(const Cube& hsi, const Srf& srf, const SimConfig& cfg);

struct PatchPair {
  std::size_t y = 0, x = 0;
  Cube rgb, hsi;
};

Cube crop(const Cube& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w);
/// Grid of size x size crops at multiples of stride (stride 0 = size), in a
/// seed-shuffled order. Both modalities share each offset.
std::vector<PatchPair> extract_patches(const Cube& rgb, const Cube& hsi, std::size_t size, std::size_t stride,
                                       std::uint64_t seed);

/// op in [0, 8): flip horizontally when op >= 4, then rotate
/// counter-clockwise by 90 * (op % 4) degrees.
Cube augment(const Cube& img, int op);
PatchPair augment(const PatchPair& pair, int op);

void write_hsi(const Cube& cube, const std::string& path);
Cube read_hsi(const std::string& path);
/// Binary P6, maxval 255, round-half-up quantization of [0,1] values.
void write_ppm(const Cube& rgb, const std::string& path);
Cube read_ppm(const std::string& path);
/// Binary P5 of a single plane.
void write_pgm(const Cube& gray, const std::string& path);
std::uint8_t quantize8(double v);

/// One "rgb_path<TAB>hsi_path" per line; relative paths are resolved against
/// the manifest directory.
std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path);
void write_manifest(const std::vector<std::pair<std::string, std::string>>& entries, const std::string& path);
/// Loads an RGB file by extension: .ppm, otherwise the HSI container.
Cube read_rgb(const std::string& path);

/// Official challenge archives are not supported; always throws
/// UnsupportedError("unimplemented").
void convert_archive(const std::string& input, const std::string& output_dir);

}  // namespace ect
