#pragma once

// Loss and metrics, AdamW, cosine annealing, the training loop (including
// the 1-stage -> 2-stage strategy) and evaluation with MRAE heatmaps.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ect/datapipe.hpp"
#include "ect/network.hpp"
#include "ect/tensor.hpp"

namespace ect {

struct TrainConfig {
  double lr_max = 4e-4;
  double lr_min = 1e-6;
  std::size_t total_iters = 2000;
  std::size_t batch_size = 4;
  std::size_t patch = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double mrae_eps = 1e-3;
  bool augment = true;
  std::uint64_t seed = 0;

  /// Full-length schedule: 3e5 iterations, batch 20, 128x128 patches.
  static TrainConfig full_schedule();
  void validate() const;
};

/// mean(|pred - gt| / max(|gt|, eps)); differentiable in pred, with
/// sign(0) = 0 at the kink.
template <typename T>
Tensor<T> mrae_loss(const Tensor<T>& pred, const Tensor<T>& gt, double eps = 1e-3);

constexpr double kPsnrCap = 100.0;

/// Plain metrics over values laid out [.., bands, H, W]. SAM is the mean
/// per-pixel spectral angle in radians.
template <typename T>
double mrae(const Tensor<T>& pred, const Tensor<T>& gt, double eps = 1e-3);
template <typename T>
double rmse(const Tensor<T>& pred, const Tensor<T>& gt);
/// Capped at kPsnrCap when the error vanishes.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt, double peak = 1.0);
template <typename T>
double sam(const Tensor<T>& pred, const Tensor<T>& gt);

/// lr_min + (lr_max - lr_min)(1 + cos(pi t / total)) / 2 for 0 <= t <= total.
double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min);
inline double cosine_lr(std::size_t t, const TrainConfig& cfg) {
  return cosine_lr(t, cfg.total_iters, cfg.lr_max, cfg.lr_min);
}

/// Decoupled weight decay, then the bias-corrected Adam update.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, double beta1, double beta2, double eps, double weight_decay);
  explicit AdamW(std::vector<Tensor<T>> params, const TrainConfig& cfg = {})
      : AdamW(std::move(params), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay) {}

  /// Uses each parameter's accumulated gradient (zero if none).
  void step(double lr);
  std::size_t steps() const { return steps_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  std::vector<Tensor<T>> params_;
  double beta1_, beta2_, eps_, wd_;
  double beta1_pow_ = 1.0, beta2_pow_ = 1.0;
  std::vector<std::vector<double>> m_, v_;
  std::size_t steps_ = 0;
};

struct Sample {
  std::string name;
  Cube rgb, hsi;
};

struct LogRow {
  std::size_t iter = 0;
  double lr = 0, loss = 0, mrae = 0, rmse = 0, psnr = 0, sam = 0;
};

/// Called after every step; returning false stops training early.
using StepCallback = std::function<bool(const LogRow&)>;

template <typename T>
Tensor<T> to_tensor(const Cube& cube);
template <typename T>
Tensor<T> stack(const std::vector<const Cube*>& cubes);
template <typename T>
Cube to_cube(const Tensor<T>& t);

/// Each step: sample a batch (random crop, random dihedral op), forward,
/// MRAE, backward, AdamW at cosine_lr(iter). Throws NumericError naming the
/// iteration if the loss stops being finite.
template <typename T>
std::vector<LogRow> train(EctModel<T>& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                          const StepCallback& on_step = {});

void write_log_csv(const std::vector<LogRow>& rows, const std::string& path);

template <typename T>
struct TwoStageResult {
  EctModel<T> model;            // N_s = 2 after the second phase
  std::vector<LogRow> pretrain; // N_s = 1 phase
  std::vector<LogRow> finetune;
  std::size_t loaded = 0;       // tensors transferred at the handoff
};

/// Pretrains an N_s = 1 model, saves it to checkpoint_path, loads it into
/// the first stage of an N_s = 2 model and continues training.
template <typename T>
TwoStageResult<T> train_two_stage(const EctConfig& net, const std::vector<Sample>& data, const TrainConfig& first,
                                  const TrainConfig& second, const std::string& checkpoint_path,
                                  std::uint64_t seed, const StepCallback& on_step = {});

struct ImageMetrics {
  std::string name;
  double mrae = 0, rmse = 0, psnr = 0, sam = 0;
};

struct EvalReport {
  std::vector<ImageMetrics> images;
  ImageMetrics mean;
};

/// Band indices rendered as heatmaps (400, 500, 600, 700 nm).
inline const std::vector<std::size_t>& heatmap_bands() {
  static const std::vector<std::size_t> bands{0, 10, 20, 30};
  return bands;
}

/// Per-pixel |pred - gt| / max(|gt|, eps) of one band.
Cube mrae_heatmap(const Cube& pred, const Cube& gt, std::size_t band, double eps = 1e-3);
/// Fixed blue-green-yellow-red ramp over [0, 1].
Cube colorize(const Cube& heat);
/// Writes {name}_{nm}nm.pgm and {name}_{nm}nm.ppm for each heatmap band.
void write_heatmaps(const Cube& pred, const Cube& gt, const std::string& name, const std::string& dir,
                    double eps = 1e-3);

/// Full-image inference per sample; writes heatmaps when heatmap_dir is set.
template <typename T>
EvalReport evaluate(const EctModel<T>& model, const std::vector<Sample>& data, const std::string& heatmap_dir = "",
                    double mrae_eps = 1e-3);

}  // namespace ect
