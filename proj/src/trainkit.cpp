#include "ect/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "ect/checkpoint.hpp"
#include "ect/error.hpp"
#include "ect/ops.hpp"
#include "ect/rng.hpp"

namespace ect {

TrainConfig TrainConfig::full_schedule() {
  TrainConfig cfg;
  cfg.total_iters = 300000;
  cfg.batch_size = 20;
  cfg.patch = 128;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(lr_max > 0) || !(lr_min >= 0) || lr_min > lr_max)
    throw ConfigError("train: need 0 <= lr_min <= lr_max and lr_max > 0");
  if (total_iters == 0) throw ConfigError("train: total_iters must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (patch == 0) throw ConfigError("train: patch must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("train: betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("train: eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be non-negative");
  if (!(mrae_eps > 0)) throw ConfigError("train: mrae_eps must be positive");
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& pred, const Tensor<T>& gt, const char* what) {
  if (pred.shape() != gt.shape()) throw DimensionError(std::string(what) + ": prediction and target shapes differ");
  if (pred.numel() == 0) throw DimensionError(std::string(what) + ": empty input");
}

}  // namespace

template <typename T>
Tensor<T> mrae_loss(const Tensor<T>& pred, const Tensor<T>& gt, double eps) {
  require_same_shape(pred, gt, "mrae_loss");
  std::vector<T> inv(gt.numel());
  auto g = gt.data();
  for (std::size_t i = 0; i < inv.size(); ++i)
    inv[i] = T(1) / std::max(std::abs(g[i]), static_cast<T>(eps));
  Tensor<T> weights(gt.shape(), std::move(inv));
  return mean(mul(abs(sub(pred, gt.detach())), weights));
}

template <typename T>
double mrae(const Tensor<T>& pred, const Tensor<T>& gt, double eps) {
  require_same_shape(pred, gt, "mrae");
  auto p = pred.data();
  auto g = gt.data();
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gv = g[i];
    acc += std::abs(static_cast<double>(p[i]) - gv) / std::max(std::abs(gv), eps);
  }
  return acc / static_cast<double>(p.size());
}

template <typename T>
double rmse(const Tensor<T>& pred, const Tensor<T>& gt) {
  require_same_shape(pred, gt, "rmse");
  auto p = pred.data();
  auto g = gt.data();
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(g[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(p.size()));
}

template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& gt, double peak) {
  const double e = rmse(pred, gt);
  if (e == 0) return kPsnrCap;
  return std::min(kPsnrCap, 20.0 * std::log10(peak / e));
}

template <typename T>
double sam(const Tensor<T>& pred, const Tensor<T>& gt) {
  require_same_shape(pred, gt, "sam");
  if (pred.rank() < 3) throw DimensionError("sam: expected [.., bands, H, W]");
  const std::size_t rank = pred.rank();
  const std::size_t bands = pred.dim(rank - 3);
  const std::size_t plane = pred.dim(rank - 2) * pred.dim(rank - 1);
  const std::size_t outer = pred.numel() / (bands * plane);
  auto p = pred.data();
  auto g = gt.data();
  double acc = 0;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < plane; ++i) {
      double pg = 0, pp = 0, gg = 0;
      for (std::size_t b = 0; b < bands; ++b) {
        const std::size_t idx = (o * bands + b) * plane + i;
        const double pv = p[idx], gv = g[idx];
        pg += pv * gv;
        pp += pv * pv;
        gg += gv * gv;
      }
      const double denom = std::sqrt(pp) * std::sqrt(gg);
      if (denom < 1e-12) continue;  // an all-zero spectrum has no direction
      acc += std::acos(std::clamp(pg / denom, -1.0, 1.0));
    }
  return acc / static_cast<double>(outer * plane);
}

double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min) {
  if (total == 0) throw ConfigError("cosine_lr: total must be positive");
  if (t > total) throw ConfigError("cosine_lr: step " + std::to_string(t) + " beyond " + std::to_string(total));
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + (lr_max - lr_min) * 0.5 * (1.0 + std::cos(phase));
}

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, double beta1, double beta2, double eps, double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  ++steps_;
  beta1_pow_ *= beta1_;
  beta2_pow_ *= beta2_;
  const double c1 = 1.0 - beta1_pow_;
  const double c2 = 1.0 - beta2_pow_;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto theta = p.mutable_data();
    auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
      if (!std::isfinite(g)) throw NumericError("adamw: non-finite gradient in parameter " + std::to_string(k));
      double th = theta[i];
      th -= lr * wd_ * th;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      th -= lr * mh / (std::sqrt(vh) + eps_);
      theta[i] = static_cast<T>(th);
    }
  }
}

template <typename T>
Tensor<T> to_tensor(const Cube& cube) {
  std::vector<T> data(cube.data.begin(), cube.data.end());
  return Tensor<T>(Shape{cube.bands, cube.height, cube.width}, std::move(data));
}

template <typename T>
Tensor<T> stack(const std::vector<const Cube*>& cubes) {
  if (cubes.empty()) throw DimensionError("stack: no cubes");
  const Cube& first = *cubes.front();
  std::vector<T> data;
  data.reserve(cubes.size() * first.data.size());
  for (const Cube* c : cubes) {
    if (c->bands != first.bands || c->height != first.height || c->width != first.width)
      throw DimensionError("stack: cube extents differ");
    data.insert(data.end(), c->data.begin(), c->data.end());
  }
  return Tensor<T>(Shape{cubes.size(), first.bands, first.height, first.width}, std::move(data));
}

template <typename T>
Cube to_cube(const Tensor<T>& t) {
  std::size_t bands, h, w;
  if (t.rank() == 3) {
    bands = t.dim(0), h = t.dim(1), w = t.dim(2);
  } else if (t.rank() == 4 && t.dim(0) == 1) {
    bands = t.dim(1), h = t.dim(2), w = t.dim(3);
  } else {
    throw DimensionError("to_cube: expected [C,H,W] or [1,C,H,W]");
  }
  Cube out(bands, h, w);
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) out.data[i] = static_cast<float>(d[i]);
  return out;
}

template <typename T>
std::vector<LogRow> train(EctModel<T>& model, const std::vector<Sample>& data, const TrainConfig& cfg,
                          const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: no training samples");
  for (const auto& s : data) {
    if (s.rgb.bands != 3 || s.hsi.bands != kHsiBands)
      throw DimensionError("train: sample " + s.name + " must pair 3-band RGB with 31-band HSI");
    if (s.rgb.height != s.hsi.height || s.rgb.width != s.hsi.width)
      throw DimensionError("train: sample " + s.name + " has mismatched RGB and HSI extents");
    if (s.rgb.height < cfg.patch || s.rgb.width < cfg.patch)
      throw ConfigError("train: sample " + s.name + " is smaller than the " + std::to_string(cfg.patch) + " patch");
  }

  Rng rng(cfg.seed);
  AdamW<T> opt(model.params().tensors(), cfg);
  auto params = model.params().tensors();
  std::vector<LogRow> log;
  log.reserve(cfg.total_iters);

  for (std::size_t it = 0; it < cfg.total_iters; ++it) {
    std::vector<Cube> rgbs, hsis;
    rgbs.reserve(cfg.batch_size);
    hsis.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const Sample& s = data[rng.below(data.size())];
      const std::size_t y = rng.below(s.rgb.height - cfg.patch + 1);
      const std::size_t x = rng.below(s.rgb.width - cfg.patch + 1);
      const int op = cfg.augment ? static_cast<int>(rng.below(8)) : 0;
      rgbs.push_back(augment(crop(s.rgb, y, x, cfg.patch, cfg.patch), op));
      hsis.push_back(augment(crop(s.hsi, y, x, cfg.patch, cfg.patch), op));
    }
    std::vector<const Cube*> rp, hp;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      rp.push_back(&rgbs[b]);
      hp.push_back(&hsis[b]);
    }
    const Tensor<T> input = stack<T>(rp);
    const Tensor<T> target = stack<T>(hp);

    LogRow row;
    row.iter = it;
    row.lr = cosine_lr(it, cfg);
    try {
      const Tensor<T> pred = model.forward(input);
      const Tensor<T> loss = mrae_loss(pred, target, cfg.mrae_eps);
      row.loss = static_cast<double>(loss.item());
      if (!std::isfinite(row.loss)) throw NumericError("loss is not finite");
      for (auto& p : params) p.zero_grad();
      backward(loss);
      opt.step(row.lr);
      row.mrae = mrae(pred, target, cfg.mrae_eps);
      row.rmse = rmse(pred, target);
      row.psnr = psnr(pred, target);
      row.sam = sam(pred, target);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    log.push_back(row);
    if (on_step && !on_step(row)) break;
  }
  for (auto& p : params) p.zero_grad();
  return log;
}

void write_log_csv(const std::vector<LogRow>& rows, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("log " + path + ": cannot open for writing");
  os << "iter,lr,loss,mrae,rmse,psnr,sam\n" << std::setprecision(9);
  for (const auto& r : rows)
    os << r.iter << ',' << r.lr << ',' << r.loss << ',' << r.mrae << ',' << r.rmse << ',' << r.psnr << ',' << r.sam
       << '\n';
  if (!os) throw FormatError("log " + path + ": write failed");
}

template <typename T>
TwoStageResult<T> train_two_stage(const EctConfig& net, const std::vector<Sample>& data, const TrainConfig& first,
                                  const TrainConfig& second, const std::string& checkpoint_path,
                                  std::uint64_t seed, const StepCallback& on_step) {
  EctConfig one = net;
  one.stages = 1;
  EctConfig two = net;
  two.stages = 2;
  auto pre = EctModel<T>::build(one, seed);
  auto pretrain = train(pre, data, first, on_step);
  save_checkpoint(pre.params(), checkpoint_path);

  TwoStageResult<T> result{EctModel<T>::build(two, seed), std::move(pretrain), {}, 0};
  result.loaded = load_partial(result.model.params(), checkpoint_path);
  result.finetune = train(result.model, data, second, on_step);
  return result;
}

Cube mrae_heatmap(const Cube& pred, const Cube& gt, std::size_t band, double eps) {
  if (pred.bands != gt.bands || pred.height != gt.height || pred.width != gt.width)
    throw DimensionError("mrae_heatmap: prediction and target extents differ");
  if (band >= gt.bands) throw DimensionError("mrae_heatmap: band " + std::to_string(band) + " out of range");
  Cube out(1, gt.height, gt.width);
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x) {
      const double g = gt.at(band, y, x);
      out.at(0, y, x) = static_cast<float>(std::abs(pred.at(band, y, x) - g) / std::max(std::abs(g), eps));
    }
  return out;
}

Cube colorize(const Cube& heat) {
  if (heat.bands != 1) throw DimensionError("colorize: expected one plane");
  static constexpr double stops[4][3] = {{0, 0, 1}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}};
  Cube out(3, heat.height, heat.width);
  const std::size_t n = heat.plane();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::clamp(static_cast<double>(heat.data[i]), 0.0, 1.0) * 3.0;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(v), 2);
    const double f = v - static_cast<double>(k);
    for (std::size_t c = 0; c < 3; ++c)
      out.data[c * n + i] = static_cast<float>(stops[k][c] + (stops[k + 1][c] - stops[k][c]) * f);
  }
  return out;
}

void write_heatmaps(const Cube& pred, const Cube& gt, const std::string& name, const std::string& dir,
                    double eps) {
  std::filesystem::create_directories(dir);
  for (std::size_t band : heatmap_bands()) {
    const Cube heat = mrae_heatmap(pred, gt, band, eps);
    const int nm = static_cast<int>(kFirstBandNm + kBandStepNm * static_cast<double>(band));
    const std::string stem = (std::filesystem::path(dir) / (name + "_" + std::to_string(nm) + "nm")).string();
    write_pgm(heat, stem + ".pgm");
    write_ppm(colorize(heat), stem + ".ppm");
  }
}

template <typename T>
EvalReport evaluate(const EctModel<T>& model, const std::vector<Sample>& data, const std::string& heatmap_dir,
                    double mrae_eps) {
  if (data.empty()) throw ConfigError("evaluate: no samples");
  NoGradGuard no_grad;
  EvalReport report;
  report.mean.name = "mean";
  for (const auto& s : data) {
    const Tensor<T> pred = model.forward(to_tensor<T>(s.rgb));
    const Tensor<T> gt = to_tensor<T>(s.hsi);
    ImageMetrics m{s.name, mrae(pred, gt, mrae_eps), rmse(pred, gt), psnr(pred, gt), sam(pred, gt)};
    report.images.push_back(m);
    report.mean.mrae += m.mrae;
    report.mean.rmse += m.rmse;
    report.mean.psnr += m.psnr;
    report.mean.sam += m.sam;
    if (!heatmap_dir.empty()) write_heatmaps(to_cube(pred), s.hsi, s.name, heatmap_dir, mrae_eps);
  }
  const double n = static_cast<double>(data.size());
  report.mean.mrae /= n;
  report.mean.rmse /= n;
  report.mean.psnr /= n;
  report.mean.sam /= n;
  return report;
}

#define ECT_TRAINKIT_INST(T)                                                                                  \
  template Tensor<T> mrae_loss(const Tensor<T>&, const Tensor<T>&, double);                                   \
  template double mrae(const Tensor<T>&, const Tensor<T>&, double);                                           \
  template double rmse(const Tensor<T>&, const Tensor<T>&);                                                   \
  template double psnr(const Tensor<T>&, const Tensor<T>&, double);                                           \
  template double sam(const Tensor<T>&, const Tensor<T>&);                                                    \
  template class AdamW<T>;                                                                                    \
  template Tensor<T> to_tensor<T>(const Cube&);                                                               \
  template Tensor<T> stack<T>(const std::vector<const Cube*>&);                                               \
  template Cube to_cube(const Tensor<T>&);                                                                    \
  template std::vector<LogRow> train(EctModel<T>&, const std::vector<Sample>&, const TrainConfig&,            \
                                     const StepCallback&);                                                    \
  template TwoStageResult<T> train_two_stage(const EctConfig&, const std::vector<Sample>&, const TrainConfig&, \
                                             const TrainConfig&, const std::string&, std::uint64_t,           \
                                             const StepCallback&);                                            \
  template EvalReport evaluate(const EctModel<T>&, const std::vector<Sample>&, const std::string&, double);
ECT_TRAINKIT_INST(float)
ECT_TRAINKIT_INST(double)
#undef ECT_TRAINKIT_INST

}  // namespace ect
