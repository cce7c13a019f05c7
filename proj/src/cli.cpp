#include "ect/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "ect/checkpoint.hpp"
#include "ect/datapipe.hpp"
#include "ect/error.hpp"
#include "ect/gradcheck.hpp"
#include "ect/network.hpp"
#include "ect/ops.hpp"
#include "ect/rng.hpp"
#include "ect/trainkit.hpp"

namespace ect {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  EctConfig net;
  std::uint64_t seed = 0;
  std::string precision = "f32";
  std::string profile = "desk";
  std::string out = ".";
  std::string config;

  double shot_gain = 0.01, dark_std = 0.005, target_mean = 0.18;
  std::string codec = "jpeg";
  int quality = 95;
  bool mosaic = false;
  std::string srf;

  std::size_t count = 4, height = 64, width = 64, materials = 4;

  std::string data;
  std::optional<std::size_t> iters, batch, patch;
  std::optional<double> lr_max, lr_min, weight_decay, mrae_eps;
  bool no_augment = false, two_stage = false;
  std::size_t synth_count = 4, synth_size = 64, log_every = 100;

  std::string checkpoint;
  bool heatmaps = false;

  std::size_t grad_size = 16, coords = 6;
  int stencil = 4;
  double eps = 1e-3, tolerance = 1e-4;

  std::size_t flops_height = 256, flops_width = 256;

  std::string input, output, pred, gt, name = "image";
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

std::string flag_bool(bool v) { return v ? "true" : "false"; }

std::vector<std::pair<std::string, std::string>> model_keys(const EctConfig& c) {
  return {{"stages", std::to_string(c.stages)},
          {"base-channels", std::to_string(c.base_channels)},
          {"levels", std::to_string(c.levels)},
          {"cross-c", std::to_string(c.cross_c)},
          {"cross-s", std::to_string(c.cross_s)},
          {"cross-k", std::to_string(c.cross_k)},
          {"inter-c", std::to_string(c.inter_c)},
          {"inter-s", std::to_string(c.inter_s)},
          {"inter-k", std::to_string(c.inter_k)},
          {"ablate-sd3d", flag_bool(c.ablate_sd3d)},
          {"ablate-dlrm", flag_bool(c.ablate_dlrm)}};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Flags equivalent to a --config value, placed before the explicit flags so
/// that those win.
std::vector<std::string> expand_config(const std::string& value) {
  std::vector<std::pair<std::string, std::string>> keys;
  if (value == "tiny") {
    keys = model_keys(EctConfig::tiny());
  } else if (value == "default") {
    keys = model_keys(EctConfig{});
  } else {
    std::ifstream in(value);
    if (!in) throw UsageError("config '" + value + "' is neither a preset (tiny, default) nor a readable file");
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      line = trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError("config " + value + ":" + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(line.substr(0, eq));
      std::replace(key.begin(), key.end(), '_', '-');
      if (key == "config") throw UsageError("config " + value + ": nested config is not allowed");
      keys.emplace_back(key, trim(line.substr(eq + 1)));
    }
  }
  std::vector<std::string> flags;
  for (const auto& [k, v] : keys) flags.push_back("--" + k + "=" + v);
  return flags;
}

void write_config(const Options& o, const EctConfig& net, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("config " + path + ": cannot open for writing");
  for (const auto& [k, v] : model_keys(net)) os << k << " = " << v << '\n';
  os << "seed = " << o.seed << '\n' << "precision = " << o.precision << '\n';
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "Preset (tiny, default) or key=value file; explicit flags override it");
  sub->add_option("--seed", o.seed, "Random seed (falls back to ECT_SEED, then 0)");
  sub->add_option("--out", o.out, "Output directory");
}

void add_model(CLI::App* sub, Options& o) {
  auto& n = o.net;
  sub->add_option("--stages", n.stages, "Number of stages N_s")->check(CLI::PositiveNumber);
  sub->add_option("--base-channels", n.base_channels, "Channels at the first level")->check(CLI::PositiveNumber);
  sub->add_option("--levels", n.levels, "Encoder levels")->check(CLI::PositiveNumber);
  sub->add_option("--cross-c", n.cross_c, "Cross block spectral group width c")->check(CLI::PositiveNumber);
  sub->add_option("--cross-s", n.cross_s, "Cross block spatial tile divisor s")->check(CLI::PositiveNumber);
  sub->add_option("--cross-k", n.cross_k, "Cross block dependence rank k")->check(CLI::PositiveNumber);
  sub->add_option("--inter-c", n.inter_c, "Inter block spectral group width c")->check(CLI::PositiveNumber);
  sub->add_option("--inter-s", n.inter_s, "Inter block spatial tile divisor s")->check(CLI::PositiveNumber);
  sub->add_option("--inter-k", n.inter_k, "Inter block dependence rank k")->check(CLI::PositiveNumber);
  sub->add_flag("--ablate-sd3d", n.ablate_sd3d, "Replace SD3D tokens with plain spectral-wise tokens");
  sub->add_flag("--ablate-dlrm", n.ablate_dlrm, "Replace the dependence map with the identity");
  sub->add_option("--precision", o.precision, "Floating point precision")->check(CLI::IsMember({"f32", "f64"}));
  sub->add_option("--profile", o.profile,
                  "Training profile: desk (2000 iterations, batch 4, 32x32 patches) or paper (3e5 iterations, "
                  "batch 20, 128x128 patches)")
      ->check(CLI::IsMember({"desk", "paper"}));
}

void add_sim(CLI::App* sub, Options& o) {
  sub->add_option("--shot-gain", o.shot_gain, "Shot noise variance factor a");
  sub->add_option("--dark-std", o.dark_std, "Dark noise standard deviation b");
  sub->add_option("--target-mean", o.target_mean, "Mean after normalization");
  sub->add_option("--codec", o.codec, "Compression stage")->check(CLI::IsMember({"none", "jpeg"}));
  sub->add_option("--quality", o.quality, "JPEG quality")->check(CLI::Range(1, 100));
  sub->add_flag("--mosaic", o.mosaic, "RGGB mosaic before noise and bilinear demosaic after");
  sub->add_option("--srf", o.srf, "Spectral response file (31 rows of 3 values)");
}

void add_data(CLI::App* sub, Options& o) {
  sub->add_option("--data", o.data, "Manifest of rgb<TAB>hsi pairs; synthetic data when omitted");
  sub->add_option("--synth-count", o.synth_count, "Synthetic images when --data is omitted");
  sub->add_option("--synth-size", o.synth_size, "Synthetic image extent when --data is omitted");
  sub->add_option("--mrae-eps", o.mrae_eps, "Guard on |gt| in the MRAE denominator");
}

SimConfig sim_config(const Options& o, std::uint64_t seed) {
  SimConfig s;
  s.shot_gain = o.shot_gain;
  s.dark_std = o.dark_std;
  s.target_mean = o.target_mean;
  s.codec = o.codec == "jpeg" ? Codec::Jpeg : Codec::None;
  s.jpeg_quality = o.quality;
  s.mosaic = o.mosaic;
  s.seed = seed;
  s.validate();
  return s;
}

Srf srf_of(const Options& o) { return o.srf.empty() ? default_srf() : load_srf(o.srf); }

std::vector<Sample> load_samples(const Options& o, std::uint64_t stream) {
  std::vector<Sample> out;
  if (!o.data.empty()) {
    for (const auto& [rgb, hsi] : read_manifest(o.data))
      out.push_back({fs::path(hsi).stem().string(), read_rgb(rgb), read_hsi(hsi)});
    if (out.empty()) throw UsageError("manifest " + o.data + " lists no images");
    return out;
  }
  const Srf srf = srf_of(o);
  for (std::size_t i = 0; i < o.synth_count; ++i) {
    const std::uint64_t base = derive_seed(o.seed, stream + i);
    Cube hsi = synth_hsi(derive_seed(base, 0), o.synth_size, o.synth_size, o.materials);
    Cube rgb = simulate_rgb(hsi, srf, sim_config(o, derive_seed(base, 1)));
    std::ostringstream name;
    name << "synth_" << std::setw(3) << std::setfill('0') << i;
    out.push_back({name.str(), std::move(rgb), std::move(hsi)});
  }
  return out;
}

void print_row(std::ostream& out, const LogRow& r) {
  out << "iter " << r.iter << " lr " << fmt(r.lr) << " loss " << fmt(r.loss) << " psnr " << fmt(r.psnr) << '\n';
}

int cmd_synth_data(const Options& o, std::ostream& out) {
  fs::create_directories(o.out);
  const Srf srf = srf_of(o);
  std::vector<std::pair<std::string, std::string>> entries;
  for (std::size_t i = 0; i < o.count; ++i) {
    std::ostringstream stem;
    stem << "scene_" << std::setw(3) << std::setfill('0') << i;
    const std::uint64_t base = derive_seed(o.seed, i);
    const Cube hsi = synth_hsi(derive_seed(base, 0), o.height, o.width, o.materials);
    const Cube rgb = simulate_rgb(hsi, srf, sim_config(o, derive_seed(base, 1)));
    write_hsi(hsi, (fs::path(o.out) / (stem.str() + ".hsi")).string());
    write_hsi(rgb, (fs::path(o.out) / (stem.str() + "_rgb.hsi")).string());
    write_ppm(rgb, (fs::path(o.out) / (stem.str() + ".ppm")).string());
    entries.emplace_back(stem.str() + "_rgb.hsi", stem.str() + ".hsi");
  }
  const std::string manifest = (fs::path(o.out) / "manifest.tsv").string();
  write_manifest(entries, manifest);
  out << "RESULT images=" << o.count << " manifest=" << manifest << '\n';
  return 0;
}

int cmd_simulate_rgb(const Options& o, std::ostream& out) {
  if (o.input.empty()) throw UsageError("simulate-rgb: --input is required");
  const Cube hsi = read_hsi(o.input);
  const Cube rgb = simulate_rgb(hsi, srf_of(o), sim_config(o, o.seed));
  std::string path = o.output;
  if (path.empty()) {
    fs::create_directories(o.out);
    path = (fs::path(o.out) / (fs::path(o.input).stem().string() + ".ppm")).string();
  }
  if (fs::path(path).extension() == ".ppm")
    write_ppm(rgb, path);
  else
    write_hsi(rgb, path);
  out << "RESULT mean=" << fmt(rgb.mean()) << " output=" << path << '\n';
  return 0;
}

TrainConfig train_config(const Options& o) {
  TrainConfig tc = o.profile == "paper" ? TrainConfig::full_schedule() : TrainConfig{};
  if (o.iters) tc.total_iters = *o.iters;
  if (o.batch) tc.batch_size = *o.batch;
  if (o.patch) tc.patch = *o.patch;
  if (o.lr_max) tc.lr_max = *o.lr_max;
  if (o.lr_min) tc.lr_min = *o.lr_min;
  if (o.weight_decay) tc.weight_decay = *o.weight_decay;
  if (o.mrae_eps) tc.mrae_eps = *o.mrae_eps;
  tc.augment = !o.no_augment;
  tc.seed = o.seed;
  return tc;
}

template <typename T>
int cmd_train(const Options& o, std::ostream& out) {
  o.net.validate();
  const TrainConfig tc = train_config(o);
  const auto data = load_samples(o, 0);
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  const StepCallback progress = [&](const LogRow& r) {
    if (o.log_every != 0 && r.iter % o.log_every == 0) print_row(out, r);
    return true;
  };

  std::vector<LogRow> log;
  std::optional<EctModel<T>> model;
  if (o.two_stage) {
    TrainConfig first = tc, second = tc;
    first.lr_max = o.lr_max.value_or(5.6e-4);
    second.lr_max = o.lr_max.value_or(3e-4);
    if (o.profile == "paper") {
      first.batch_size = o.batch.value_or(40);
      second.batch_size = o.batch.value_or(20);
    }
    const std::string stage1 = (dir / "stage1.ckpt").string();
    auto result = train_two_stage<T>(o.net, data, first, second, stage1, o.seed, progress);
    write_log_csv(result.pretrain, (dir / "log_stage1.csv").string());
    out << "RESULT phase=pretrain iters=" << result.pretrain.size() << " loaded=" << result.loaded
        << " checkpoint=" << stage1 << '\n';
    log = std::move(result.finetune);
    model.emplace(std::move(result.model));
  } else {
    model.emplace(EctModel<T>::build(o.net, o.seed));
    log = train(*model, data, tc, progress);
  }
  const std::string log_path = (dir / "log.csv").string();
  const std::string ckpt = (dir / "model.ckpt").string();
  write_log_csv(log, log_path);
  save_checkpoint(model->params(), ckpt);
  write_config(o, model->config(), (dir / "config.txt").string());
  const LogRow& last = log.back();
  out << "RESULT iters=" << log.size() << " loss=" << fmt(last.loss) << " psnr=" << fmt(last.psnr)
      << " params=" << count_params(*model) << " checkpoint=" << ckpt << " log=" << log_path << '\n';
  return 0;
}

template <typename T>
int cmd_eval(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw UsageError("eval: --checkpoint is required");
  o.net.validate();
  auto model = EctModel<T>::build(o.net, o.seed);
  load_checkpoint(model.params(), o.checkpoint);
  const auto data = load_samples(o, 1000);
  const auto report = evaluate(model, data, o.heatmaps ? o.out : "", o.mrae_eps.value_or(1e-3));
  for (const auto& m : report.images)
    out << "RESULT image=" << m.name << " mrae=" << fmt(m.mrae) << " rmse=" << fmt(m.rmse) << " psnr=" << fmt(m.psnr)
        << " sam=" << fmt(m.sam) << '\n';
  const auto& m = report.mean;
  out << "RESULT images=" << report.images.size() << " mrae=" << fmt(m.mrae) << " rmse=" << fmt(m.rmse)
      << " psnr=" << fmt(m.psnr) << " sam=" << fmt(m.sam) << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  o.net.validate();
  auto model = EctModel<double>::build(o.net, o.seed);
  Rng rng(derive_seed(o.seed, 77));
  // Weights well away from the 0.02 init scale exercise every path.
  for (auto t : model.params().tensors())
    for (auto& v : t.mutable_data()) v = rng.uniform(-0.3, 0.3);
  std::vector<double> xs(3 * o.grad_size * o.grad_size), ws;
  for (auto& v : xs) v = rng.uniform(0.0, 1.0);
  Tensor<double> x(Shape{1, 3, o.grad_size, o.grad_size}, std::move(xs));
  x.set_requires_grad(true);
  ws.resize(kHsiBands * o.grad_size * o.grad_size);
  for (auto& v : ws) v = rng.uniform(-1.0, 1.0);
  const Tensor<double> weights(Shape{1, kHsiBands, o.grad_size, o.grad_size}, std::move(ws));

  auto params = model.params().tensors();
  params.push_back(x);
  GradCheckOptions opts;
  opts.eps = o.eps;
  opts.stencil = o.stencil;
  opts.max_coords_per_param = o.coords;
  opts.seed = o.seed;
  const auto report = grad_check([&] { return dot(model.forward(x), weights); }, params, opts);
  const bool ok = report.max_rel_error <= o.tolerance;
  out << "RESULT max_rel_err=" << fmt(report.max_rel_error) << " coords=" << report.coordinates_checked
      << " tolerance=" << fmt(o.tolerance) << " status=" << (ok ? "pass" : "fail") << '\n';
  return ok ? 0 : 1;
}

int cmd_params(const Options& o, std::ostream& out) {
  o.net.validate();
  const auto model = EctModel<float>::build(o.net, o.seed);
  const std::size_t n = count_params(model);
  out << "RESULT params=" << n << " millions=" << fmt(static_cast<double>(n) / 1e6) << '\n';
  return 0;
}

int cmd_flops(const Options& o, std::ostream& out) {
  o.net.validate();
  const auto report = count_flops(o.net, o.flops_height, o.flops_width);
  out << report.sheet();
  out << "RESULT flops=" << report.total << " gflops=" << fmt(static_cast<double>(report.total) / 1e9)
      << " padded=" << report.padded_height << "x" << report.padded_width << '\n';
  return 0;
}

int cmd_heatmap(const Options& o, std::ostream& out) {
  if (o.pred.empty() || o.gt.empty()) throw UsageError("heatmap: --pred and --gt are required");
  write_heatmaps(read_hsi(o.pred), read_hsi(o.gt), o.name, o.out, o.mrae_eps.value_or(1e-3));
  out << "RESULT files=" << 2 * heatmap_bands().size() << " dir=" << o.out << '\n';
  return 0;
}

int cmd_convert(const Options& o, std::ostream&) {
  if (o.input.empty()) throw UsageError("convert: --input is required");
  convert_archive(o.input, o.out);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  if (const char* env = std::getenv("ECT_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      o.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      err << "error: ECT_SEED must be an unsigned integer, got '" << env << "'\n";
      return 2;
    }
  }

  CLI::App app{"Spectral reconstruction of 31-band hyperspectral images from RGB", "ect"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "Write synthetic HSI scenes, simulated RGB and a manifest");
  add_common(synth, o);
  add_sim(synth, o);
  synth->add_option("--count", o.count, "Number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--height", o.height, "Scene height")->check(CLI::PositiveNumber);
  synth->add_option("--width", o.width, "Scene width")->check(CLI::PositiveNumber);
  synth->add_option("--materials", o.materials, "Materials mixed per scene")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate-rgb", "Run the camera simulation on one HSI file");
  add_common(simulate, o);
  add_sim(simulate, o);
  simulate->add_option("--input", o.input, "HSI container to project");
  simulate->add_option("--output", o.output, "Output file (.ppm, otherwise HSI container)");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write log.csv, model.ckpt and config.txt");
  add_common(train_cmd, o);
  add_model(train_cmd, o);
  add_sim(train_cmd, o);
  add_data(train_cmd, o);
  train_cmd->add_option("--materials", o.materials, "Materials per synthetic scene")->check(CLI::PositiveNumber);
  train_cmd->add_option("--iters", o.iters, "Training iterations")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", o.batch, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--patch", o.patch, "Square patch extent")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr-max", o.lr_max, "Peak learning rate");
  train_cmd->add_option("--lr-min", o.lr_min, "Final learning rate");
  train_cmd->add_option("--weight-decay", o.weight_decay, "Decoupled weight decay");
  train_cmd->add_flag("--no-augment", o.no_augment, "Disable flips and rotations");
  train_cmd->add_flag("--two-stage", o.two_stage, "Pretrain one stage, then continue with two");
  train_cmd->add_option("--log-every", o.log_every, "Progress line interval (0 disables)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint: MRAE, RMSE, PSNR, SAM");
  add_common(eval_cmd, o);
  add_model(eval_cmd, o);
  add_sim(eval_cmd, o);
  add_data(eval_cmd, o);
  eval_cmd->add_option("--materials", o.materials, "Materials per synthetic scene")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint written by train");
  eval_cmd->add_flag("--heatmaps", o.heatmaps, "Write MRAE heatmaps into --out");

  auto* grad_cmd = app.add_subcommand("gradcheck", "End-to-end gradient check in 64-bit arithmetic");
  add_common(grad_cmd, o);
  add_model(grad_cmd, o);
  grad_cmd->add_option("--size", o.grad_size, "Input extent")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--coords", o.coords, "Coordinates sampled per tensor (0 = all)");
  grad_cmd->add_option("--stencil", o.stencil, "Central difference points")->check(CLI::IsMember({2, 4}));
  grad_cmd->add_option("--eps", o.eps, "Finite difference step");
  grad_cmd->add_option("--tolerance", o.tolerance, "Maximum relative error for exit code 0");

  auto* params_cmd = app.add_subcommand("params", "Count trainable parameters");
  add_common(params_cmd, o);
  add_model(params_cmd, o);

  auto* flops_cmd = app.add_subcommand("flops", "Per-layer FLOP sheet");
  add_common(flops_cmd, o);
  add_model(flops_cmd, o);
  flops_cmd->add_option("--height", o.flops_height, "Input height")->check(CLI::PositiveNumber);
  flops_cmd->add_option("--width", o.flops_width, "Input width")->check(CLI::PositiveNumber);

  auto* heat_cmd = app.add_subcommand("heatmap", "MRAE heatmaps at 400, 500, 600 and 700 nm");
  add_common(heat_cmd, o);
  heat_cmd->add_option("--pred", o.pred, "Predicted HSI container");
  heat_cmd->add_option("--gt", o.gt, "Ground-truth HSI container");
  heat_cmd->add_option("--name", o.name, "File name prefix");
  heat_cmd->add_option("--mrae-eps", o.mrae_eps, "Guard on |gt| in the MRAE denominator");

  auto* convert_cmd = app.add_subcommand("convert", "Convert an official challenge archive (unsupported)");
  add_common(convert_cmd, o);
  convert_cmd->add_option("--input", o.input, "Archive path");

  std::vector<std::string> argv = args;
  try {
    std::optional<std::string> config;
    for (std::size_t i = 1; i < argv.size(); ++i) {
      if (argv[i] == "--config" && i + 1 < argv.size())
        config = argv[i + 1];
      else if (argv[i].rfind("--config=", 0) == 0)
        config = argv[i].substr(9);
    }
    if (config) {
      const auto extra = expand_config(*config);
      argv.insert(argv.begin() + 1, extra.begin(), extra.end());
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    const bool f64 = o.precision == "f64";
    if (synth->parsed()) return cmd_synth_data(o, out);
    if (simulate->parsed()) return cmd_simulate_rgb(o, out);
    if (train_cmd->parsed()) return f64 ? cmd_train<double>(o, out) : cmd_train<float>(o, out);
    if (eval_cmd->parsed()) return f64 ? cmd_eval<double>(o, out) : cmd_eval<float>(o, out);
    if (grad_cmd->parsed()) return cmd_gradcheck(o, out);
    if (params_cmd->parsed()) return cmd_params(o, out);
    if (flops_cmd->parsed()) return cmd_flops(o, out);
    if (heat_cmd->parsed()) return cmd_heatmap(o, out);
    if (convert_cmd->parsed()) return cmd_convert(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace ect
