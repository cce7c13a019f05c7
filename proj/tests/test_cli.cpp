#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "doctest.h"
#include "ect/cli.hpp"
#include "ect/network.hpp"

using namespace ect;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string temp_dir(const std::string& leaf) {
  const auto p = fs::temp_directory_path() / ("ect_test_cli_" + leaf);
  fs::remove_all(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Value of key in the last RESULT line carrying it.
std::string result_value(const std::string& out, const std::string& key) {
  const std::regex re("RESULT .*\\b" + key + "=([^ \\n]+)");
  std::string value;
  for (std::sregex_iterator it(out.begin(), out.end(), re), end; it != end; ++it) value = (*it)[1];
  return value;
}

struct SeedEnv {
  explicit SeedEnv(const char* value) { ::setenv("ECT_SEED", value, 1); }
  ~SeedEnv() { ::unsetenv("ECT_SEED"); }
};

}  // namespace

TEST_CASE("help lists every subcommand and flag") {
  auto top = invoke({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"synth-data", "simulate-rgb", "train", "eval", "gradcheck", "params", "flops", "heatmap",
                          "convert"})
    CHECK_MESSAGE(top.out.find(sub) != std::string::npos, sub);

  auto train = invoke({"train", "--help"});
  CHECK(train.code == 0);
  for (const char* flag : {"--stages", "--base-channels", "--cross-c", "--cross-s", "--cross-k", "--inter-c",
                           "--inter-s", "--inter-k", "--ablate-sd3d", "--ablate-dlrm", "--two-stage", "--seed",
                           "--precision", "--profile", "--out", "--config", "--data", "--iters", "--batch", "--patch",
                           "--lr-max", "--lr-min", "--weight-decay", "--mrae-eps", "--no-augment", "--codec",
                           "--quality", "--mosaic", "--srf"})
    CHECK_MESSAGE(train.out.find(flag) != std::string::npos, flag);

  for (const char* sub : {"synth-data", "simulate-rgb", "eval", "gradcheck", "params", "flops", "heatmap", "convert"}) {
    auto r = invoke({sub, "--help"});
    CHECK_MESSAGE(r.code == 0, sub);
    CHECK(r.out.find("--config") != std::string::npos);
  }
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"params", "--bogus"}).code == 2);
  CHECK(invoke({"params", "--precision", "f16"}).code == 2);
  CHECK(invoke({"params", "--config", "no_such_preset_or_file"}).code == 2);
  CHECK(invoke({"eval"}).code == 2);  // --checkpoint is required
  {
    SeedEnv env("not-a-number");
    CHECK(invoke({"params"}).code == 2);
  }
}

TEST_CASE("runtime errors exit with code 1") {
  auto r = invoke({"convert", "--input", "archive.zip"});
  CHECK(r.code == 1);
  CHECK(r.err.find("unimplemented") != std::string::npos);
  CHECK(invoke({"simulate-rgb", "--input", "/nonexistent/file.hsi"}).code == 1);
}

TEST_CASE("params reports exact counts") {
  auto r = invoke({"params", "--stages", "2"});
  CHECK(r.code == 0);
  CHECK(result_value(r.out, "params") == std::to_string(count_params(EctModel<float>::build(EctConfig{}, 0))));
  CHECK(result_value(r.out, "params") == "1244688");
  CHECK(result_value(invoke({"params", "--stages", "1"}).out, "params") == "622778");
  CHECK(result_value(invoke({"params", "--ablate-sd3d", "--ablate-dlrm"}).out, "params") == "1145004");
}

TEST_CASE("config presets and files yield to explicit flags") {
  CHECK(result_value(invoke({"params", "--config", "tiny"}).out, "params") == "51986");
  // Flags override the preset regardless of position.
  auto two = EctConfig::tiny();
  two.stages = 2;
  const auto expect = std::to_string(count_params(EctModel<float>::build(two, 0)));
  CHECK(result_value(invoke({"params", "--config", "tiny", "--stages", "2"}).out, "params") == expect);
  CHECK(result_value(invoke({"params", "--stages", "2", "--config", "tiny"}).out, "params") == expect);

  const auto dir = temp_dir("config");
  fs::create_directories(dir);
  const auto file = dir + "/model.cfg";
  {
    std::ofstream os(file);
    os << "# tiny model, one stage\nstages = 1\nbase_channels = 8\ncross-k=4\ninter-c = 8\ninter-k = 4\n"
          "ablate-dlrm = false\n";
  }
  CHECK(result_value(invoke({"params", "--config", file}).out, "params") == "51986");
  CHECK(result_value(invoke({"params", "--config", file, "--ablate-dlrm"}).out, "params") !=
        std::string("51986"));
  {
    std::ofstream os(file);
    os << "no_such_key = 3\n";
  }
  CHECK(invoke({"params", "--config", file}).code == 2);
  {
    std::ofstream os(file);
    os << "stages\n";
  }
  CHECK(invoke({"params", "--config", file}).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck on the tiny preset passes") {
  auto r = invoke({"gradcheck", "--config", "tiny"});
  CHECK(r.code == 0);
  const double err = std::stod(result_value(r.out, "max_rel_err"));
  CHECK(err <= 1e-4);
  // An impossible tolerance flips the exit code.
  CHECK(invoke({"gradcheck", "--config", "tiny", "--size", "16", "--coords", "1", "--tolerance", "0"}).code == 1);
}

TEST_CASE("train is deterministic and seeds fall back to ECT_SEED") {
  const auto a = temp_dir("train_a");
  const auto b = temp_dir("train_b");
  const std::vector<std::string> common{"train", "--config", "tiny", "--iters", "3", "--batch", "1", "--patch",
                                        "16", "--synth-count", "1", "--synth-size", "16", "--log-every", "0"};
  auto with_out = [&](const std::string& dir, std::vector<std::string> extra) {
    auto args = common;
    args.insert(args.end(), {"--out", dir});
    args.insert(args.end(), extra.begin(), extra.end());
    return invoke(args);
  };
  {
    SeedEnv env("5");
    REQUIRE(with_out(a, {}).code == 0);
    REQUIRE(with_out(b, {"--seed", "7"}).code == 0);
  }
  CHECK(slurp(a + "/config.txt").find("seed = 5") != std::string::npos);
  CHECK(slurp(b + "/config.txt").find("seed = 7") != std::string::npos);
  CHECK(slurp(a + "/log.csv") != slurp(b + "/log.csv"));

  const auto c = temp_dir("train_c");
  REQUIRE(with_out(c, {"--seed", "5"}).code == 0);
  CHECK(slurp(a + "/log.csv") == slurp(c + "/log.csv"));
  CHECK(slurp(a + "/model.ckpt") == slurp(c + "/model.ckpt"));
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("ablation baseline trains from the command line") {
  const auto dir = temp_dir("ablate");
  auto r = invoke({"train", "--config", "tiny", "--ablate-sd3d", "--ablate-dlrm", "--iters", "1", "--batch", "1",
                   "--patch", "16", "--synth-count", "1", "--synth-size", "16", "--out", dir});
  CHECK(r.code == 0);
  auto cfg = EctConfig::tiny();
  cfg.ablate_sd3d = cfg.ablate_dlrm = true;
  CHECK(result_value(r.out, "params") == std::to_string(count_params(EctModel<float>::build(cfg, 0))));
  CHECK(slurp(dir + "/config.txt").find("ablate-sd3d = true") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("synth-data, train, eval and heatmap round trip") {
  const auto root = temp_dir("flow");
  const auto data = root + "/data";
  auto s = invoke({"synth-data", "--out", data, "--count", "2", "--height", "20", "--width", "20"});
  REQUIRE(s.code == 0);
  const auto manifest = result_value(s.out, "manifest");
  CHECK(fs::exists(manifest));
  CHECK(fs::exists(data + "/scene_001.ppm"));

  auto t = invoke({"train", "--config", "tiny", "--precision", "f64", "--data", manifest, "--iters", "2", "--batch",
                   "2", "--patch", "16", "--out", root + "/run", "--log-every", "0"});
  REQUIRE(t.code == 0);
  CHECK(result_value(t.out, "iters") == "2");
  CHECK(slurp(root + "/run/log.csv").rfind("iter,lr,loss,mrae,rmse,psnr,sam\n", 0) == 0);

  auto e = invoke({"eval", "--config", root + "/run/config.txt", "--checkpoint", root + "/run/model.ckpt", "--data",
                   manifest, "--heatmaps", "--out", root + "/heat"});
  REQUIRE(e.code == 0);
  CHECK(result_value(e.out, "images") == "2");
  CHECK(std::stod(result_value(e.out, "mrae")) > 0.0);
  CHECK(fs::exists(root + "/heat/scene_000_700nm.pgm"));
  CHECK(fs::exists(root + "/heat/scene_001_400nm.ppm"));

  // A checkpoint from another architecture is rejected.
  CHECK(invoke({"eval", "--checkpoint", root + "/run/model.ckpt", "--data", manifest}).code == 1);

  auto h = invoke({"heatmap", "--pred", data + "/scene_000.hsi", "--gt", data + "/scene_000.hsi", "--name", "same",
                   "--out", root + "/hm"});
  CHECK(h.code == 0);
  CHECK(result_value(h.out, "files") == "8");
  // Identical cubes give an all-zero map.
  const auto pgm = slurp(root + "/hm/same_500nm.pgm");
  const auto header = std::string("P5\n20 20\n255\n");
  REQUIRE(pgm.size() == header.size() + 400);
  CHECK(pgm.find_first_not_of('\0', header.size()) == std::string::npos);

  auto sim = invoke({"simulate-rgb", "--input", data + "/scene_000.hsi", "--codec", "none", "--shot-gain", "0",
                     "--dark-std", "0", "--output", root + "/rgb.hsi"});
  CHECK(sim.code == 0);
  CHECK(std::abs(std::stod(result_value(sim.out, "mean")) - 0.18) < 1e-6);
  fs::remove_all(root);
}

TEST_CASE("flops sheet") {
  auto r = invoke({"flops", "--height", "256", "--width", "256"});
  CHECK(r.code == 0);
  CHECK(result_value(r.out, "flops") == std::to_string(count_flops(EctConfig{}, 256, 256).total));
  CHECK(result_value(r.out, "padded") == "256x256");
}
