#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <sys/wait.h>

#include "tmf/data.hpp"
#include "tmf/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tmf;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::path(TMF_CLI_WORK_DIR) / info->name();
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  RunResult run(const std::string& args, const std::string& env = "") const {
    const fs::path log = dir_ / "last_output.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" TMF_CLI_EXE "' " + args + " > '" +
                            log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // Small dataset with 96 px samples, shared by the training-related tests.
  void synth(const std::string& name, int n = 4) const {
    ASSERT_EQ(run("synth --n " + std::to_string(n) + " --test 1 --size 96 --seed 5 --out " + name).code, 0);
  }

  fs::path dir_;
};

Image checkerboard(int h, int w, float a, float b) {
  Image img(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = ((x + y) % 2 ? a : b) + 0.0f * c;
  return img;
}

Image codes(int h, int w, int seed) {
  Image img(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = static_cast<float>((seed + 37 * c + 11 * y + 5 * x) % 128 * 2) / 255.0f;
  return img;
}

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("no-such-command").code, 2);
  EXPECT_EQ(run("gradcheck --scope not_an_op").code, 2);
  EXPECT_EQ(run("synth --out x").code, 2);
  EXPECT_EQ(run("count --height 100 --width 64").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, GradcheckNbpPasses) {
  const auto r = run("gradcheck --scope nbp --report report.json");
  EXPECT_EQ(r.code, 0) << r.output;
  const json report = json::parse(slurp(path("report.json")));
  EXPECT_TRUE(report["passed"].get<bool>());
  ASSERT_EQ(report["checks"].size(), 1u);
  EXPECT_LE(report["checks"][0]["max_rel_error"].get<double>(), 1e-3);
}

TEST_F(Cli, OracleScopesPass) {
  auto r = run("oracle --scope nbp --trials 100");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("PASS"), std::string::npos);
  r = run("oracle --scope fusion");
  EXPECT_EQ(r.code, 0) << r.output;
  r = run("oracle --scope metrics");
  EXPECT_EQ(r.code, 0) << r.output;
}

TEST_F(Cli, OracleMetricsDetectsWrongGolden) {
  json golden = json::parse(slurp(fs::path(TMF_TEST_DATA_DIR) / "metrics_golden.json"));
  golden["random_0"]["sad"] = golden["random_0"]["sad"].get<double>() + 0.01;
  std::ofstream(path("bad.json")) << golden.dump();
  EXPECT_EQ(run("oracle --scope metrics --golden bad.json").code, 1);
}

TEST_F(Cli, CompositeOfPureAlphaReproducesLayers) {
  const int h = 12, w = 10;
  write_image(path("fg.png").string(), codes(h, w, 3), 8);
  write_image(path("bg.png").string(), codes(h, w, 90), 8);
  write_image(path("one.png").string(), Image(1, h, w, 1.0f), 8);
  write_image(path("zero.png").string(), Image(1, h, w, 0.0f), 8);
  ASSERT_EQ(run("composite --fg fg.png --bg bg.png --alpha one.png --out c1.png").code, 0);
  ASSERT_EQ(run("composite --fg fg.png --bg bg.png --alpha zero.png --out c0.png").code, 0);
  EXPECT_EQ(slurp(path("c1.png")), slurp(path("fg.png")));
  EXPECT_EQ(slurp(path("c0.png")), slurp(path("bg.png")));
}

TEST_F(Cli, CompositeHalfAlphaIsRoundedMidpoint) {
  const int h = 8, w = 8;
  // Codes chosen so fg + bg is even: the midpoint is an exact code.
  write_image(path("fg.png").string(), checkerboard(h, w, 200.0f / 255, 40.0f / 255), 8);
  write_image(path("bg.png").string(), checkerboard(h, w, 10.0f / 255, 250.0f / 255), 8);
  RawPng half{w, h, 1, 16, std::vector<std::uint16_t>(h * w, 32768)};
  write_png_raw(path("half.png").string(), half);
  ASSERT_EQ(run("composite --fg fg.png --bg bg.png --alpha half.png --out mid.png").code, 0);
  const RawPng out = read_png_raw(path("mid.png").string());
  const RawPng f = read_png_raw(path("fg.png").string()), b = read_png_raw(path("bg.png").string());
  ASSERT_EQ(out.samples.size(), f.samples.size());
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    EXPECT_EQ(out.samples[i], (f.samples[i] + b.samples[i]) / 2) << i;
  }
}

TEST_F(Cli, CompositeRejectsMismatchedSizes) {
  write_image(path("fg.png").string(), codes(8, 8, 1), 8);
  write_image(path("bg.png").string(), codes(8, 9, 1), 8);
  write_image(path("a.png").string(), Image(1, 8, 8, 1.0f), 8);
  EXPECT_EQ(run("composite --fg fg.png --bg bg.png --alpha a.png --out c.png").code, 2);
  EXPECT_FALSE(fs::exists(path("c.png")));
}

TEST_F(Cli, SynthAndTrimap) {
  ASSERT_EQ(run("synth --n 3 --test 1 --size 64 --seed 9 --threads 2 --out ds").code, 0);
  ASSERT_EQ(run("synth --n 3 --test 1 --size 64 --seed 9 --out ds1").code, 0);
  for (const char* sub : {"fg", "alpha", "composite", "trimap"}) {
    for (int i = 0; i < 3; ++i) {
      char name[16];
      std::snprintf(name, sizeof name, "%04d.png", i);
      EXPECT_EQ(slurp(path("ds") / sub / name), slurp(path("ds1") / sub / name)) << sub << "/" << name;
    }
  }
  const auto manifest = read_manifest(path("ds").string());
  ASSERT_EQ(manifest.entries.size(), 3u);
  EXPECT_EQ(manifest.entries[2].split, "test");

  ASSERT_EQ(run("trimap --alpha ds/alpha/0000.png --k-dilate 5 --k-erode 7 --out t.png").code, 0);
  const Trimap t = read_trimap(path("t.png").string());
  const Trimap expected = gen_trimap(read_image((path("ds") / "alpha/0000.png").string()), 5, 7);
  EXPECT_EQ(t, expected);
}

TEST_F(Cli, TrainWritesLogAndCheckpoints) {
  synth("ds");
  const auto r = run("train --data ds --iterations 4 --batch 2 --crop 96 --checkpoint-every 2 --out run");
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"iter_000002.tmfw", "iter_000004.tmfw", "final.tmfw", "config.json"}) {
    EXPECT_TRUE(fs::exists(path("run") / f)) << f;
  }
  std::istringstream csv(slurp(path("run/loss.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "iter,L_alpha,L_comp,L_lap,L_total");
  int rows = 0;
  while (std::getline(csv, line)) rows += !line.empty();
  EXPECT_EQ(rows, 4);
}

TEST_F(Cli, TrainIsDeterministicAndHonoursSeedOverride) {
  synth("ds");
  const std::string args = "train --data ds --iterations 3 --batch 2 --crop 96 --seed 4 --out ";
  ASSERT_EQ(run(args + "a").code, 0);
  ASSERT_EQ(run(args + "b").code, 0);
  ASSERT_EQ(run(args + "c", "TMF_SEED=11").code, 0);
  EXPECT_EQ(slurp(path("a/loss.csv")), slurp(path("b/loss.csv")));
  EXPECT_EQ(slurp(path("a/final.tmfw")), slurp(path("b/final.tmfw")));
  EXPECT_NE(slurp(path("a/loss.csv")), slurp(path("c/loss.csv")));
}

TEST_F(Cli, ZeroIterationCheckpointIsInitialisation) {
  synth("ds");
  ASSERT_EQ(run("train --data ds --iterations 0 --seed 3 --out run").code, 0);
  const std::string infer = "infer --image ds/composite/0000.png --trimap ds/trimap/0000.png";
  ASSERT_EQ(run(infer + " --seed 3 --out init.png").code, 0);
  ASSERT_EQ(run(infer + " --weights run/final.tmfw --out loaded.png").code, 0);
  EXPECT_EQ(slurp(path("init.png")), slurp(path("loaded.png")));
}

TEST_F(Cli, TrainErrors) {
  EXPECT_EQ(run("train --data missing --out run").code, 1);
  synth("ds");
  EXPECT_EQ(run("train --data ds --batch 0 --out run").code, 2);
  EXPECT_EQ(run("train --data ds --preset nonsense --out run").code, 2);
}

TEST_F(Cli, InferKeepsSizeAndIsStable) {
  synth("ds", 2);
  const Image img = read_image((path("ds") / "composite/0000.png").string()).crop(3, 5, 70, 90);
  const Trimap tri = read_trimap((path("ds") / "trimap/0000.png").string()).crop(3, 5, 70, 90);
  write_image(path("img.png").string(), img, 8);
  write_trimap(path("tri.png").string(), tri);
  ASSERT_EQ(run("infer --image img.png --trimap tri.png --out a.png").code, 0);
  ASSERT_EQ(run("infer --image img.png --trimap tri.png --out b.png").code, 0);
  const RawPng out = read_png_raw(path("a.png").string());
  EXPECT_EQ(out.height, 70);
  EXPECT_EQ(out.width, 90);
  EXPECT_EQ(out.channels, 1);
  EXPECT_EQ(slurp(path("a.png")), slurp(path("b.png")));

  // The prediction is reported as-is in the trimap background: no hard masking.
  bool nonzero_in_background = false;
  for (int y = 0; y < 70; ++y)
    for (int x = 0; x < 90; ++x)
      if (tri.at(y, x) == TrimapLabel::Background && out.samples[y * 90 + x] > 0) nonzero_in_background = true;
  EXPECT_TRUE(nonzero_in_background);
}

TEST_F(Cli, EvalIdenticalDirectoryIsZero) {
  const std::string root = TMF_TEST_DATA_DIR "/eval_fixture";
  const auto r = run("eval --pred " + root + "/gt --gt " + root + "/gt --trimap " + root + "/trimap --out m.json");
  ASSERT_EQ(r.code, 0) << r.output;
  const json m = json::parse(slurp(path("m.json")));
  for (const char* k : {"sad", "mse", "grad", "conn"}) EXPECT_EQ(m["aggregate"][k].get<double>(), 0.0) << k;
}

TEST_F(Cli, EvalMatchesGoldenFixture) {
  const std::string root = TMF_TEST_DATA_DIR "/eval_fixture";
  ASSERT_EQ(run("eval --pred " + root + "/pred --gt " + root + "/gt --trimap " + root + "/trimap --out m.json").code, 0);
  const json m = json::parse(slurp(path("m.json")));
  const json golden = json::parse(slurp(fs::path(TMF_TEST_DATA_DIR) / "eval_golden.json"));
  ASSERT_EQ(m["images"].size(), golden.size());
  for (const auto& rec : m["images"]) {
    const auto& g = golden.at(rec["image_id"].get<std::string>());
    for (const char* k : {"sad", "mse", "grad", "conn"}) {
      const double want = g[k].get<double>();
      EXPECT_NEAR(rec[k].get<double>(), want, 1e-6 * std::max(1.0, std::abs(want))) << rec["image_id"] << " " << k;
    }
  }
}

TEST_F(Cli, EvalMissingPredictionRecordsErrorAndFails) {
  const std::string root = TMF_TEST_DATA_DIR "/eval_fixture";
  fs::create_directories(path("pred"));
  for (const auto& e : fs::directory_iterator(root + "/pred")) {
    if (e.path().filename() != "random_1.png") fs::copy_file(e.path(), path("pred") / e.path().filename());
  }
  const auto r = run("eval --pred pred --gt " + root + "/gt --trimap " + root + "/trimap --out m.json");
  EXPECT_EQ(r.code, 1);
  const json m = json::parse(slurp(path("m.json")));
  ASSERT_EQ(m["errors"].size(), 1u);
  EXPECT_EQ(m["errors"][0]["image_id"], "random_1.png");
  EXPECT_EQ(m["images"].size(), 9u);
}

TEST_F(Cli, CountReportsParityAndDirection) {
  const auto r = run("count --preset tmfnet --height 2048 --width 2048 --out cost.json");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("equal=true"), std::string::npos);
  const json j = json::parse(slurp(path("cost.json")));
  EXPECT_TRUE(j["tmp_ppm_param_equality"].get<bool>());
  EXPECT_LT(j["config"]["total_params"].get<std::uint64_t>(), j["twin"]["total_params"].get<std::uint64_t>());
  EXPECT_LT(j["config"]["total_macs"].get<std::uint64_t>(), j["twin"]["total_macs"].get<std::uint64_t>());
  for (const char* side : {"config", "twin"}) {
    std::uint64_t params = 0, macs = 0;
    for (const auto& row : j[side]["modules"]) {
      params += row["params"].get<std::uint64_t>();
      macs += row["macs"].get<std::uint64_t>();
    }
    EXPECT_EQ(params, j[side]["total_params"].get<std::uint64_t>()) << side;
    EXPECT_EQ(macs, j[side]["total_macs"].get<std::uint64_t>()) << side;
  }
}

TEST_F(Cli, ExportKernelsWritesNineMapsPerGroup) {
  synth("ds", 2);
  const std::string in = " --image ds/composite/0000.png --trimap ds/trimap/0000.png";
  ASSERT_EQ(run("export-kernels --stage F1 --out init" + in).code, 0);
  const json listing = json::parse(slurp(path("init/kernels.json")));
  const std::size_t maps = listing["maps"].size();
  EXPECT_GT(maps, 0u);
  EXPECT_EQ(maps % 9, 0u);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(path("init"))) pngs += e.path().extension() == ".png";
  EXPECT_EQ(pngs, maps);

  ASSERT_EQ(run("train --data ds --iterations 3 --batch 2 --crop 96 --out run").code, 0);
  ASSERT_EQ(run("export-kernels --stage F1 --weights run/final.tmfw --out trained" + in).code, 0);
  bool differs = false;
  for (const auto& m : listing["maps"]) {
    const auto name = m["path"].get<std::string>();
    differs |= slurp(path("init") / name) != slurp(path("trained") / name);
  }
  EXPECT_TRUE(differs);

  EXPECT_EQ(run("export-kernels --stage F4 --out bad" + in).code, 2);
  EXPECT_EQ(run("export-kernels --preset toy_baseline --stage F1 --out bad" + in).code, 2);
}
