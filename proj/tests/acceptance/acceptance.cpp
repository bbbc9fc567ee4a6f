#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "tmf/cost.hpp"
#include "tmf/data.hpp"
#include "tmf/gradcheck.hpp"
#include "tmf/matting_ops.hpp"
#include "tmf/metrics.hpp"
#include "tmf/network.hpp"
#include "tmf/ops.hpp"
#include "tmf/training.hpp"
#include "tmf/verify/oracles.hpp"

using namespace tmf;
using json = nlohmann::json;
using test::bitwise_equal;
using test::max_abs_diff;
using test::random_tensor;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto nbp = verify::nbp_oracle(100, 2024);
  const auto fusion = verify::fusion_oracle(100, 2025);
  const double secs = seconds_since(t0);
  return {nbp.passed && fusion.passed && nbp.max_abs_diff <= 1e-5 && fusion.max_abs_diff <= 1e-5 && secs < 60.0,
          fmt("nbp_fast/nbp vs naive max diff %.2e over %d cases, fusion vs loops %.2e over %d cases, %.1f s",
              nbp.max_abs_diff, nbp.trials, fusion.max_abs_diff, fusion.trials, secs)};
}

Outcome gradient_suite() {
  const std::vector<std::string> required{"nbp",
                                          "tmp_forward",
                                          "pixel_shuffle",
                                          "glf_generate_kernels",
                                          "glf_spatial_fusion",
                                          "glf_forward",
                                          "static_fusion",
                                          "ppm_forward",
                                          "alpha_loss",
                                          "composition_loss",
                                          "laplacian_loss",
                                          "total_loss",
                                          "toy_network"};
  for (const auto& name : required) {
    if (!has_gradcheck(name)) return {false, "no gradient check registered for " + name};
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = run_all_gradchecks();
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failures;
  for (const auto& r : results) {
    if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = r.name;
    if (!r.passed) failures += " " + r.name;
  }
  const bool ok = failures.empty() && worst <= 1e-3 && secs < 300.0;
  return {ok, fmt("%zu checks in double precision, worst rel err %.2e (%s), %.1f s%s", results.size(), worst,
                  worst_name.c_str(), secs, failures.empty() ? "" : ("; failed:" + failures).c_str())};
}

Outcome identity_and_masking() {
  Rng rng(77);
  std::vector<std::string> broken;

  // Delta kernels: every group's kernel is 1 at the centre tap.
  for (int groups : {1, 2, 4}) {
    const Tensor x = random_tensor(Shape{2, groups * 3, 9, 11}, rng);
    Tensor k(Shape{2, groups * 9, 9, 11}, 0.0f);
    auto d = k.mutable_data();
    for (int n = 0; n < 2; ++n)
      for (int g = 0; g < groups; ++g)
        for (int i = 0; i < 99; ++i) d[k.index(n, g * 9 + 4, 0, 0) + i] = 1.0f;
    if (!bitwise_equal(GlfBlock<float>::spatial_fusion(x, KernelField<float>{k, groups}), x)) {
      broken.push_back(fmt("delta fusion (N=%d)", groups));
    }
  }

  // Features under a zero mask may be anything.
  const Shape s{2, 3, 17, 15};
  std::vector<float> mv(static_cast<std::size_t>(2) * 17 * 15);
  for (auto& v : mv) v = rng.coin(0.6) ? 1.0f : 0.0f;
  const Tensor mask(Shape{2, 1, 17, 15}, mv);
  const Tensor f = random_tensor(s, rng);
  Tensor g = f.detach();
  auto gd = g.mutable_data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x)
          if (mask(n, 0, y, x) == 0.0f) gd[g.index(n, c, y, x)] = static_cast<float>(rng.uniform(-1e3, 1e3));
  for (int k : {3, 5, 11}) {
    if (!bitwise_equal(nbp(f, mask, k), nbp(g, mask, k)) || !bitwise_equal(nbp_fast(f, mask, k), nbp_fast(g, mask, k))) {
      broken.push_back(fmt("masking invariance (k=%d)", k));
    }
  }

  double cancel = 0.0;
  for (int k : {3, 11, 31}) {
    const Tensor x = random_tensor(Shape{1, 2, 40, 37}, rng);
    const Tensor m = random_tensor(Shape{1, 1, 40, 37}, rng, 0.0, 1.0);
    cancel = std::max(cancel, max_abs_diff(nbp(x, m, k), nbp_sum_pooled(x, m, k)));
  }
  if (cancel > 1e-6) broken.push_back(fmt("divisor cancellation (%.2e)", cancel));

  const Tensor constant(Shape{1, 2, 12, 12}, 0.37f);
  double ones = 0.0, zeros = 0.0;
  for (int k : {3, 5, 11}) {
    for (const Tensor& out : {nbp(constant, Tensor(Shape{1, 1, 12, 12}, 1.0f), k),
                              nbp_fast(constant, Tensor(Shape{1, 1, 12, 12}, 1.0f), k)}) {
      for (float v : out.data()) ones = std::max(ones, std::abs(static_cast<double>(v) - 0.37));
    }
    const Tensor noise = random_tensor(Shape{1, 2, 12, 12}, rng, -5, 5);
    for (const Tensor& out : {nbp(noise, Tensor(Shape{1, 1, 12, 12}, 0.0f), k),
                              nbp_fast(noise, Tensor(Shape{1, 1, 12, 12}, 0.0f), k)}) {
      for (float v : out.data()) zeros = std::max(zeros, std::abs(static_cast<double>(v)));
    }
  }
  if (ones > 1e-4) broken.push_back(fmt("M=1 limit (%.2e)", ones));
  if (zeros != 0.0) broken.push_back(fmt("M=0 limit (%.2e)", zeros));

  const Tensor p = random_tensor(Shape{2, 12, 5, 7}, rng);
  if (!bitwise_equal(pixel_unshuffle(pixel_shuffle(p)), p)) broken.push_back("pixel shuffle round trip");

  std::string detail = fmt("delta fusion exact, masking bitwise, cancellation %.1e, M=1 dev %.1e, M=0 max %.1e, "
                           "shuffle round trip exact",
                           cancel, ones, zeros);
  if (!broken.empty()) {
    detail = "broken:";
    for (const auto& b : broken) detail += " " + b + ";";
  }
  return {broken.empty(), detail};
}

Outcome parameter_parity() {
  std::string detail;
  bool ok = true;
  for (const auto& [label, cfg] : {std::pair{"full-size", ArchConfig::tmfnet()}, std::pair{"toy", ArchConfig::toy_tmfnet()}}) {
    TmpConfig tc = cfg.tmp;
    tc.in_channels = cfg.encoder_channels()[4];
    Rng a(1), b(1);
    const std::size_t tmp = TmpBlock<float>(tc, a).param_count(), ppm = PpmBlock<float>(tc, b).param_count();
    ok &= tmp == ppm;
    const Network<float> ours(cfg, 1), twin(cfg.baseline_twin(), 1);
    const auto ra = count_params(ours), rb = count_params(twin);
    ok &= ra.row("context").params == rb.row("context").params;
    detail += fmt("%s TMP %zu == PPM %zu; ", label, tmp, ppm);
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

Outcome cost_direction() {
  const Network<float> ours(ArchConfig::tmfnet(), 1), base(ArchConfig::baseline(), 1);
  const auto a = count_flops(ours, 2048, 2048), b = count_flops(base, 2048, 2048);
  const double ratio = static_cast<double>(a.total_macs) / static_cast<double>(b.total_macs);
  const bool ok = a.total_params < b.total_params && a.total_macs < b.total_macs && ratio < 0.95 && a.consistent() &&
                  b.consistent();
  return {ok, fmt("params %.2fM < %.2fM, GFLOPs@2048^2 %.0f < %.0f, FLOPs ratio %.3f", a.total_params * 1e-6,
                  b.total_params * 1e-6, a.gflops(), b.gflops(), ratio)};
}

struct LearningOptions {
  int seeds = 3;
  int iterations = 2000;
  int train_samples = 200;
  int heldout_samples = 40;
  int crop = 96;
  int batch = 2;
  std::string report;
};

Outcome learning_signal(const LearningOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double tmf_before = 0, tmf_after = 0, base_after = 0;
  json runs = json::array();
  for (int seed = 1; seed <= o.seeds; ++seed) {
    const auto train_set = make_toy_dataset(o.train_samples, 1000 + seed);
    const auto held_out = make_toy_dataset(o.heldout_samples, 5000 + seed, ToyDataConfig{}, 100000);
    for (const bool ours : {true, false}) {
      Network<float> net(ours ? ArchConfig::toy_tmfnet() : ArchConfig::toy_baseline(), seed);
      const double before = evaluate_sad(net, held_out);
      TrainConfig tc;
      tc.iterations = o.iterations;
      tc.batch_size = o.batch;
      tc.crop_size = o.crop;
      tc.seed = seed;
      const auto result = train(net, train_set, tc);
      const double after = evaluate_sad(net, held_out);
      const double loss_tail = mean_total(result.log, result.log.size() - std::min<std::size_t>(50, result.log.size()),
                                          result.log.size());
      std::fprintf(stderr, "  seed %d %-8s held-out SAD %.4f -> %.4f (ratio %.3f), tail L_total %.4f, %.0f s\n", seed,
                   ours ? "TMP+GLF" : "PPM+STA", before, after, after / before, loss_tail, seconds_since(t0));
      runs.push_back({{"seed", seed}, {"model", ours ? "toy_tmfnet" : "toy_baseline"}, {"sad_before", before},
                      {"sad_after", after}, {"tail_total_loss", loss_tail}});
      if (ours) {
        tmf_before += before / o.seeds;
        tmf_after += after / o.seeds;
      } else {
        base_after += after / o.seeds;
      }
    }
  }
  const double secs = seconds_since(t0);
  const double ratio = tmf_after / tmf_before;
  const bool ok = ratio <= 0.6 && tmf_after <= base_after && secs < 1800.0;
  if (!o.report.empty()) {
    std::ofstream(o.report) << json{{"runs", runs}, {"tmf_ratio", ratio}, {"tmf_sad", tmf_after},
                                    {"baseline_sad", base_after}, {"seconds", secs}}
                                   .dump(2)
                            << '\n';
  }
  return {ok, fmt("mean over %d seeds: TMP+GLF SAD %.4f -> %.4f (ratio %.3f <= 0.6), PPM+STATIC %.4f, %d iters, "
                  "%.0f s",
                  o.seeds, tmf_before, tmf_after, ratio, base_after, o.iterations, secs)};
}

Outcome metric_fixtures() {
  Rng rng(5);
  const int h = 16, w = 16;
  AlphaMatte gt(1, h, w);
  for (auto& v : gt.data()) v = static_cast<float>(rng.uniform());
  Trimap tri(h, w, TrimapLabel::Unknown);
  for (int x = 0; x < w; ++x) tri.at(0, x) = TrimapLabel::Background;
  const auto self = evaluate_matte("self", gt, gt, tri);
  const bool zeros = self.sad == 0 && self.mse == 0 && self.grad == 0 && self.conn == 0;

  AlphaMatte bin(1, h, w), inv(1, h, w);
  for (std::size_t i = 0; i < bin.data().size(); ++i) {
    bin.data()[i] = rng.coin(0.5) ? 1.0f : 0.0f;
    inv.data()[i] = 1.0f - bin.data()[i];
  }
  const RegionMask region = unknown_region(tri);
  const double u = static_cast<double>(tri.count(TrimapLabel::Unknown));
  const double sad = metric_sad(inv, bin, region), mse = metric_mse(inv, bin, region);
  const bool inverted = sad == u / 1000.0 && mse == 1000.0;

  const auto golden = verify::metrics_oracle(TMF_TEST_DATA_DIR "/metrics_fixture.json",
                                             TMF_TEST_DATA_DIR "/metrics_golden.json", 1e-6);
  return {zeros && inverted && golden.passed,
          fmt("pred==gt all zero: %s; inverted binary SAD %.3f (|U|/1000 = %.3f) MSE %.1f; golden %d cases max diff %.1e",
              zeros ? "yes" : "no", sad, u / 1000.0, mse, golden.trials, golden.max_abs_diff)};
}

Outcome composition_round_trips() {
  const auto samples = make_toy_dataset(12, 99);
  double residual = 0.0;
  bool exact = true;
  for (const auto& s : samples) {
    residual = std::max(residual, composition_residual(s));
    const int h = s.alpha.height(), w = s.alpha.width();
    exact &= composite(s.foreground, s.background, AlphaMatte(1, h, w, 1.0f)) == s.foreground;
    exact &= composite(s.foreground, s.background, AlphaMatte(1, h, w, 0.0f)) == s.background;
  }
  return {exact && residual <= 1e-6,
          fmt("alpha in {0,1} composites bitwise equal to F/B: %s; max residual over %zu samples %.1e",
              exact ? "yes" : "no", samples.size(), residual)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria, one line per criterion"};
  LearningOptions learning;
  bool skip_learning = false;
  app.add_flag("--skip-learning", skip_learning, "Report the learning-signal criterion as skipped");
  app.add_option("--seeds", learning.seeds)->check(CLI::PositiveNumber);
  app.add_option("--iterations", learning.iterations)->check(CLI::PositiveNumber);
  app.add_option("--learning-report", learning.report, "JSON file with per-run SAD values");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle-equivalence", oracle_equivalence},
      {"gradient-suite", gradient_suite},
      {"identity-masking-invariants", identity_and_masking},
      {"parameter-parity", parameter_parity},
      {"cost-direction", cost_direction},
      {"learning-signal", [&] { return learning_signal(learning); }},
      {"metric-fixtures", metric_fixtures},
      {"composition-round-trips", composition_round_trips},
  };

  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (skip_learning && name == "learning-signal") {
      std::printf("SKIP %-28s not run (--skip-learning)\n", name.c_str());
      continue;
    }
    Outcome r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    failed += !r.passed;
    std::printf("%s %-28s %s\n", r.passed ? "PASS" : "FAIL", name.c_str(), r.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
