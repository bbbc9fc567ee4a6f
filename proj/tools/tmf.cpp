#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "tmf/cost.hpp"
#include "tmf/data.hpp"
#include "tmf/gradcheck.hpp"
#include "tmf/image_io.hpp"
#include "tmf/metrics.hpp"
#include "tmf/network.hpp"
#include "tmf/training.hpp"
#include "tmf/verify/oracles.hpp"
#include "tmf/weights_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace tmf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelOptions {
  std::string config_path;
  std::string preset = "toy_tmfnet";

  ArchConfig load() const {
    try {
      if (!config_path.empty()) return ArchConfig::load(config_path);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (preset == "tmfnet") return ArchConfig::tmfnet();
    if (preset == "baseline") return ArchConfig::baseline();
    if (preset == "toy_tmfnet") return ArchConfig::toy_tmfnet();
    if (preset == "toy_baseline") return ArchConfig::toy_baseline();
    throw UsageError("unknown preset '" + preset + "'");
  }
};

void add_model_options(CLI::App* cmd, ModelOptions& m) {
  cmd->add_option("--config", m.config_path, "Architecture config (JSON)");
  cmd->add_option("--preset", m.preset, "Built-in architecture when --config is absent")
      ->check(CLI::IsMember({"tmfnet", "baseline", "toy_tmfnet", "toy_baseline"}));
}

std::uint64_t resolve_seed(std::uint64_t seed) {
  if (const char* env = std::getenv("TMF_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("TMF_SEED is not an unsigned integer: ") + env);
    }
  }
  return seed;
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text << '\n';
}

Network<float> build_network(const ModelOptions& model, const std::string& weights, std::uint64_t seed) {
  const ArchConfig cfg = model.load();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Network<float> net(cfg, seed);
  if (!weights.empty()) load_weights(net, weights);
  return net;
}

// --- verification ---------------------------------------------------------

int cmd_gradcheck(const std::string& scope, const std::string& report_path) {
  std::vector<std::string> names;
  if (scope == "all") {
    names = gradcheck_names();
  } else if (has_gradcheck(scope)) {
    names = {scope};
  } else {
    throw UsageError("unknown gradcheck scope '" + scope + "'");
  }
  json rows = json::array();
  bool ok = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& name : names) {
    const GradCheckResult r = run_gradcheck(name);
    ok &= r.passed;
    std::printf("%-32s max_rel_err %.3e  probes %6zu  %s\n", r.name.c_str(), r.max_rel_error, r.probes,
                r.passed ? "PASS" : "FAIL");
    std::fflush(stdout);
    rows.push_back({{"op", r.name}, {"max_rel_error", r.max_rel_error}, {"probes", r.probes}, {"passed", r.passed},
                    {"worst", r.worst}});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%zu checks, %s, %.1f s\n", names.size(), ok ? "all passed" : "FAILURES", secs);
  if (!report_path.empty()) write_text(report_path, json{{"checks", rows}, {"passed", ok}, {"seconds", secs}}.dump(2));
  return ok ? kExitOk : kExitFailure;
}

int cmd_oracle(const std::string& scope, int trials, std::uint64_t seed, const std::string& fixture,
               const std::string& golden) {
  verify::OracleReport r;
  if (scope == "nbp") {
    r = verify::nbp_oracle(trials, seed);
  } else if (scope == "fusion") {
    r = verify::fusion_oracle(trials, seed);
  } else {
    r = verify::metrics_oracle(fixture, golden);
  }
  std::printf("oracle %s: %d cases, max abs diff %.3e (tol %.0e), %.2f s  %s\n", r.scope.c_str(), r.trials,
              r.max_abs_diff, r.tolerance, r.seconds, r.passed ? "PASS" : "FAIL");
  if (!r.detail.empty()) std::printf("  worst case: %s\n", r.detail.c_str());
  return r.passed ? kExitOk : kExitFailure;
}

// --- data -----------------------------------------------------------------

int cmd_synth(int n, int test_count, std::uint64_t seed, const std::string& out, int size, int threads) {
  if (n < 1) throw UsageError("--n must be >= 1");
  if (test_count < 0 || test_count > n) throw UsageError("--test must be within [0, n]");
  ToyDataConfig cfg;
  cfg.size = size;
  std::vector<MattingSample> samples(n);
  threads = std::max(1, std::min(threads, n));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) samples[i] = make_toy_sample(seed, i, cfg);
    });
  }
  for (auto& th : pool) th.join();
  std::vector<std::string> splits(n, "train");
  for (int i = n - test_count; i < n; ++i) splits[i] = "test";
  const auto manifest = write_dataset(out, samples, seed, splits);
  std::printf("wrote %zu samples (%d test) to %s\n", manifest.entries.size(), test_count, out.c_str());
  return kExitOk;
}

int cmd_trimap(const std::string& alpha_path, int k_dilate, int k_erode, const std::string& out) {
  if (k_dilate < 1 || k_erode < 1) throw UsageError("kernel sizes must be >= 1");
  const AlphaMatte alpha = read_image(alpha_path);
  if (alpha.channels() != 1) throw UsageError("alpha must be a grayscale image");
  write_trimap(out, gen_trimap(alpha, k_dilate, k_erode));
  return kExitOk;
}

int cmd_composite(const std::string& fg, const std::string& bg, const std::string& alpha, const std::string& out) {
  const Image f = read_image(fg), b = read_image(bg);
  const AlphaMatte a = read_image(alpha);
  if (a.channels() != 1) throw UsageError("alpha must be a grayscale image");
  if (!f.same_size(b) || !f.same_size(a) || f.channels() != b.channels()) {
    throw UsageError("foreground, background and alpha must share one size");
  }
  write_image(out, composite(f, b, a), read_png_raw(fg).bit_depth);
  return kExitOk;
}

// --- training / inference -------------------------------------------------

int cmd_train(const ModelOptions& model, const std::string& data_dir, const std::string& split, TrainConfig tc,
              const std::string& init_weights, const std::string& out_dir) {
  tc.seed = resolve_seed(tc.seed);
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!fs::exists(fs::path(data_dir) / "manifest.json")) {
    std::fprintf(stderr, "error: no dataset manifest under '%s'\n", data_dir.c_str());
    return kExitFailure;
  }
  const auto samples = load_dataset(data_dir, split);
  if (samples.empty()) {
    std::fprintf(stderr, "error: dataset '%s' has no samples in split '%s'\n", data_dir.c_str(), split.c_str());
    return kExitFailure;
  }
  Network<float> net = build_network(model, init_weights, tc.seed);
  fs::create_directories(out_dir);
  tc.checkpoint_dir = out_dir;
  if (tc.loss_log.empty()) tc.loss_log = (fs::path(out_dir) / "loss.csv").string();
  net.config().save((fs::path(out_dir) / "config.json").string());
  std::printf("training %zu params on %zu samples, %d iterations, seed %llu\n", net.param_count(), samples.size(),
              tc.iterations, static_cast<unsigned long long>(tc.seed));
  const int every = std::max(1, tc.iterations / 20);
  const auto result = train(net, samples, tc, [&](const LossRow& r) {
    if (r.iteration % every == 0) {
      std::printf("iter %6d  L_alpha %.5f  L_comp %.5f  L_lap %.5f  L_total %.5f\n", r.iteration, r.alpha,
                  r.composition, r.laplacian, r.total);
      std::fflush(stdout);
    }
  });
  std::printf("done: %zu iterations, weights in %s\n", result.log.size(), out_dir.c_str());
  return kExitOk;
}

Tensor padded_forward(const Network<float>& net, const Image& image, const Trimap& trimap, PaddedInput& padded,
                      NetworkTrace<float>* trace) {
  if (image.channels() != 3) throw UsageError("image must be RGB");
  if (image.height() != trimap.height || image.width() != trimap.width) {
    throw UsageError("image and trimap differ in size");
  }
  padded = pad_to_multiple(image, trimap, 16);
  NoGradGuard<float> no_grad;
  return net.forward(to_tensor(padded.image), one_hot_trimap(padded.trimap), trace);
}

int cmd_infer(const ModelOptions& model, const std::string& weights, std::uint64_t seed, const std::string& image,
              const std::string& trimap, const std::string& out) {
  const Network<float> net = build_network(model, weights, resolve_seed(seed));
  PaddedInput padded;
  const Tensor alpha = padded_forward(net, read_image(image), read_trimap(trimap), padded, nullptr);
  if (const auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_image(out, unpad(to_image(alpha), padded), 16);
  return kExitOk;
}

int cmd_export_kernels(const ModelOptions& model, const std::string& weights, std::uint64_t seed,
                       const std::string& image, const std::string& trimap, const std::string& stage,
                       const std::string& out) {
  const auto it = std::find(kStageNames.begin(), kStageNames.end(), stage);
  if (it == kStageNames.end()) throw UsageError("invalid stage '" + stage + "' (expected F1, F2 or F3)");
  const int s = static_cast<int>(it - kStageNames.begin());
  const Network<float> net = build_network(model, weights, resolve_seed(seed));
  if (net.config().stages[s].kind != FusionKind::Glf) throw UsageError("stage " + stage + " is not a GLF stage");
  PaddedInput padded;
  NetworkTrace<float> trace;
  (void)padded_forward(net, read_image(image), read_trimap(trimap), padded, &trace);
  const auto files = export_kernel_maps(trace.kernels[s], out);
  json listing = json::array();
  for (const auto& f : files) {
    listing.push_back({{"path", fs::path(f.path).filename().string()}, {"group", f.group}, {"u", f.u}, {"v", f.v},
                       {"min", f.min}, {"max", f.max}});
  }
  write_text((fs::path(out) / "kernels.json").string(), json{{"stage", stage}, {"maps", listing}}.dump(2));
  std::printf("wrote %zu kernel maps (%d groups) to %s\n", files.size(), trace.kernels[s].groups, out.c_str());
  return kExitOk;
}

// --- evaluation / accounting ---------------------------------------------

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& trimap_dir,
             const std::string& out) {
  if (!fs::is_directory(gt_dir)) throw UsageError("ground-truth directory '" + gt_dir + "' does not exist");
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<MetricRecord> records;
  json errors = json::array();
  for (const auto& id : ids) {
    try {
      const fs::path pred = fs::path(pred_dir) / id, tri = fs::path(trimap_dir) / id;
      if (!fs::exists(pred)) throw std::runtime_error("missing prediction " + pred.string());
      if (!fs::exists(tri)) throw std::runtime_error("missing trimap " + tri.string());
      const AlphaMatte p = read_image(pred.string()), g = read_image((fs::path(gt_dir) / id).string());
      const Trimap t = read_trimap(tri.string());
      if (!p.same_size(g) || g.height() != t.height || g.width() != t.width || p.channels() != 1 || g.channels() != 1) {
        throw std::runtime_error("size or channel mismatch for " + id);
      }
      records.push_back(evaluate_matte(id, p, g, t));
    } catch (const std::exception& e) {
      errors.push_back({{"image_id", id}, {"error", e.what()}});
    }
  }
  json report = json::parse(metrics_to_json(records));
  report["errors"] = errors;
  const std::string text = report.dump(2);
  if (out.empty()) {
    std::cout << text << '\n';
  } else {
    write_text(out, text);
  }
  const auto agg = aggregate(records);
  std::fprintf(stderr, "%zu images, %zu errors; mean SAD %.4f MSE %.4f Grad %.4f Conn %.4f\n", records.size(),
               errors.size(), agg.sad, agg.mse, agg.grad, agg.conn);
  return errors.empty() && !ids.empty() ? kExitOk : kExitFailure;
}

int cmd_count(const ModelOptions& model, int h, int w, const std::string& out) {
  if (h < 16 || w < 16 || h % 16 || w % 16) throw UsageError("--height/--width must be positive multiples of 16");
  ArchConfig cfg = model.load();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  // Both sides of the comparison: if the config uses TMP its twin uses PPM, and vice versa.
  ArchConfig twin = cfg.baseline_twin();
  if (cfg.context == ContextKind::Ppm) twin = cfg.encoder == EncoderKind::Toy ? ArchConfig::toy_tmfnet() : ArchConfig::tmfnet(cfg.encoder);
  const Network<float> a(cfg, 1), b(twin, 1);
  const CostReport ra = count_flops(a, h, w), rb = count_flops(b, h, w);
  const auto& tmp_side = cfg.context == ContextKind::Tmp ? ra : rb;
  const auto& ppm_side = cfg.context == ContextKind::Tmp ? rb : ra;
  const bool equal = tmp_side.row("context").params == ppm_side.row("context").params;
  const double flops_ratio = static_cast<double>(ra.total_macs) / static_cast<double>(rb.total_macs);
  const double param_ratio = static_cast<double>(ra.total_params) / static_cast<double>(rb.total_params);

  std::printf("%-10s %14s %14s\n", "module", "params", "GFLOPs");
  for (const auto* r : {&ra, &rb}) {
    std::printf("-- %s\n", r == &ra ? "config" : "twin");
    for (const auto& row : r->rows) {
      std::printf("%-10s %14llu %14.3f\n", row.module.c_str(), static_cast<unsigned long long>(row.params),
                  row.macs * 1e-9);
    }
    std::printf("%-10s %14llu %14.3f\n", "total", static_cast<unsigned long long>(r->total_params), r->gflops());
  }
  std::printf("context params TMP=%llu PPM=%llu equal=%s\n",
              static_cast<unsigned long long>(tmp_side.row("context").params),
              static_cast<unsigned long long>(ppm_side.row("context").params), equal ? "true" : "false");
  std::printf("params ratio %.4f, FLOPs ratio %.4f at %dx%d\n", param_ratio, flops_ratio, h, w);

  const json report{{"config", json::parse(ra.to_json())},
                    {"twin", json::parse(rb.to_json())},
                    {"tmp_ppm_param_equality", equal},
                    {"params_ratio", param_ratio},
                    {"flops_ratio", flops_ratio}};
  if (!out.empty()) write_text(out, report.dump(2));
  return equal ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trimap-guided matting: verification, training, inference and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tmf 0.1.0");

  std::string scope = "all", report_path;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--scope", scope, "'all' or a registered op name");
  gradcheck->add_option("--report", report_path, "Write a JSON report");
  auto* list = app.add_subcommand("list-gradchecks", "Print registered gradient checks");

  std::string oracle_scope = "nbp", fixture = TMF_DEFAULT_DATA_DIR "/metrics_fixture.json",
              golden = TMF_DEFAULT_DATA_DIR "/metrics_golden.json";
  int trials = 100;
  std::uint64_t seed = 1;
  auto* oracle = app.add_subcommand("oracle", "Fast paths against reference implementations");
  oracle->add_option("--scope", oracle_scope)->check(CLI::IsMember({"nbp", "fusion", "metrics"}));
  oracle->add_option("--trials", trials)->check(CLI::PositiveNumber);
  oracle->add_option("--seed", seed);
  oracle->add_option("--fixture", fixture);
  oracle->add_option("--golden", golden);

  int n = 0, test_count = 0, size = 128, threads = 1;
  std::string out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic toy dataset");
  synth->add_option("--n", n)->required();
  synth->add_option("--test", test_count, "Number of trailing samples tagged as the test split");
  synth->add_option("--seed", seed);
  synth->add_option("--size", size)->check(CLI::Range(32, 4096));
  synth->add_option("--threads", threads)->check(CLI::PositiveNumber);
  synth->add_option("--out", out)->required();

  std::string alpha_path;
  int k_dilate = 10, k_erode = 10;
  auto* trimap = app.add_subcommand("trimap", "Trimap from an alpha matte by dilation/erosion");
  trimap->add_option("--alpha", alpha_path)->required()->check(CLI::ExistingFile);
  trimap->add_option("--k-dilate", k_dilate);
  trimap->add_option("--k-erode", k_erode);
  trimap->add_option("--out", out)->required();

  std::string fg, bg;
  auto* comp = app.add_subcommand("composite", "alpha * F + (1 - alpha) * B");
  comp->add_option("--fg", fg)->required()->check(CLI::ExistingFile);
  comp->add_option("--bg", bg)->required()->check(CLI::ExistingFile);
  comp->add_option("--alpha", alpha_path)->required()->check(CLI::ExistingFile);
  comp->add_option("--out", out)->required();

  ModelOptions model;
  TrainConfig tc;
  std::string data_dir, split = "train", weights;
  auto* trn = app.add_subcommand("train", "Train on a synthetic dataset");
  add_model_options(trn, model);
  trn->add_option("--data", data_dir)->required();
  trn->add_option("--split", split, "Manifest split to train on ('' for all)");
  trn->add_option("--iterations", tc.iterations);
  trn->add_option("--batch", tc.batch_size);
  trn->add_option("--crop", tc.crop_size);
  trn->add_option("--lr", tc.lr);
  trn->add_option("--warmup", tc.warmup_steps);
  trn->add_option("--k-min", tc.k_min);
  trn->add_option("--k-max", tc.k_max);
  trn->add_option("--seed", tc.seed);
  trn->add_option("--checkpoint-every", tc.checkpoint_every);
  trn->add_option("--loss-log", tc.loss_log);
  trn->add_option("--init", weights, "Start from these weights");
  trn->add_flag("!--no-flip", tc.flip, "Disable horizontal flips");
  trn->add_option("--out", out)->required();

  std::string image, trimap_path;
  auto* infer = app.add_subcommand("infer", "Predict an alpha matte");
  add_model_options(infer, model);
  infer->add_option("--weights", weights, "Weight file (seeded initialisation when absent)");
  infer->add_option("--seed", seed);
  infer->add_option("--image", image)->required()->check(CLI::ExistingFile);
  infer->add_option("--trimap", trimap_path)->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out)->required();

  std::string pred_dir, gt_dir, trimap_dir;
  auto* eval = app.add_subcommand("eval", "SAD / MSE / Grad / Conn over a directory of predictions");
  eval->add_option("--pred", pred_dir)->required();
  eval->add_option("--gt", gt_dir)->required();
  eval->add_option("--trimap", trimap_dir)->required();
  eval->add_option("--out", out, "JSON report path (stdout when absent)");

  int height = 2048, width = 2048;
  auto* count = app.add_subcommand("count", "Parameter and FLOP accounting against the baseline twin");
  add_model_options(count, model);
  count->add_option("--height", height);
  count->add_option("--width", width);
  count->add_option("--out", out);

  std::string stage = "F1";
  auto* kernels = app.add_subcommand("export-kernels", "Write GLF kernel maps as grayscale PNGs");
  add_model_options(kernels, model);
  kernels->add_option("--weights", weights);
  kernels->add_option("--seed", seed);
  kernels->add_option("--image", image)->required()->check(CLI::ExistingFile);
  kernels->add_option("--trimap", trimap_path)->required()->check(CLI::ExistingFile);
  kernels->add_option("--stage", stage);
  kernels->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gradcheck) return cmd_gradcheck(scope, report_path);
    if (*list) {
      for (const auto& name : gradcheck_names()) std::printf("%s\n", name.c_str());
      return kExitOk;
    }
    if (*oracle) return cmd_oracle(oracle_scope, trials, resolve_seed(seed), fixture, golden);
    if (*synth) return cmd_synth(n, test_count, resolve_seed(seed), out, size, threads);
    if (*trimap) return cmd_trimap(alpha_path, k_dilate, k_erode, out);
    if (*comp) return cmd_composite(fg, bg, alpha_path, out);
    if (*trn) return cmd_train(model, data_dir, split, tc, weights, out);
    if (*infer) return cmd_infer(model, weights, seed, image, trimap_path, out);
    if (*eval) return cmd_eval(pred_dir, gt_dir, trimap_dir, out);
    if (*count) return cmd_count(model, height, width, out);
    if (*kernels) return cmd_export_kernels(model, weights, seed, image, trimap_path, stage, out);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
