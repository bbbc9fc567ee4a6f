#include "tmf/training.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "tmf/metrics.hpp"
#include "tmf/optim.hpp"
#include "tmf/weights_io.hpp"

namespace tmf {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (warmup_steps < 0) throw std::invalid_argument("warmup steps must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("iterations must be non-negative");
  if (crop_size < 16 || crop_size % 16 != 0) throw std::invalid_argument("crop size must be a positive multiple of 16");
  if (k_min != 0 && (k_min < 1 || k_max < k_min || k_max > 30)) {
    throw std::invalid_argument("trimap kernel range must satisfy 1 <= k_min <= k_max <= 30");
  }
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint interval must be non-negative");
  weights.validate();
}

Batch draw_batch(const std::vector<MattingSample>& samples, const TrainConfig& config, Rng& rng) {
  std::vector<Tensor> img, tri, alpha, fg, bg;
  for (int b = 0; b < config.batch_size; ++b) {
    MattingSample s = samples[rng.uniform_int(0, static_cast<int>(samples.size()) - 1)];
    if (config.k_min > 0) {
      const int kd = rng.uniform_int(config.k_min, config.k_max);
      const int ke = rng.uniform_int(config.k_min, config.k_max);
      s.trimap = gen_trimap(s.alpha, kd, ke);
    }
    s = crop_unknown_centered(s, config.crop_size, rng);
    if (config.flip && rng.coin()) s = flip_sample(s);
    img.push_back(to_tensor(s.composite));
    tri.push_back(one_hot_trimap(s.trimap));
    alpha.push_back(to_tensor(s.alpha));
    fg.push_back(to_tensor(s.foreground));
    bg.push_back(to_tensor(s.background));
  }
  return Batch{stack_batch(img), stack_batch(tri), stack_batch(alpha), stack_batch(fg), stack_batch(bg)};
}

TrainResult train(Network<float>& net, const std::vector<MattingSample>& samples, const TrainConfig& config,
                  const std::function<void(const LossRow&)>& on_step) {
  config.validate();
  if (samples.empty()) throw std::invalid_argument("training set is empty");
  namespace fs = std::filesystem;
  if (!config.checkpoint_dir.empty()) fs::create_directories(config.checkpoint_dir);
  auto checkpoint = [&](const std::string& name) {
    if (!config.checkpoint_dir.empty()) save_weights(net, (fs::path(config.checkpoint_dir) / name).string());
  };

  Rng rng(config.seed);
  Adam adam(net.trainable_parameters(), AdamOptions{config.lr},
            config.warmup_steps > 0 ? warmup_lr(config.lr, config.warmup_steps) : constant_lr(config.lr));
  TrainResult result;
  net.set_training(true);
  for (int it = 1; it <= config.iterations; ++it) {
    const Batch batch = draw_batch(samples, config, rng);
    Tape tape;
    LossRow row;
    {
      TapeScope scope(tape);
      const Tensor pred = net.forward(batch.image, batch.trimap);
      const EvalRegion region = EvalRegion::from_one_hot(batch.trimap);
      const auto loss = total_loss(pred, batch.alpha, batch.foreground, batch.background, batch.image, region,
                                   config.weights);
      tape.backward(loss.total);
      row = LossRow{it, loss.alpha, loss.composition, loss.laplacian, static_cast<double>(loss.total.item())};
    }
    adam.step();
    adam.zero_grad();
    result.log.push_back(row);
    if (on_step) on_step(row);
    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%06d.tmfw", it);
      checkpoint(name);
    }
  }
  net.set_training(false);
  checkpoint("final.tmfw");
  if (!config.loss_log.empty()) write_loss_csv(config.loss_log, result.log);
  return result;
}

double evaluate_sad(Network<float>& net, const std::vector<MattingSample>& samples) {
  if (samples.empty()) return 0.0;
  const bool was_training = net.training();
  net.set_training(false);
  double total = 0.0;
  for (const auto& s : samples) {
    const PaddedInput padded = pad_to_multiple(s.composite, s.trimap);
    const AlphaMatte pred = unpad(predict(net, padded.image, padded.trimap), padded);
    total += metric_sad(pred, s.alpha, unknown_region(s.trimap));
  }
  net.set_training(was_training);
  return total / static_cast<double>(samples.size());
}

double mean_total(const std::vector<LossRow>& log, std::size_t begin, std::size_t end) {
  end = std::min(end, log.size());
  if (begin >= end) return 0.0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += log[i].total;
  return s / static_cast<double>(end - begin);
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss log '" + path + "'");
  out << "iter,L_alpha,L_comp,L_lap,L_total\n";
  char line[160];
  for (const auto& r : log) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", r.iteration, r.alpha, r.composition, r.laplacian,
                  r.total);
    out << line;
  }
}

}  // namespace tmf
