#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tmf/data.hpp"
#include "tmf/losses.hpp"
#include "tmf/network.hpp"

namespace tmf {

struct TrainConfig {
  double lr = 0.01;
  long warmup_steps = 100;
  int batch_size = 4;
  int iterations = 500;
  int crop_size = 64;
  // Trimaps are regenerated per draw with kernels from [k_min, k_max]; 0 keeps the stored trimap.
  int k_min = 3;
  int k_max = 15;
  bool flip = true;
  std::uint64_t seed = 1;
  LossWeights weights;
  int checkpoint_every = 0;  // 0 disables intermediate checkpoints
  std::string checkpoint_dir;
  std::string loss_log;  // CSV path, empty disables

  void validate() const;
};

struct LossRow {
  int iteration = 0;
  double alpha = 0.0;
  double composition = 0.0;
  double laplacian = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRow> log;
};

// Draws a batch of augmented crops: (image, one-hot trimap, alpha, fg, bg).
struct Batch {
  Tensor image, trimap, alpha, foreground, background;
};
Batch draw_batch(const std::vector<MattingSample>& samples, const TrainConfig& config, Rng& rng);

// Adam on the weighted alpha + composition + Laplacian loss. Deterministic given config.seed. Writes
// checkpoint_dir/iter_NNNNNN.tmfw every checkpoint_every iterations and
// checkpoint_dir/final.tmfw at the end when checkpoint_dir is set.
TrainResult train(Network<float>& net, const std::vector<MattingSample>& samples, const TrainConfig& config,
                  const std::function<void(const LossRow&)>& on_step = {});

// Mean over samples of the unknown-region SAD of the eval-mode prediction on
// the full (16-aligned after padding) image.
double evaluate_sad(Network<float>& net, const std::vector<MattingSample>& samples);

// Mean of rows [begin, end) of the log's total column.
double mean_total(const std::vector<LossRow>& log, std::size_t begin, std::size_t end);

void write_loss_csv(const std::string& path, const std::vector<LossRow>& log);

}  // namespace tmf
