#pragma once

#include <functional>
#include <vector>

#include "tmf/tensor.hpp"

namespace tmf {

struct AdamOptions {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Learning rate as a function of the 1-based step index.
using LrSchedule = std::function<double(long step)>;

LrSchedule constant_lr(double lr);
// Linear ramp from lr/warmup_steps up to lr over the first warmup_steps steps.
LrSchedule warmup_lr(double lr, long warmup_steps);

// Canonical bias-corrected Adam over a fixed parameter list. Parameters without
// an accumulated gradient are skipped for that step.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options, LrSchedule schedule = {});

  void step();
  void zero_grad();
  long steps() const { return step_; }
  double current_lr() const;

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  AdamOptions options_;
  LrSchedule schedule_;
  long step_ = 0;
};

}  // namespace tmf
