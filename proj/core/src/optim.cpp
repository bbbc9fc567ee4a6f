#include "tmf/optim.hpp"

#include <algorithm>
#include <cmath>

namespace tmf {

LrSchedule constant_lr(double lr) {
  return [lr](long) { return lr; };
}

LrSchedule warmup_lr(double lr, long warmup_steps) {
  return [lr, warmup_steps](long step) {
    if (warmup_steps <= 0 || step >= warmup_steps) return lr;
    return lr * static_cast<double>(std::max(1L, step)) / static_cast<double>(warmup_steps);
  };
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options, LrSchedule schedule)
    : params_(std::move(params)), options_(options), schedule_(std::move(schedule)) {
  if (!schedule_) schedule_ = constant_lr(options_.lr);
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

double Adam::current_lr() const { return schedule_(std::max(1L, step_)); }

void Adam::step() {
  ++step_;
  const double lr = schedule_(step_);
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  const auto b1 = static_cast<float>(options_.beta1);
  const auto b2 = static_cast<float>(options_.beta2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto data = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + options_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace tmf
