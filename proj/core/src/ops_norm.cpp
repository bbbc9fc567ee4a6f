#include <cmath>

#include "op_support.hpp"
#include "tmf/ops.hpp"

namespace tmf {

template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training, T momentum,
                          T eps) {
  const Shape s = x.shape();
  const auto channels = static_cast<std::size_t>(s.c);
  if (gamma.numel() != channels || beta.numel() != channels || running_mean.numel() != channels ||
      running_var.numel() != channels) {
    throw ShapeError("batch_norm: parameter length does not match channels of " + s.str());
  }
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  std::vector<T> mean(channels), inv_std(channels);
  const T* xd = x.data().data();

  if (training) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xd + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double m = acc / static_cast<double>(count);
      double var = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xd + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - m) * (p[i] - m);
      }
      var /= static_cast<double>(count);
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      auto rm = running_mean.mutable_data();
      auto rv = running_var.mutable_data();
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * m);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean.data()[c];
      inv_std[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
    }
  }

  BasicTensor<T> out(s);
  T* od = out.mutable_data().data();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * plane;
      const T a = gamma.data()[c] * inv_std[c];
      const T b = beta.data()[c] - a * mean[c];
      for (std::size_t i = 0; i < plane; ++i) od[off + i] = a * xd[off + i] + b;
    }
  }

  if (detail::should_record<T>({&x, &gamma, &beta})) {
    detail::attach(out, [xn = x.node(), gn = gamma.node(), bn = beta.node(), on = out.node(), mean = std::move(mean),
                         inv_std = std::move(inv_std), s, training]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      const std::size_t channels = static_cast<std::size_t>(s.c);
      const std::size_t plane = s.plane();
      const T count = static_cast<T>(static_cast<std::size_t>(s.n) * plane);
      const T* xd = xn->data.data();
      for (std::size_t c = 0; c < channels; ++c) {
        T sum_g = T(0), sum_gx = T(0);
        for (int n = 0; n < s.n; ++n) {
          const std::size_t off = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const T xhat = (xd[off + i] - mean[c]) * inv_std[c];
            sum_g += (*g)[off + i];
            sum_gx += (*g)[off + i] * xhat;
          }
        }
        if (gn->requires_grad) gn->grad_buffer()[c] += sum_gx;
        if (bn->requires_grad) bn->grad_buffer()[c] += sum_g;
        if (!xn->requires_grad) continue;
        const T gam = gn->data[c];
        auto& gx = xn->grad_buffer();
        for (int n = 0; n < s.n; ++n) {
          const std::size_t off = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            if (training) {
              const T xhat = (xd[off + i] - mean[c]) * inv_std[c];
              gx[off + i] += gam * inv_std[c] * ((*g)[off + i] - sum_g / count - xhat * sum_gx / count);
            } else {
              gx[off + i] += gam * inv_std[c] * (*g)[off + i];
            }
          }
        }
      }
    });
  }
  return out;
}

template BasicTensor<float> batch_norm<float>(const BasicTensor<float>&, const BasicTensor<float>&,
                                              const BasicTensor<float>&, BasicTensor<float>&, BasicTensor<float>&,
                                              bool, float, float);
template BasicTensor<double> batch_norm<double>(const BasicTensor<double>&, const BasicTensor<double>&,
                                                const BasicTensor<double>&, BasicTensor<double>&,
                                                BasicTensor<double>&, bool, double, double);

}  // namespace tmf
