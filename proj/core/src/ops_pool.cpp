#include <algorithm>
#include <limits>
#include <type_traits>

#include "op_support.hpp"
#include "tmf/ops.hpp"

namespace tmf {
namespace {

void check_pool_kernel(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("pooling kernel must be odd and >= 1, got " + std::to_string(kernel));
  }
}

// Direct zero-padded window sum over every plane.
template <typename T>
void window_sum_direct(const T* src, T* dst, std::size_t planes, int h, int w, int r, T divisor) {
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src + p * h * w;
    T* d = dst + p * h * w;
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - r);
      const int y1 = std::min(h - 1, y + r);
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - r);
        const int x1 = std::min(w - 1, x + r);
        T acc = T(0);
        for (int yy = y0; yy <= y1; ++yy) {
          for (int xx = x0; xx <= x1; ++xx) acc += s[yy * w + xx];
        }
        d[y * w + x] = acc / divisor;
      }
    }
  }
}

// Same result through a summed-area table. float accumulates in double and
// double in long double, so corner differences keep the precision of T.
template <typename T>
void window_sum_sat(const T* src, T* dst, std::size_t planes, int h, int w, int r, T divisor) {
  using Acc = std::conditional_t<std::is_same_v<T, double>, long double, double>;
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<Acc> table((static_cast<std::size_t>(h) + 1) * stride);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src + p * h * w;
    T* d = dst + p * h * w;
    std::fill(table.begin(), table.begin() + stride, Acc(0));
    for (int y = 0; y < h; ++y) {
      Acc row = 0;
      Acc* cur = table.data() + (y + 1) * stride;
      const Acc* prev = table.data() + y * stride;
      cur[0] = 0;
      for (int x = 0; x < w; ++x) {
        row += static_cast<Acc>(s[y * w + x]);
        cur[x + 1] = prev[x + 1] + row;
      }
    }
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y - r);
      const int y1 = std::min(h, y + r + 1);
      const Acc* top = table.data() + y0 * stride;
      const Acc* bottom = table.data() + y1 * stride;
      for (int x = 0; x < w; ++x) {
        const int x0 = std::max(0, x - r);
        const int x1 = std::min(w, x + r + 1);
        const Acc box = bottom[x1] - bottom[x0] - top[x1] + top[x0];
        d[y * w + x] = static_cast<T>(box / static_cast<Acc>(divisor));
      }
    }
  }
}

enum class WindowMethod { Direct, SummedArea };

// The zero-padded box filter is self-adjoint, so backward reuses it.
template <typename T>
BasicTensor<T> window_pool(const BasicTensor<T>& x, int kernel, T divisor, WindowMethod method) {
  check_pool_kernel(kernel);
  const Shape s = x.shape();
  const int r = kernel / 2;
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  BasicTensor<T> out(s);
  auto run = [method, planes, s, r, divisor](const T* src, T* dst) {
    if (method == WindowMethod::Direct) {
      window_sum_direct(src, dst, planes, s.h, s.w, r, divisor);
    } else {
      window_sum_sat(src, dst, planes, s.h, s.w, r, divisor);
    }
  };
  run(x.data().data(), out.mutable_data().data());
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), run]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      std::vector<T> tmp(g->size());
      run(g->data(), tmp.data());
      auto& gx = xn->grad_buffer();
      for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> avg_pool(const BasicTensor<T>& x, int kernel) {
  return window_pool(x, kernel, static_cast<T>(kernel * kernel), WindowMethod::Direct);
}

template <typename T>
BasicTensor<T> avg_pool_sat(const BasicTensor<T>& x, int kernel) {
  return window_pool(x, kernel, static_cast<T>(kernel * kernel), WindowMethod::SummedArea);
}

template <typename T>
BasicTensor<T> sum_pool(const BasicTensor<T>& x, int kernel) {
  return window_pool(x, kernel, T(1), WindowMethod::SummedArea);
}

template <typename T>
BasicTensor<T> adaptive_avg_pool(const BasicTensor<T>& x, int bins) {
  const Shape s = x.shape();
  if (bins < 1) throw std::invalid_argument("adaptive_avg_pool: bins must be >= 1");
  if (s.h < 1 || s.w < 1) throw ShapeError("adaptive_avg_pool: empty input " + s.str());
  auto start = [](int i, int in, int b) { return (i * in) / b; };
  auto stop = [](int i, int in, int b) { return ((i + 1) * in + b - 1) / b; };
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  BasicTensor<T> out(Shape{s.n, s.c, bins, bins});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * s.plane();
    for (int by = 0; by < bins; ++by) {
      const int y0 = start(by, s.h, bins), y1 = stop(by, s.h, bins);
      for (int bx = 0; bx < bins; ++bx) {
        const int x0 = start(bx, s.w, bins), x1 = stop(bx, s.w, bins);
        T acc = T(0);
        for (int y = y0; y < y1; ++y) {
          for (int xx = x0; xx < x1; ++xx) acc += src[y * s.w + xx];
        }
        out.mutable_data()[p * bins * bins + by * bins + bx] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), s, bins, planes, start, stop]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        T* dst = gx.data() + p * s.plane();
        for (int by = 0; by < bins; ++by) {
          const int y0 = start(by, s.h, bins), y1 = stop(by, s.h, bins);
          for (int bx = 0; bx < bins; ++bx) {
            const int x0 = start(bx, s.w, bins), x1 = stop(bx, s.w, bins);
            const T v = (*g)[p * bins * bins + by * bins + bx] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y) {
              for (int xx = x0; xx < x1; ++xx) dst[y * s.w + xx] += v;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> max_pool(const BasicTensor<T>& x, int kernel, int stride, int padding) {
  const Shape s = x.shape();
  const int oh = conv_output_size(s.h, kernel, stride, padding);
  const int ow = conv_output_size(s.w, kernel, stride, padding);
  if (oh <= 0 || ow <= 0) throw ShapeError("max_pool: empty output for " + s.str());
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  BasicTensor<T> out(Shape{s.n, s.c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * s.plane();
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = p * s.plane();
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= s.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= s.w) continue;
            if (src[iy * s.w + ix] > best) {
              best = src[iy * s.w + ix];
              best_idx = p * s.plane() + iy * s.w + ix;
            }
          }
        }
        const std::size_t o = p * oh * ow + oy * ow + ox;
        out.mutable_data()[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), argmax = std::move(argmax)]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += (*g)[o];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> avg_pool2x2(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  const int oh = s.h / 2, ow = s.w / 2;
  if (oh < 1 || ow < 1) throw ShapeError("avg_pool2x2: input too small " + s.str());
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  BasicTensor<T> out(Shape{s.n, s.c, oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * s.plane();
    T* dst = out.mutable_data().data() + p * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        const T* a = src + (2 * y) * s.w + 2 * xx;
        dst[y * ow + xx] = T(0.25) * (a[0] + a[1] + a[s.w] + a[s.w + 1]);
      }
    }
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), s, oh, ow, planes]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        T* dst = gx.data() + p * s.plane();
        const T* gp = g->data() + p * oh * ow;
        for (int y = 0; y < oh; ++y) {
          for (int xx = 0; xx < ow; ++xx) {
            const T v = T(0.25) * gp[y * ow + xx];
            T* a = dst + (2 * y) * s.w + 2 * xx;
            a[0] += v;
            a[1] += v;
            a[s.w] += v;
            a[s.w + 1] += v;
          }
        }
      }
    });
  }
  return out;
}

#define TMF_INT_ARG(fn)                                                  \
  template BasicTensor<float> fn<float>(const BasicTensor<float>&, int); \
  template BasicTensor<double> fn<double>(const BasicTensor<double>&, int);
TMF_INT_ARG(avg_pool)
TMF_INT_ARG(avg_pool_sat)
TMF_INT_ARG(sum_pool)
TMF_INT_ARG(adaptive_avg_pool)
#undef TMF_INT_ARG
TMF_INSTANTIATE_UNARY(avg_pool2x2)
template BasicTensor<float> max_pool<float>(const BasicTensor<float>&, int, int, int);
template BasicTensor<double> max_pool<double>(const BasicTensor<double>&, int, int, int);

}  // namespace tmf
