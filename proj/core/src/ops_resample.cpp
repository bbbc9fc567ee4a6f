#include <algorithm>
#include <cmath>

#include "op_support.hpp"
#include "tmf/ops.hpp"

namespace tmf {
namespace {

struct LerpTap {
  int i0, i1;
  double w0, w1;
};

std::vector<LerpTap> bilinear_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l1 = src - i0;
    taps[o] = LerpTap{i0, i1, 1.0 - l1, l1};
  }
  return taps;
}

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

constexpr double kBinomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

// One separable pass along rows (horizontal) or columns (vertical).
template <typename T>
void binomial_pass(const T* src, T* dst, std::size_t planes, int h, int w, bool horizontal) {
  for (std::size_t p = 0; p < planes; ++p) {
    const T* s = src + p * h * w;
    T* d = dst + p * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        T acc = T(0);
        for (int t = -2; t <= 2; ++t) {
          const T v = horizontal ? s[y * w + reflect(x + t, w)] : s[reflect(y + t, h) * w + x];
          acc += static_cast<T>(kBinomial[t + 2]) * v;
        }
        d[y * w + x] = acc;
      }
    }
  }
}

template <typename T>
void binomial_pass_adjoint(const T* g, T* dst, std::size_t planes, int h, int w, bool horizontal) {
  for (std::size_t p = 0; p < planes; ++p) {
    const T* gs = g + p * h * w;
    T* d = dst + p * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const T gv = gs[y * w + x];
        for (int t = -2; t <= 2; ++t) {
          const int idx = horizontal ? y * w + reflect(x + t, w) : reflect(y + t, h) * w + x;
          d[idx] += static_cast<T>(kBinomial[t + 2]) * gv;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output extents must be >= 1");
  const Shape s = x.shape();
  const auto ty = bilinear_taps(s.h, out_h);
  const auto tx = bilinear_taps(s.w, out_w);
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  BasicTensor<T> out(Shape{s.n, s.c, out_h, out_w});
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data().data() + p * s.plane();
    T* dst = out.mutable_data().data() + p * out_h * out_w;
    for (int oy = 0; oy < out_h; ++oy) {
      const LerpTap& a = ty[oy];
      const T* r0 = src + a.i0 * s.w;
      const T* r1 = src + a.i1 * s.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const LerpTap& b = tx[ox];
        const T top = static_cast<T>(b.w0) * r0[b.i0] + static_cast<T>(b.w1) * r0[b.i1];
        const T bot = static_cast<T>(b.w0) * r1[b.i0] + static_cast<T>(b.w1) * r1[b.i1];
        dst[oy * out_w + ox] = static_cast<T>(a.w0) * top + static_cast<T>(a.w1) * bot;
      }
    }
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), ty, tx, s, planes, out_h, out_w]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      for (std::size_t p = 0; p < planes; ++p) {
        T* dst = gx.data() + p * s.plane();
        const T* gp = g->data() + p * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          const LerpTap& a = ty[oy];
          for (int ox = 0; ox < out_w; ++ox) {
            const LerpTap& b = tx[ox];
            const T gv = gp[oy * out_w + ox];
            dst[a.i0 * s.w + b.i0] += static_cast<T>(a.w0 * b.w0) * gv;
            dst[a.i0 * s.w + b.i1] += static_cast<T>(a.w0 * b.w1) * gv;
            dst[a.i1 * s.w + b.i0] += static_cast<T>(a.w1 * b.w0) * gv;
            dst[a.i1 * s.w + b.i1] += static_cast<T>(a.w1 * b.w1) * gv;
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Shared index map for pixel_shuffle / pixel_unshuffle: element `o` of the
// shuffled layout comes from element `src[o]` of the channel-packed layout.
std::vector<std::size_t> shuffle_map(int n, int packed_c, int h, int w) {
  const int oc = packed_c / 4;
  const int oh = h * 2, ow = w * 2;
  std::vector<std::size_t> map(static_cast<std::size_t>(n) * packed_c * h * w);
  std::size_t o = 0;
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < oc; ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x, ++o) {
          const int di = y & 1, dj = x & 1;
          const int ic = 4 * c + 2 * di + dj;
          map[o] = ((static_cast<std::size_t>(b) * packed_c + ic) * h + (y >> 1)) * w + (x >> 1);
        }
      }
    }
  }
  return map;
}

template <typename T>
BasicTensor<T> gather(const BasicTensor<T>& x, Shape out_shape, std::vector<std::size_t> map, bool inverse) {
  BasicTensor<T> out(out_shape);
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  if (!inverse) {
    for (std::size_t o = 0; o < map.size(); ++o) od[o] = xd[map[o]];
  } else {
    for (std::size_t o = 0; o < map.size(); ++o) od[map[o]] = xd[o];
  }
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), map = std::move(map), inverse]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      auto& gx = xn->grad_buffer();
      if (!inverse) {
        for (std::size_t o = 0; o < map.size(); ++o) gx[map[o]] += (*g)[o];
      } else {
        for (std::size_t o = 0; o < map.size(); ++o) gx[o] += (*g)[map[o]];
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  if (s.c % 4 != 0) throw ShapeError("pixel_shuffle: channels must be divisible by 4, got " + s.str());
  return gather(x, Shape{s.n, s.c / 4, s.h * 2, s.w * 2}, shuffle_map(s.n, s.c, s.h, s.w), false);
}

template <typename T>
BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) throw ShapeError("pixel_unshuffle: spatial extents must be even, got " + s.str());
  return gather(x, Shape{s.n, s.c * 4, s.h / 2, s.w / 2}, shuffle_map(s.n, s.c * 4, s.h / 2, s.w / 2), true);
}

template <typename T>
BasicTensor<T> binomial_blur5(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  if (s.h < 3 || s.w < 3) throw ShapeError("binomial_blur5: reflect padding needs extents >= 3, got " + s.str());
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<T> tmp(x.numel());
  BasicTensor<T> out(s);
  binomial_pass(x.data().data(), tmp.data(), planes, s.h, s.w, true);
  binomial_pass(tmp.data(), out.mutable_data().data(), planes, s.h, s.w, false);
  if (detail::should_record<T>({&x})) {
    detail::attach(out, [xn = x.node(), on = out.node(), s, planes]() {
      const auto* g = detail::upstream(on);
      if (!g) return;
      std::vector<T> gtmp(g->size(), T(0));
      binomial_pass_adjoint(g->data(), gtmp.data(), planes, s.h, s.w, false);
      binomial_pass_adjoint(gtmp.data(), xn->grad_buffer().data(), planes, s.h, s.w, true);
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> dynamic_filter3x3(const BasicTensor<T>& x, const BasicTensor<T>& kernels, int groups) {
  const Shape xs = x.shape();
  const Shape ks = kernels.shape();
  if (groups < 1 || xs.c % groups != 0) {
    throw ShapeError("dynamic_filter3x3: " + std::to_string(xs.c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  if (ks.c != groups * 9) {
    throw ShapeError("dynamic_filter3x3: kernel field has " + std::to_string(ks.c) + " channels, expected " +
                     std::to_string(groups * 9));
  }
  if (ks.n != xs.n || ks.h != xs.h || ks.w != xs.w) {
    throw ShapeError("dynamic_filter3x3: kernel field " + ks.str() + " does not match features " + xs.str());
  }
  const int h = xs.h, w = xs.w;
  const std::size_t plane = xs.plane();
  BasicTensor<T> out(xs);
  for (int n = 0; n < xs.n; ++n) {
    for (int c = 0; c < xs.c; ++c) {
      const int g = c % groups;
      const T* xp = x.data().data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
      const T* kp = kernels.data().data() + (static_cast<std::size_t>(n) * ks.c + g * 9) * plane;
      T* yp = out.mutable_data().data() + (static_cast<std::size_t>(n) * xs.c + c) * plane;
      for (int tap = 0; tap < 9; ++tap) {
        const int u = tap / 3 - 1, v = tap % 3 - 1;
        const T* kt = kp + tap * plane;
        const int y0 = std::max(0, -u), y1 = std::min(h, h - u);
        const int x0 = std::max(0, -v), x1 = std::min(w, w - v);
        for (int i = y0; i < y1; ++i) {
          const T* xr = xp + (i + u) * w + v;
          const T* kr = kt + i * w;
          T* yr = yp + i * w;
          for (int j = x0; j < x1; ++j) yr[j] += kr[j] * xr[j];
        }
      }
    }
  }
  if (detail::should_record<T>({&x, &kernels})) {
    detail::attach(out, [xn = x.node(), kn = kernels.node(), on = out.node(), xs, groups]() {
      const auto* gout = detail::upstream(on);
      if (!gout) return;
      const int h = xs.h, w = xs.w;
      const std::size_t plane = xs.plane();
      const int kc = groups * 9;
      T* gx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
      T* gk = kn->requires_grad ? kn->grad_buffer().data() : nullptr;
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
          const int g = c % groups;
          const std::size_t xoff = (static_cast<std::size_t>(n) * xs.c + c) * plane;
          const std::size_t koff = (static_cast<std::size_t>(n) * kc + g * 9) * plane;
          const T* gy = gout->data() + xoff;
          const T* xp = xn->data.data() + xoff;
          const T* kp = kn->data.data() + koff;
          for (int tap = 0; tap < 9; ++tap) {
            const int u = tap / 3 - 1, v = tap % 3 - 1;
            const int y0 = std::max(0, -u), y1 = std::min(h, h - u);
            const int x0 = std::max(0, -v), x1 = std::min(w, w - v);
            for (int i = y0; i < y1; ++i) {
              const T* gr = gy + i * w;
              const int src_row = (i + u) * w + v;
              if (gx) {
                const T* kr = kp + tap * plane + i * w;
                T* gxr = gx + xoff + src_row;
                for (int j = x0; j < x1; ++j) gxr[j] += kr[j] * gr[j];
              }
              if (gk) {
                const T* xr = xp + src_row;
                T* gkr = gk + koff + tap * plane + i * w;
                for (int j = x0; j < x1; ++j) gkr[j] += xr[j] * gr[j];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template BasicTensor<float> bilinear_resize<float>(const BasicTensor<float>&, int, int);
template BasicTensor<double> bilinear_resize<double>(const BasicTensor<double>&, int, int);
TMF_INSTANTIATE_UNARY(pixel_shuffle)
TMF_INSTANTIATE_UNARY(pixel_unshuffle)
TMF_INSTANTIATE_UNARY(binomial_blur5)
template BasicTensor<float> dynamic_filter3x3<float>(const BasicTensor<float>&, const BasicTensor<float>&, int);
template BasicTensor<double> dynamic_filter3x3<double>(const BasicTensor<double>&, const BasicTensor<double>&, int);

}  // namespace tmf
