#include "tmf/verify/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "tmf/matting_ops.hpp"
#include "tmf/metrics.hpp"
#include "tmf/rng.hpp"

namespace tmf::verify {

template <typename T>
std::vector<double> nbp_reference(const BasicTensor<T>& f, const BasicTensor<T>& m, int k, double eps) {
  const Shape s = f.shape();
  const int r = k / 2;
  std::vector<double> out(s.numel());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          double num = 0.0, den = 0.0;
          for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
              const int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
              const double mv = m(n, 0, yy, xx);
              num += static_cast<double>(f(n, c, yy, xx)) * mv;
              den += mv;
            }
          const double area = static_cast<double>(k) * k;
          out[f.index(n, c, y, x)] = (num / area) / (den / area + eps);
        }
  return out;
}

template <typename T>
std::vector<double> dynamic_filter_reference(const BasicTensor<T>& x, const BasicTensor<T>& kernels, int groups) {
  const Shape s = x.shape();
  std::vector<double> out(s.numel(), 0.0);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const int g = c % groups;
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) {
          double acc = 0.0;
          for (int u = -1; u <= 1; ++u)
            for (int v = -1; v <= 1; ++v) {
              const int sy = y + u, sx = xx + v;
              if (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w) continue;
              acc += static_cast<double>(kernels(n, g * 9 + (u + 1) * 3 + (v + 1), y, xx)) * x(n, c, sy, sx);
            }
          out[x.index(n, c, y, xx)] = acc;
        }
    }
  return out;
}

template <typename T>
std::vector<double> conv2d_reference(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                                     int stride, int padding, int dilation) {
  const Shape s = x.shape();
  const int k = w.h();
  const int oh = (s.h + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  const int ow = (s.w + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(s.n) * w.n() * oh * ow);
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = b.defined() ? static_cast<double>(b(0, o, 0, 0)) : 0.0;
          for (int c = 0; c < s.c; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = y * stride - padding + ky * dilation;
                const int sx = xx * stride - padding + kx * dilation;
                if (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w) continue;
                acc += static_cast<double>(w(o, c, ky, kx)) * x(n, c, sy, sx);
              }
          out[i++] = acc;
        }
  return out;
}

template <typename T>
std::vector<double> bilinear_reference(const BasicTensor<T>& x, int oh, int ow) {
  const Shape s = x.shape();
  std::vector<double> out(static_cast<std::size_t>(s.n) * s.c * oh * ow);
  auto source = [](int o, int in, int outn, int& i0, int& i1, double& frac) {
    double src = (o + 0.5) * static_cast<double>(in) / outn - 0.5;
    if (src < 0) src = 0;
    i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    i1 = std::min(i0 + 1, in - 1);
    frac = src - i0;
  };
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          int y0, y1, x0, x1;
          double fy, fx;
          source(y, s.h, oh, y0, y1, fy);
          source(xx, s.w, ow, x0, x1, fx);
          const double top = (1 - fx) * x(n, c, y0, x0) + fx * x(n, c, y0, x1);
          const double bot = (1 - fx) * x(n, c, y1, x0) + fx * x(n, c, y1, x1);
          out[i++] = (1 - fy) * top + fy * bot;
        }
  return out;
}

template <typename T>
std::vector<double> adaptive_avg_pool_reference(const BasicTensor<T>& x, int bins) {
  const Shape s = x.shape();
  std::vector<double> out(static_cast<std::size_t>(s.n) * s.c * bins * bins);
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int by = 0; by < bins; ++by)
        for (int bx = 0; bx < bins; ++bx) {
          const int y0 = by * s.h / bins, y1 = ((by + 1) * s.h + bins - 1) / bins;
          const int x0 = bx * s.w / bins, x1 = ((bx + 1) * s.w + bins - 1) / bins;
          double acc = 0.0;
          for (int y = y0; y < y1; ++y)
            for (int xx = x0; xx < x1; ++xx) acc += x(n, c, y, xx);
          out[i++] = acc / ((y1 - y0) * (x1 - x0));
        }
  return out;
}

template <typename T>
std::vector<double> pixel_shuffle_reference(const BasicTensor<T>& x) {
  const Shape s = x.shape();
  const int oc = s.c / 4, oh = s.h * 2, ow = s.w * 2;
  std::vector<double> out(s.numel());
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < oc; ++c)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          const int src_c = 4 * c + 2 * (y % 2) + (xx % 2);
          out[((static_cast<std::size_t>(n) * oc + c) * oh + y) * ow + xx] = x(n, src_c, y / 2, xx / 2);
        }
  return out;
}

std::vector<std::uint8_t> dilate_reference(const std::vector<std::uint8_t>& mask, int h, int w, int k) {
  const int lo = (k - 1) / 2, hi = k - 1 - lo;
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = -lo; dy <= hi; ++dy)
        for (int dx = -lo; dx <= hi; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && mask[yy * w + xx]) out[y * w + x] = 1;
        }
  return out;
}

std::vector<std::uint8_t> erode_reference(const std::vector<std::uint8_t>& mask, int h, int w, int k) {
  const int lo = (k - 1) / 2, hi = k - 1 - lo;
  std::vector<std::uint8_t> out(mask.size(), 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = -lo; dy <= hi; ++dy)
        for (int dx = -lo; dx <= hi; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w && !mask[yy * w + xx]) out[y * w + x] = 0;
        }
  return out;
}

Trimap trimap_reference(const AlphaMatte& alpha, int k_dilate, int k_erode, double delta) {
  const int h = alpha.height(), w = alpha.width();
  std::vector<std::uint8_t> fg(alpha.plane()), nz(alpha.plane());
  for (std::size_t i = 0; i < fg.size(); ++i) {
    fg[i] = alpha.data()[i] >= 1.0 - delta;
    nz[i] = alpha.data()[i] > delta;
  }
  const auto core = erode_reference(fg, h, w, k_erode);
  const auto reach = dilate_reference(nz, h, w, k_dilate);
  Trimap t(h, w);
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    t.labels[i] = core[i] ? TrimapLabel::Foreground : reach[i] ? TrimapLabel::Unknown : TrimapLabel::Background;
  }
  return t;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape s, Rng& rng, double lo, double hi) {
  std::vector<float> v(s.numel());
  for (float& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(s, std::move(v));
}

// Blobs of ones, some fractional edges, and empty stretches.
Tensor random_mask(int n, int h, int w, Rng& rng) {
  Tensor m(Shape{n, 1, h, w});
  auto d = m.mutable_data();
  const int mode = rng.uniform_int(0, 3);
  for (int b = 0; b < n; ++b) {
    const double cy = rng.uniform(0, h), cx = rng.uniform(0, w), r = rng.uniform(1, std::max(h, w));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float v;
        switch (mode) {
          case 0: v = rng.coin(0.3) ? 0.0f : static_cast<float>(rng.uniform()); break;
          case 1: v = std::hypot(y - cy, x - cx) < r ? 1.0f : 0.0f; break;
          case 2: v = static_cast<float>(std::clamp(1.0 - std::hypot(y - cy, x - cx) / r, 0.0, 1.0)); break;
          default: v = (y / 4 + x / 4) % 3 == 0 ? 0.0f : 1.0f; break;
        }
        d[(static_cast<std::size_t>(b) * h + y) * w + x] = v;
      }
  }
  return m;
}

double max_diff(std::span<const float> got, const std::vector<double>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]));
  return worst;
}

}  // namespace

OracleReport nbp_oracle(int trials, std::uint64_t seed, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  OracleReport rep{"nbp", trials, 0.0, tolerance};
  Rng rng(seed);
  const int ks[] = {3, 5, 11, 17, 31};
  for (int t = 0; t < trials; ++t) {
    const int h = rng.uniform_int(1, 64), w = rng.uniform_int(1, 64);
    const int n = rng.uniform_int(1, 2), c = rng.uniform_int(1, 4);
    const int k = ks[t % 5];
    const Tensor f = random_tensor(Shape{n, c, h, w}, rng, -1, 1);
    const Tensor m = random_mask(n, h, w, rng);
    const auto want = nbp_reference(f, m, k, kNbpEpsilon);
    const double d_fast = max_diff(nbp_fast(f, m, k).data(), want);
    const double d_direct = max_diff(nbp(f, m, k).data(), want);
    if (std::max(d_fast, d_direct) > rep.max_abs_diff) {
      rep.max_abs_diff = std::max(d_fast, d_direct);
      rep.detail = "trial " + std::to_string(t) + " (" + std::to_string(h) + "x" + std::to_string(w) + ", k=" +
                   std::to_string(k) + ")";
    }
  }
  rep.passed = rep.max_abs_diff <= tolerance;
  rep.seconds = seconds_since(t0);
  return rep;
}

OracleReport fusion_oracle(int trials, std::uint64_t seed, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  OracleReport rep{"fusion", trials, 0.0, tolerance};
  Rng rng(seed);
  const int batches[] = {1, 2, 4};
  for (int t = 0; t < trials; ++t) {
    const int n = batches[t % 3];
    const int groups = rng.uniform_int(1, 4);
    const int c = groups * rng.uniform_int(1, 4);
    const int h = rng.uniform_int(1, 24), w = rng.uniform_int(1, 24);
    const Tensor x = random_tensor(Shape{n, c, h, w}, rng, -1, 1);
    const Tensor k = random_tensor(Shape{n, groups * 9, h, w}, rng, -1, 1);
    const auto want = dynamic_filter_reference(x, k, groups);
    const double d = max_diff(GlfBlock<float>::spatial_fusion(x, KernelField<float>{k, groups}).data(), want);
    if (d > rep.max_abs_diff) {
      rep.max_abs_diff = d;
      rep.detail = "trial " + std::to_string(t);
    }
  }
  rep.passed = rep.max_abs_diff <= tolerance;
  rep.seconds = seconds_since(t0);
  return rep;
}

OracleReport metrics_oracle(const std::string& fixture_path, const std::string& golden_path, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  auto load = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return nlohmann::json::parse(ss.str());
  };
  const auto fixture = load(fixture_path);
  const auto golden = load(golden_path);
  OracleReport rep{"metrics", 0, 0.0, tolerance};
  for (const auto& c : fixture.at("cases")) {
    const std::string id = c.at("id");
    const int h = c.at("height"), w = c.at("width");
    AlphaMatte pred(1, h, w), gt(1, h, w);
    pred.data() = c.at("pred").get<std::vector<float>>();
    gt.data() = c.at("gt").get<std::vector<float>>();
    RegionMask region = c.at("region").get<std::vector<std::uint8_t>>();
    const auto& want = golden.at(id);
    const double got[4] = {metric_sad(pred, gt, region), metric_mse(pred, gt, region), metric_grad(pred, gt, region),
                           metric_conn(pred, gt, region)};
    const char* names[4] = {"sad", "mse", "grad", "conn"};
    for (int i = 0; i < 4; ++i) {
      const double d = std::abs(got[i] - want.at(names[i]).get<double>());
      if (d >= rep.max_abs_diff) {
        rep.max_abs_diff = d;
        rep.detail = id + "." + names[i];
      }
    }
    ++rep.trials;
  }
  rep.passed = rep.trials > 0 && rep.max_abs_diff <= tolerance;
  rep.seconds = seconds_since(t0);
  return rep;
}

#define TMF_VERIFY_INSTANTIATE(T)                                                                                  \
  template std::vector<double> nbp_reference<T>(const BasicTensor<T>&, const BasicTensor<T>&, int, double);        \
  template std::vector<double> dynamic_filter_reference<T>(const BasicTensor<T>&, const BasicTensor<T>&, int);     \
  template std::vector<double> conv2d_reference<T>(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                                   const BasicTensor<T>&, int, int, int);                          \
  template std::vector<double> bilinear_reference<T>(const BasicTensor<T>&, int, int);                            \
  template std::vector<double> adaptive_avg_pool_reference<T>(const BasicTensor<T>&, int);                        \
  template std::vector<double> pixel_shuffle_reference<T>(const BasicTensor<T>&);

TMF_VERIFY_INSTANTIATE(float)
TMF_VERIFY_INSTANTIATE(double)

}  // namespace tmf::verify
