#include "tmf/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tmf {
namespace {

void require_rgb_pair(const Image& a, const Image& b, const char* what) {
  if (a.channels() != b.channels() || !a.same_size(b)) throw std::invalid_argument(std::string(what) + ": size mismatch");
}

// Index into [0, n) reflected about the edges without repeating them.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<float> gaussian_taps(double sigma, int& radius) {
  radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<float> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += std::exp(-0.5 * i * i / (sigma * sigma));
  for (int i = -radius; i <= radius; ++i) taps[i + radius] = static_cast<float>(std::exp(-0.5 * i * i / (sigma * sigma)) / total);
  return taps;
}

// Separable Gaussian blur of one plane, replicate borders.
void blur_plane(std::vector<float>& p, int h, int w, double sigma) {
  int r = 0;
  const auto taps = gaussian_taps(sigma, r);
  std::vector<float> tmp(p.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * p[y * w + std::clamp(x + k, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp[std::clamp(y + k, 0, h - 1) * w + x];
      p[y * w + x] = acc;
    }
}

void snap_alpha(std::vector<float>& a) {
  for (float& v : a) {
    if (v < kPureDelta) v = 0.0f;
    else if (v > 1.0 - kPureDelta) v = 1.0f;
  }
}

void stamp_disc(std::vector<float>& mask, int h, int w, double cy, double cx, double r) {
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) mask[y * w + x] = 1.0f;
}

bool inside_polygon(const std::vector<std::pair<double, double>>& poly, double y, double x) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [yi, xi] = poly[i];
    const auto [yj, xj] = poly[j];
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) in = !in;
  }
  return in;
}

// Smooth colour field around `base`: a linear ramp plus blurred noise.
Image textured_field(int h, int w, const float base[3], double ramp, double noise, Rng& rng) {
  Image img(3, h, w);
  const double angle = rng.uniform(0.0, 2.0 * M_PI);
  const double dy = std::sin(angle), dx = std::cos(angle);
  for (int c = 0; c < 3; ++c) {
    std::vector<float> n(static_cast<std::size_t>(h) * w);
    for (float& v : n) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    blur_plane(n, h, w, 2.0);
    const double slope = rng.uniform(-ramp, ramp);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double t = ((y - h / 2.0) * dy + (x - w / 2.0) * dx) / std::max(h, w);
        const double v = base[c] + slope * t + noise * 3.0 * n[y * w + x];
        img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return img;
}

void random_colour(float out[3], Rng& rng) {
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(rng.uniform(0.1, 0.9));
}

}  // namespace

Image composite(const Image& foreground, const Image& background, const AlphaMatte& alpha) {
  require_rgb_pair(foreground, background, "composite");
  if (alpha.channels() != 1 || !alpha.same_size(foreground)) throw std::invalid_argument("composite: alpha size mismatch");
  Image out(foreground.channels(), foreground.height(), foreground.width());
  const std::size_t plane = alpha.plane();
  for (int c = 0; c < foreground.channels(); ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const float a = alpha.data()[i];
      const float f = foreground.data()[c * plane + i];
      const float b = background.data()[c * plane + i];
      float v;
      if (a == 1.0f) v = f;
      else if (a == 0.0f) v = b;
      else v = a * f + (1.0f - a) * b;
      out.data()[c * plane + i] = v;
    }
  return out;
}

std::vector<std::uint8_t> erode_square(const std::vector<std::uint8_t>& mask, int h, int w, int k) {
  std::vector<std::uint8_t> inverted(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) inverted[i] = !mask[i];
  auto grown = dilate_square(inverted, h, w, k);
  for (auto& v : grown) v = !v;
  return grown;
}

std::vector<std::uint8_t> dilate_square(const std::vector<std::uint8_t>& mask, int h, int w, int k) {
  if (k < 1) throw std::invalid_argument("structuring element size must be >= 1");
  const int lo = (k - 1) / 2;
  const int hi = k - 1 - lo;
  std::vector<std::uint8_t> rows(mask.size(), 0), out(mask.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int d = std::max(0, x - lo); d <= std::min(w - 1, x + hi) && !v; ++d) v = mask[y * w + d];
      rows[y * w + x] = v;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      for (int d = std::max(0, y - lo); d <= std::min(h - 1, y + hi) && !v; ++d) v = rows[d * w + x];
      out[y * w + x] = v;
    }
  return out;
}

Trimap gen_trimap(const AlphaMatte& alpha, int k_dilate, int k_erode) {
  if (alpha.channels() != 1) throw std::invalid_argument("gen_trimap expects a single-channel alpha");
  const int h = alpha.height(), w = alpha.width();
  std::vector<std::uint8_t> fg(alpha.plane()), nonzero(alpha.plane());
  for (std::size_t i = 0; i < fg.size(); ++i) {
    fg[i] = alpha.data()[i] >= 1.0 - kPureDelta;
    nonzero[i] = alpha.data()[i] > kPureDelta;
  }
  const auto fg_core = erode_square(fg, h, w, k_erode);
  const auto reach = dilate_square(nonzero, h, w, k_dilate);
  Trimap t(h, w, TrimapLabel::Unknown);
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    if (fg_core[i]) t.labels[i] = TrimapLabel::Foreground;
    else if (!reach[i]) t.labels[i] = TrimapLabel::Background;
  }
  return t;
}

CropWindow choose_unknown_crop(const Trimap& trimap, int size, Rng& rng) {
  if (size < 1 || size > trimap.height || size > trimap.width) {
    throw std::invalid_argument("crop size " + std::to_string(size) + " does not fit a " +
                                std::to_string(trimap.height) + "x" + std::to_string(trimap.width) + " image");
  }
  const std::size_t unknown = trimap.count(TrimapLabel::Unknown);
  if (unknown == 0) throw DegenerateTrimapError("trimap has no unknown pixels to centre a crop on");
  std::size_t pick = static_cast<std::size_t>(rng.next_u64() % unknown);
  std::size_t idx = 0;
  for (; idx < trimap.labels.size(); ++idx) {
    if (trimap.labels[idx] != TrimapLabel::Unknown) continue;
    if (pick == 0) break;
    --pick;
  }
  const int cy = static_cast<int>(idx / trimap.width);
  const int cx = static_cast<int>(idx % trimap.width);
  CropWindow win;
  win.size = size;
  win.top = std::clamp(cy - size / 2, 0, trimap.height - size);
  win.left = std::clamp(cx - size / 2, 0, trimap.width - size);
  return win;
}

MattingSample crop_sample(const MattingSample& s, const CropWindow& win) {
  MattingSample out;
  out.foreground = s.foreground.crop(win.top, win.left, win.size, win.size);
  out.background = s.background.crop(win.top, win.left, win.size, win.size);
  out.alpha = s.alpha.crop(win.top, win.left, win.size, win.size);
  out.composite = s.composite.crop(win.top, win.left, win.size, win.size);
  out.trimap = s.trimap.crop(win.top, win.left, win.size, win.size);
  return out;
}

MattingSample crop_unknown_centered(const MattingSample& sample, int size, Rng& rng) {
  const int h = sample.alpha.height(), w = sample.alpha.width();
  if (size > h || size > w) {
    return crop_unknown_centered(reflect_pad(sample, std::max(h, size), std::max(w, size)), size, rng);
  }
  return crop_sample(sample, choose_unknown_crop(sample.trimap, size, rng));
}

MattingSample flip_sample(const MattingSample& s) {
  return MattingSample{s.foreground.flipped_horizontal(), s.background.flipped_horizontal(),
                       s.alpha.flipped_horizontal(), s.composite.flipped_horizontal(), s.trimap.flipped_horizontal()};
}

Image reflect_pad(const Image& image, int h, int w) {
  if (h < image.height() || w < image.width()) throw std::invalid_argument("reflect_pad: target smaller than image");
  Image out(image.channels(), h, w);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = image.at(c, reflect_index(y, image.height()), reflect_index(x, image.width()));
  return out;
}

Trimap reflect_pad(const Trimap& trimap, int h, int w) {
  if (h < trimap.height || w < trimap.width) throw std::invalid_argument("reflect_pad: target smaller than trimap");
  Trimap out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(y, x) = trimap.at(reflect_index(y, trimap.height), reflect_index(x, trimap.width));
  return out;
}

MattingSample reflect_pad(const MattingSample& s, int h, int w) {
  return MattingSample{reflect_pad(s.foreground, h, w), reflect_pad(s.background, h, w), reflect_pad(s.alpha, h, w),
                       reflect_pad(s.composite, h, w), reflect_pad(s.trimap, h, w)};
}

PaddedInput pad_to_multiple(const Image& image, const Trimap& trimap, int multiple) {
  if (multiple < 1) throw std::invalid_argument("pad_to_multiple: multiple must be >= 1");
  if (image.height() != trimap.height || image.width() != trimap.width) {
    throw std::invalid_argument("pad_to_multiple: image and trimap differ in size");
  }
  const int h = (image.height() + multiple - 1) / multiple * multiple;
  const int w = (image.width() + multiple - 1) / multiple * multiple;
  return PaddedInput{reflect_pad(image, h, w), reflect_pad(trimap, h, w), image.height(), image.width()};
}

AlphaMatte unpad(const AlphaMatte& prediction, const PaddedInput& padded) {
  return prediction.crop(0, 0, padded.original_h, padded.original_w);
}

std::string to_string(ToyShape shape) {
  switch (shape) {
    case ToyShape::Disc: return "disc";
    case ToyShape::Polygon: return "polygon";
    case ToyShape::Strands: return "strands";
  }
  return "disc";
}

ToyForeground synth_toy_foreground(std::uint64_t seed, const ToyDataConfig& config) {
  Rng rng(seed);
  const int s = config.size;
  const int h = s, w = s;
  ToyForeground out;
  out.shape = static_cast<ToyShape>(rng.uniform_int(0, 2));
  std::vector<float> mask(static_cast<std::size_t>(h) * w, 0.0f);
  const double cy = s / 2.0 + rng.uniform(-s / 8.0, s / 8.0);
  const double cx = s / 2.0 + rng.uniform(-s / 8.0, s / 8.0);
  switch (out.shape) {
    case ToyShape::Disc:
      stamp_disc(mask, h, w, cy, cx, rng.uniform(0.15 * s, 0.28 * s));
      break;
    case ToyShape::Polygon: {
      const int n = rng.uniform_int(3, 8);
      std::vector<double> angles(n);
      for (double& a : angles) a = rng.uniform(0.0, 2.0 * M_PI);
      std::sort(angles.begin(), angles.end());
      std::vector<std::pair<double, double>> poly;
      for (double a : angles) {
        const double r = rng.uniform(0.15 * s, 0.32 * s);
        poly.emplace_back(cy + r * std::sin(a), cx + r * std::cos(a));
      }
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (inside_polygon(poly, y + 0.5, x + 0.5)) mask[y * w + x] = 1.0f;
      stamp_disc(mask, h, w, cy, cx, 0.1 * s);
      break;
    }
    case ToyShape::Strands: {
      const double body = rng.uniform(0.12 * s, 0.2 * s);
      stamp_disc(mask, h, w, cy, cx, body);
      const int strands = rng.uniform_int(6, 16);
      for (int k = 0; k < strands; ++k) {
        double angle = rng.uniform(0.0, 2.0 * M_PI);
        double y = cy + body * std::sin(angle), x = cx + body * std::cos(angle);
        const double length = rng.uniform(0.15 * s, 0.35 * s);
        const double thickness = rng.uniform(0.5, 1.3);
        for (double t = 0.0; t < length; t += 0.5) {
          angle += rng.uniform(-0.08, 0.08);
          y += 0.5 * std::sin(angle);
          x += 0.5 * std::cos(angle);
          stamp_disc(mask, h, w, y, x, thickness);
        }
      }
      break;
    }
  }
  blur_plane(mask, h, w, rng.uniform(0.5, 3.0));
  snap_alpha(mask);
  out.alpha = AlphaMatte(1, h, w);
  out.alpha.data() = mask;

  float base[3];
  random_colour(base, rng);
  out.foreground = textured_field(h, w, base, 0.4, 0.05, rng);

  if (rng.coin(config.distractor_probability)) {
    std::vector<std::size_t> edge;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] > 0.0f && mask[i] < 1.0f) edge.push_back(i);
    if (!edge.empty()) {
      const std::size_t e = edge[rng.next_u64() % edge.size()];
      const double ey = static_cast<double>(e / w), ex = static_cast<double>(e % w);
      double dy = ey - cy, dx = ex - cx;
      const double len = std::max(1e-6, std::hypot(dy, dx));
      dy /= len;
      dx /= len;
      const double r = rng.uniform(0.05 * s, 0.1 * s);
      const double gap = rng.uniform(1.0, 6.0);
      std::vector<float> d(mask.size(), 0.0f);
      stamp_disc(d, h, w, ey + dy * (r + gap), ex + dx * (r + gap), r);
      blur_plane(d, h, w, rng.uniform(0.5, 1.5));
      for (std::size_t i = 0; i < d.size(); ++i)
        if (mask[i] > kPureDelta) d[i] = 0.0f;
      snap_alpha(d);
      float tint[3];
      for (int c = 0; c < 3; ++c) tint[c] = static_cast<float>(std::clamp(base[c] + rng.uniform(-0.1, 0.1), 0.0, 1.0));
      out.has_distractor = true;
      out.distractor_alpha = AlphaMatte(1, h, w);
      out.distractor_alpha.data() = d;
      out.distractor_color = textured_field(h, w, tint, 0.2, 0.05, rng);
    }
  }
  return out;
}

std::vector<ToyForeground> synth_toy_foregrounds(int n, std::uint64_t seed, const ToyDataConfig& config) {
  if (n < 1) throw std::invalid_argument("synth_toy_foregrounds: n must be >= 1");
  std::vector<ToyForeground> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(synth_toy_foreground(Rng::derive(seed, i), config));
  return out;
}

Image synth_toy_background(int h, int w, Rng& rng) {
  float base[3];
  random_colour(base, rng);
  Image bg = textured_field(h, w, base, 0.6, 0.08, rng);
  const int clutter = rng.uniform_int(3, 6);
  for (int k = 0; k < clutter; ++k) {
    float colour[3];
    random_colour(colour, rng);
    std::vector<float> m(static_cast<std::size_t>(h) * w, 0.0f);
    if (rng.coin()) {
      stamp_disc(m, h, w, rng.uniform(0, h), rng.uniform(0, w), rng.uniform(0.05 * h, 0.2 * h));
    } else {
      const int y0 = rng.uniform_int(0, h - 1), x0 = rng.uniform_int(0, w - 1);
      const int y1 = std::min(h, y0 + rng.uniform_int(h / 10, h / 3));
      const int x1 = std::min(w, x0 + rng.uniform_int(w / 10, w / 3));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m[y * w + x] = 1.0f;
    }
    blur_plane(m, h, w, 1.0);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < m.size(); ++i) {
        float& v = bg.data()[c * m.size() + i];
        v = m[i] * colour[c] + (1.0f - m[i]) * v;
      }
  }
  return bg;
}

MattingSample make_toy_sample(std::uint64_t seed, int index, const ToyDataConfig& config) {
  if (config.k_min < 1 || config.k_max < config.k_min) throw std::invalid_argument("invalid trimap kernel range");
  Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(index)));
  ToyForeground fg = synth_toy_foreground(rng.next_u64(), config);
  MattingSample s;
  s.background = synth_toy_background(config.size, config.size, rng);
  if (fg.has_distractor) s.background = composite(fg.distractor_color, s.background, fg.distractor_alpha);
  s.foreground = std::move(fg.foreground);
  s.alpha = std::move(fg.alpha);
  s.composite = composite(s.foreground, s.background, s.alpha);
  s.trimap = gen_trimap(s.alpha, rng.uniform_int(config.k_min, config.k_max), rng.uniform_int(config.k_min, config.k_max));
  return s;
}

std::vector<MattingSample> make_toy_dataset(int n, std::uint64_t seed, const ToyDataConfig& config, int first_index) {
  std::vector<MattingSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(make_toy_sample(seed, first_index + i, config));
  return out;
}

double composition_residual(const MattingSample& s) {
  double worst = 0.0;
  const std::size_t plane = s.alpha.plane();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = s.alpha.data()[i];
      const double expect = a * s.foreground.data()[c * plane + i] + (1.0 - a) * s.background.data()[c * plane + i];
      worst = std::max(worst, std::abs(expect - s.composite.data()[c * plane + i]));
    }
  return worst;
}

}  // namespace tmf
