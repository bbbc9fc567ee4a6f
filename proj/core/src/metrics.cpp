#include "tmf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace tmf {
namespace {

void check_inputs(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region) {
  if (pred.channels() != 1 || gt.channels() != 1) throw std::invalid_argument("metrics expect single-channel mattes");
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument("metrics: prediction and ground truth differ in size");
  }
  if (region.size() != static_cast<std::size_t>(pred.height()) * pred.width()) {
    throw std::invalid_argument("metrics: region mask does not match the matte size");
  }
}

double gauss(double x, double sigma) { return std::exp(-x * x / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * M_PI)); }
double dgauss(double x, double sigma) { return -x * gauss(x, sigma) / (sigma * sigma); }

// Size of the largest 4-connected component of `on`, marked into `largest`.
void largest_component(const std::vector<std::uint8_t>& on, int h, int w, std::vector<std::uint8_t>& largest) {
  std::vector<int> label(on.size(), -1);
  std::vector<int> stack;
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (int start = 0; start < h * w; ++start) {
    if (!on[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = next;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int y = p / w, x = p % w;
      const int nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= h || nb[1] < 0 || nb[1] >= w) continue;
        const int q = nb[0] * w + nb[1];
        if (on[q] && label[q] < 0) {
          label[q] = next;
          stack.push_back(q);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }
  largest.assign(on.size(), 0);
  if (best < 0) return;
  for (std::size_t i = 0; i < on.size(); ++i) largest[i] = label[i] == best ? 1 : 0;
}

}  // namespace

RegionMask unknown_region(const Trimap& trimap) {
  RegionMask m(trimap.labels.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = trimap.labels[i] == TrimapLabel::Unknown ? 1 : 0;
  return m;
}

double metric_sad(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region) {
  check_inputs(pred, gt, region);
  double s = 0.0;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i]) s += std::abs(static_cast<double>(pred.data()[i]) - gt.data()[i]);
  return s / 1000.0;
}

double metric_mse(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region) {
  check_inputs(pred, gt, region);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    const double d = static_cast<double>(pred.data()[i]) - gt.data()[i];
    s += d * d;
    ++n;
  }
  return n == 0 ? 0.0 : s / static_cast<double>(n) * 1000.0;
}

std::vector<double> gaussian_derivative_kernel(double sigma, int& half_size) {
  half_size = static_cast<int>(std::floor(3.0 * sigma));
  const int size = 2 * half_size + 1;
  std::vector<double> k(static_cast<std::size_t>(size) * size);
  double norm = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double v = gauss(i - half_size, sigma) * dgauss(j - half_size, sigma);
      k[i * size + j] = v;
      norm += v * v;
    }
  }
  norm = std::sqrt(norm);
  for (double& v : k) v /= norm;
  return k;
}

std::vector<double> gradient_magnitude(const AlphaMatte& a, double sigma) {
  int half = 0;
  const std::vector<double> kx = gaussian_derivative_kernel(sigma, half);
  const int size = 2 * half + 1;
  const int h = a.height(), w = a.width();
  std::vector<double> mag(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
          const double k = kx[i * size + j];
          const int yy = std::clamp(y + i - half, 0, h - 1);
          const int xx = std::clamp(x + j - half, 0, w - 1);
          gx += k * a.data()[yy * w + xx];
          // transposed kernel for the y derivative
          const int ty = std::clamp(y + j - half, 0, h - 1);
          const int tx = std::clamp(x + i - half, 0, w - 1);
          gy += k * a.data()[ty * w + tx];
        }
      }
      mag[y * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

double metric_grad(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region) {
  check_inputs(pred, gt, region);
  const auto gp = gradient_magnitude(pred);
  const auto gg = gradient_magnitude(gt);
  double s = 0.0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    const double d = gp[i] - gg[i];
    s += d * d;
  }
  return s / 1000.0;
}

double metric_conn(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region) {
  check_inputs(pred, gt, region);
  const int h = pred.height(), w = pred.width();
  const std::size_t n = region.size();
  std::vector<double> l_map(n, -1.0);
  std::vector<std::uint8_t> both(n), omega;
  const int steps = static_cast<int>(std::lround(1.0 / kConnStep));
  for (int i = 1; i <= steps; ++i) {
    const double t = i * kConnStep;
    for (std::size_t p = 0; p < n; ++p) both[p] = pred.data()[p] >= t && gt.data()[p] >= t;
    largest_component(both, h, w, omega);
    for (std::size_t p = 0; p < n; ++p)
      if (l_map[p] == -1.0 && !omega[p]) l_map[p] = (i - 1) * kConnStep;
  }
  double s = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (l_map[p] == -1.0) l_map[p] = 1.0;
    if (!region[p]) continue;
    const double dp = pred.data()[p] - l_map[p];
    const double dg = gt.data()[p] - l_map[p];
    const double phi_p = 1.0 - (dp >= 0.15 ? dp : 0.0);
    const double phi_g = 1.0 - (dg >= 0.15 ? dg : 0.0);
    s += std::abs(phi_p - phi_g);
  }
  return s / 1000.0;
}

MetricRecord evaluate_matte(const std::string& image_id, const AlphaMatte& pred, const AlphaMatte& gt,
                            const Trimap& trimap) {
  const RegionMask region = unknown_region(trimap);
  return MetricRecord{image_id, metric_sad(pred, gt, region), metric_mse(pred, gt, region),
                      metric_grad(pred, gt, region), metric_conn(pred, gt, region)};
}

MetricRecord aggregate(const std::vector<MetricRecord>& records) {
  MetricRecord m{"mean"};
  if (records.empty()) return m;
  for (const auto& r : records) {
    m.sad += r.sad;
    m.mse += r.mse;
    m.grad += r.grad;
    m.conn += r.conn;
  }
  const double n = static_cast<double>(records.size());
  m.sad /= n;
  m.mse /= n;
  m.grad /= n;
  m.conn /= n;
  return m;
}

std::string metrics_to_json(const std::vector<MetricRecord>& records) {
  auto row = [](const MetricRecord& r) {
    return nlohmann::json{{"image_id", r.image_id}, {"sad", r.sad}, {"mse", r.mse}, {"grad", r.grad}, {"conn", r.conn}};
  };
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& r : records) j["images"].push_back(row(r));
  j["aggregate"] = row(aggregate(records));
  return j.dump(2);
}

}  // namespace tmf
