#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmf/image.hpp"

namespace tmf {

// Row-major 0/1 selection of the evaluated pixels.
using RegionMask = std::vector<std::uint8_t>;

RegionMask unknown_region(const Trimap& trimap);

// pred and gt are single-channel mattes in [0, 1] of identical size. An empty
// region yields 0 for every metric.
double metric_sad(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region);
double metric_mse(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region);
double metric_grad(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region);
double metric_conn(const AlphaMatte& pred, const AlphaMatte& gt, const RegionMask& region);

inline constexpr double kGradSigma = 1.4;
inline constexpr double kConnStep = 0.1;

// First-order Gaussian-derivative filter along x (columns), L2-normalised,
// half size floor(3 * sigma). Row-major, (2 * half + 1)^2 taps.
std::vector<double> gaussian_derivative_kernel(double sigma, int& half_size);
// |grad| of `a` with replicate padding.
std::vector<double> gradient_magnitude(const AlphaMatte& a, double sigma = kGradSigma);

struct MetricRecord {
  std::string image_id;
  double sad = 0.0;
  double mse = 0.0;
  double grad = 0.0;
  double conn = 0.0;
};

MetricRecord evaluate_matte(const std::string& image_id, const AlphaMatte& pred, const AlphaMatte& gt,
                            const Trimap& trimap);
// Per-metric mean, labelled "mean".
MetricRecord aggregate(const std::vector<MetricRecord>& records);
// {"images": [...], "aggregate": {...}}
std::string metrics_to_json(const std::vector<MetricRecord>& records);

}  // namespace tmf
