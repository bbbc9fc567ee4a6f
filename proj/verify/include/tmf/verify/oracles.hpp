#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmf/image.hpp"
#include "tmf/tensor.hpp"

// Straightforward nested-loop reference implementations. They share no code
// with the library kernels and are only used to cross-check them.
namespace tmf::verify {

template <typename T>
std::vector<double> nbp_reference(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel, double eps);

template <typename T>
std::vector<double> dynamic_filter_reference(const BasicTensor<T>& x, const BasicTensor<T>& kernels, int groups);

template <typename T>
std::vector<double> conv2d_reference(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                                     int stride, int padding, int dilation);

template <typename T>
std::vector<double> bilinear_reference(const BasicTensor<T>& x, int out_h, int out_w);

template <typename T>
std::vector<double> adaptive_avg_pool_reference(const BasicTensor<T>& x, int bins);

template <typename T>
std::vector<double> pixel_shuffle_reference(const BasicTensor<T>& x);

// Brute-force square-element morphology; out-of-image pixels are ignored.
std::vector<std::uint8_t> dilate_reference(const std::vector<std::uint8_t>& mask, int h, int w, int k);
std::vector<std::uint8_t> erode_reference(const std::vector<std::uint8_t>& mask, int h, int w, int k);
Trimap trimap_reference(const AlphaMatte& alpha, int k_dilate, int k_erode, double delta = 1e-3);

struct OracleReport {
  std::string scope;
  int trials = 0;
  double max_abs_diff = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

// nbp_fast and nbp (float) against the reference on random H, W <= 64 and
// k in {3, 5, 11, 17, 31}.
OracleReport nbp_oracle(int trials, std::uint64_t seed, double tolerance = 1e-5);
// GLF spatial fusion (float) against the loop reference, N in {1, 2, 4}.
OracleReport fusion_oracle(int trials, std::uint64_t seed, double tolerance = 1e-5);
// Metrics on every case of the fixture file against the golden file.
OracleReport metrics_oracle(const std::string& fixture_path, const std::string& golden_path,
                            double tolerance = 1e-6);

}  // namespace tmf::verify
