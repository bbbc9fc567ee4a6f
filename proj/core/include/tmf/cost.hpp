#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmf/network.hpp"

namespace tmf {

struct CostRow {
  std::string module;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;       // every counted operation
  std::uint64_t conv_macs = 0;  // convolution share of `macs`
};

// Per-module parameter and multiply-accumulate counts for batch size 1.
// Operations are counted the way MMCV's complexity tool does: a convolution
// costs out_elems * in_ch * k^2, pooling costs the input size, upsampling the
// output size, batch norm twice the tensor size, activations and elementwise
// ops the tensor size, and the per-pixel 3x3 filtering H * W * C3 * 9.
struct CostReport {
  int input_h = 0;
  int input_w = 0;
  std::vector<CostRow> rows;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;

  bool consistent() const;
  const CostRow& row(const std::string& module) const;
  double gflops() const { return static_cast<double>(total_macs) * 1e-9; }
  std::string to_json() const;
};

template <typename T>
CostReport count_params(const Network<T>& net);
template <typename T>
CostReport count_flops(const Network<T>& net, int input_h, int input_w);

}  // namespace tmf
