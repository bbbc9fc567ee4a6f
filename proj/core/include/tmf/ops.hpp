#pragma once

// Differentiable tensor operations. Every op is a pure function of its inputs;
// when a tape is current and an input requires a gradient the op appends its
// backward closure to that tape.

#include <cstdint>
#include <vector>

#include "tmf/tensor.hpp"

namespace tmf {

// ---- elementwise, with NCHW broadcasting (each operand extent equals the
// output extent or is 1) ----
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T value);
// 1 - x
template <typename T> BasicTensor<T> one_minus(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> square(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sqrt(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> abs(const BasicTensor<T>& x);
// sqrt(x^2 + eps^2)
template <typename T> BasicTensor<T> charbonnier(const BasicTensor<T>& x, T eps);
template <typename T> BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope = T(0.01));
// Gradient passes where lo <= x <= hi.
template <typename T> BasicTensor<T> clamp(const BasicTensor<T>& x, T lo, T hi);

// ---- reductions and layout ----
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);
// (N, C, 1, 1) per-channel spatial means.
template <typename T> BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> concat(const std::vector<BasicTensor<T>>& xs);
template <typename T> BasicTensor<T> slice_channels(const BasicTensor<T>& x, int begin, int end);
// Mirror along the width axis.
template <typename T> BasicTensor<T> flip_horizontal(const BasicTensor<T>& x);

// ---- convolution ----
struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

// Cross-correlation. weight is (out, in, k, k); bias is (1, out, 1, 1) or undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias,
                      Conv2dOptions options = {});

inline int conv_output_size(int in, int kernel, int stride, int padding, int dilation = 1) {
  return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

// Multiply-accumulates performed by conv2d on this thread since the last reset.
std::uint64_t conv_mac_counter();
void reset_conv_mac_counter();

// ---- pooling ----
// Stride-1 k x k average pooling with zero padding k/2; the divisor is always
// k*k, padded cells included. Direct windowed summation.
template <typename T> BasicTensor<T> avg_pool(const BasicTensor<T>& x, int kernel);
// Same contract via summed-area tables, O(H*W) per channel for any k.
template <typename T> BasicTensor<T> avg_pool_sat(const BasicTensor<T>& x, int kernel);
// Zero-padded k x k window sums (no divisor), summed-area-table implementation.
template <typename T> BasicTensor<T> sum_pool(const BasicTensor<T>& x, int kernel);
// Adaptive average pooling to bins x bins with floor/ceil bin boundaries.
template <typename T> BasicTensor<T> adaptive_avg_pool(const BasicTensor<T>& x, int bins);
template <typename T> BasicTensor<T> max_pool(const BasicTensor<T>& x, int kernel, int stride, int padding);
// Non-overlapping 2x2 mean, floor of odd extents.
template <typename T> BasicTensor<T> avg_pool2x2(const BasicTensor<T>& x);

// ---- resampling and rearrangement ----
// Half-pixel-centre bilinear resampling (align_corners = false).
template <typename T> BasicTensor<T> bilinear_resize(const BasicTensor<T>& x, int out_h, int out_w);
// Depth-to-space with ratio 2: out(n, c, 2i+di, 2j+dj) = in(n, 4c + 2di + dj, i, j).
template <typename T> BasicTensor<T> pixel_shuffle(const BasicTensor<T>& x);
// Exact inverse of pixel_shuffle.
template <typename T> BasicTensor<T> pixel_unshuffle(const BasicTensor<T>& x);
// Separable 5-tap binomial blur [1 4 6 4 1]/16 with reflect padding.
template <typename T> BasicTensor<T> binomial_blur5(const BasicTensor<T>& x);

// Per-pixel grouped 3x3 filtering. kernels is (N, groups*9, H, W) with channel
// g*9 + (u+1)*3 + (v+1) holding the tap at offset (u, v). The C channels of x
// are viewed as (C/groups, groups), so channel c belongs to group c % groups;
// all channels of a group share that group's kernels. Out-of-bounds
// neighbours contribute zero.
template <typename T>
BasicTensor<T> dynamic_filter3x3(const BasicTensor<T>& x, const BasicTensor<T>& kernels, int groups);

// ---- normalization ----
// gamma, beta are (1, C, 1, 1). running_mean / running_var are (1, C, 1, 1)
// buffers updated in place in training mode (unbiased variance, momentum
// weighting as in the usual framework convention).
template <typename T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          BasicTensor<T>& running_mean, BasicTensor<T>& running_var, bool training,
                          T momentum = T(0.1), T eps = T(1e-5));

}  // namespace tmf
