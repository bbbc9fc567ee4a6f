#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "tmf/image.hpp"
#include "tmf/layers.hpp"

namespace tmf {

inline constexpr double kNbpEpsilon = 1e-6;

// Binary non-background indicator (1 wherever the label is not Background),
// bilinearly resized to (out_h, out_w). Shape (1, 1, out_h, out_w).
template <typename T>
BasicTensor<T> non_background_mask(const Trimap& trimap, int out_h, int out_w);
// Same from a batched one-hot trimap (N, 3, H, W): 1 - background channel.
template <typename T>
BasicTensor<T> non_background_mask(const BasicTensor<T>& trimap_one_hot, int out_h, int out_w);

// Mask-weighted stride-1 pooling:
//   Pool_k(features * mask) / (Pool_k(mask) + eps)
// features is (N, C, H, W), mask is (N, 1, H, W). Direct window sums.
template <typename T>
BasicTensor<T> nbp(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel,
                   T eps = static_cast<T>(kNbpEpsilon));
// Identical contract, evaluated with two summed-area tables.
template <typename T>
BasicTensor<T> nbp_fast(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel,
                        T eps = static_cast<T>(kNbpEpsilon));
// Window sums in place of window averages, with eps scaled by k*k so the
// expression is algebraically identical to nbp.
template <typename T>
BasicTensor<T> nbp_sum_pooled(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel,
                              T eps = static_cast<T>(kNbpEpsilon));

// Largest odd kernel <= min(h, w) when `kernel` does not fit; logs a one-time
// warning per (kernel, extent) pair.
int clamp_pool_kernel(int kernel, int h, int w);

struct TmpConfig {
  int in_channels = 0;
  int reduce_channels = 0;  // per branch; 0 selects in_channels / 4
  std::vector<int> pool_kernels{31, 17, 11, 5};
  int out_channels = 0;
  double epsilon = kNbpEpsilon;

  int branch_channels() const { return reduce_channels > 0 ? reduce_channels : in_channels / 4; }
  void validate() const;
};

// Trimap-guided multi-scale context: four 1x1 reductions, each followed by a
// non-background pooling unit, concatenated with the input and fused by two
// 3x3 conv-BN-leaky layers.
template <typename T>
class TmpBlock {
 public:
  struct Trace {
    BasicTensor<T> mask;
    std::vector<BasicTensor<T>> reduced;
    std::vector<BasicTensor<T>> pooled;
    std::vector<int> kernels;  // after clamping
  };

  TmpBlock() = default;
  TmpBlock(const TmpConfig& config, Rng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& features, const BasicTensor<T>& trimap_one_hot, bool training,
                         Trace* trace = nullptr) const;

  const TmpConfig& config() const { return config_; }
  std::size_t param_count() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
  void set_fast_pooling(bool on) { fast_pooling_ = on; }

  std::vector<Conv2dLayer<T>>& branches() { return branches_; }
  const std::vector<Conv2dLayer<T>>& branches() const { return branches_; }
  ConvBnAct<T>& fuse1() { return fuse1_; }
  const ConvBnAct<T>& fuse1() const { return fuse1_; }
  ConvBnAct<T>& fuse2() { return fuse2_; }
  const ConvBnAct<T>& fuse2() const { return fuse2_; }

 private:
  TmpConfig config_;
  std::vector<Conv2dLayer<T>> branches_;
  ConvBnAct<T> fuse1_, fuse2_;
  bool fast_pooling_ = true;
};

inline constexpr std::array<int, 4> kPpmBins{1, 2, 3, 6};

// Pyramid pooling baseline with bins {1, 2, 3, 6}; parameter layout mirrors
// TmpBlock exactly (same config, pool_kernels unused).
template <typename T>
class PpmBlock {
 public:
  PpmBlock() = default;
  PpmBlock(const TmpConfig& config, Rng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& features, bool training) const;
  // Branch b before the bilinear resize back to the input extent.
  BasicTensor<T> branch_pooled(const BasicTensor<T>& features, int b) const;

  const TmpConfig& config() const { return config_; }
  std::size_t param_count() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  std::vector<Conv2dLayer<T>>& branches() { return branches_; }
  const std::vector<Conv2dLayer<T>>& branches() const { return branches_; }
  ConvBnAct<T>& fuse1() { return fuse1_; }
  const ConvBnAct<T>& fuse1() const { return fuse1_; }
  ConvBnAct<T>& fuse2() { return fuse2_; }
  const ConvBnAct<T>& fuse2() const { return fuse2_; }

 private:
  TmpConfig config_;
  std::vector<Conv2dLayer<T>> branches_;
  ConvBnAct<T> fuse1_, fuse2_;
};

enum class GlobalSource { TmpOutput, HighFeaturePool, C5Pool, None };

std::string to_string(GlobalSource source);
GlobalSource parse_global_source(const std::string& text);

struct GlfConfig {
  int low_channels = 0;       // C1, channels of X_l
  int high_channels = 0;      // C2, channels of X_h (divisible by 4)
  int internal_channels = 0;  // C3
  int group_width = 16;
  int out_channels = 0;     // C
  int global_channels = 0;  // C'; ignored for HighFeaturePool (uses C2) and None
  GlobalSource global_source = GlobalSource::TmpOutput;

  int groups() const { return internal_channels / group_width; }
  int effective_global_channels() const;
  void validate() const;
};

// Per-pixel grouped 3x3 kernels, (N, groups * 9, H, W). Channel
// g*9 + (u+1)*3 + (v+1) holds the tap at offset (u, v) for group g.
template <typename T>
struct KernelField {
  BasicTensor<T> values;
  int groups = 0;

  T at(int n, int g, int u, int v, int y, int x) const { return values(n, g * 9 + (u + 1) * 3 + (v + 1), y, x); }
};

// Global-local context-aware fusion.
template <typename T>
class GlfBlock {
 public:
  GlfBlock() = default;
  GlfBlock(const GlfConfig& config, Rng& rng);

  // conv1x1(concat(pixel_shuffle(X_h), X_l)) -> C3 channels.
  BasicTensor<T> distribute(const BasicTensor<T>& high, const BasicTensor<T>& low) const;
  // conv3x3(leaky(conv1x1(X) (+) conv1x1(G))); `global` is (N, C', 1, 1) or
  // undefined. The global branch is skipped entirely for GlobalSource::None.
  KernelField<T> generate_kernels(const BasicTensor<T>& x, const BasicTensor<T>& global) const;
  static BasicTensor<T> spatial_fusion(const BasicTensor<T>& x, const KernelField<T>& kernels);
  // leaky(BN(conv1x1(Y)))
  BasicTensor<T> mix(const BasicTensor<T>& y, bool training) const;

  // Full chain. For HighFeaturePool the global vector is pooled from `high`
  // and `global` is ignored.
  BasicTensor<T> forward(const BasicTensor<T>& high, const BasicTensor<T>& low, const BasicTensor<T>& global,
                         bool training, KernelField<T>* kernels_out = nullptr) const;

  const GlfConfig& config() const { return config_; }
  std::size_t param_count() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  Conv2dLayer<T>& distribute_conv() { return distribute_; }
  const Conv2dLayer<T>& distribute_conv() const { return distribute_; }
  Conv2dLayer<T>& local_conv() { return local_; }
  const Conv2dLayer<T>& local_conv() const { return local_; }
  Conv2dLayer<T>& global_conv() { return global_; }
  const Conv2dLayer<T>& global_conv() const { return global_; }
  Conv2dLayer<T>& kernel_conv() { return kernel_; }
  const Conv2dLayer<T>& kernel_conv() const { return kernel_; }
  Conv2dLayer<T>& mix_conv() { return mix_; }
  const Conv2dLayer<T>& mix_conv() const { return mix_; }
  BatchNormLayer<T>& mix_bn() { return mix_bn_; }
  const BatchNormLayer<T>& mix_bn() const { return mix_bn_; }

 private:
  GlfConfig config_;
  Conv2dLayer<T> distribute_, local_, global_, kernel_, mix_;
  BatchNormLayer<T> mix_bn_;
};

// Baseline fusion: bilinear upsample of X_h to X_l's extent, concat, 3x3 conv, leaky ReLU.
template <typename T>
class StaticFusionBlock {
 public:
  StaticFusionBlock() = default;
  StaticFusionBlock(int low_channels, int high_channels, int out_channels, Rng& rng);

  BasicTensor<T> forward(const BasicTensor<T>& high, const BasicTensor<T>& low) const;

  std::size_t param_count() const { return conv_.param_count(); }
  void collect(const std::string& prefix, ParamList<T>& out) const { conv_.collect(prefix + ".conv", out); }
  Conv2dLayer<T>& conv() { return conv_; }
  const Conv2dLayer<T>& conv() const { return conv_; }
  int low_channels() const { return low_channels_; }
  int high_channels() const { return high_channels_; }

 private:
  Conv2dLayer<T> conv_;
  int low_channels_ = 0;
  int high_channels_ = 0;
};

struct KernelMapFile {
  std::string path;
  int group = 0;
  int u = 0;
  int v = 0;
  double min = 0.0;  // slice minimum mapped to 0
  double max = 0.0;  // slice maximum mapped to 255
};

// One 8-bit grayscale PNG per (group, u, v) slice of batch item 0, min-max
// normalised per slice (a constant slice is written as mid-gray).
// Files are named g{group}_u{u+1}_v{v+1}.png inside `directory`.
std::vector<KernelMapFile> export_kernel_maps(const KernelField<float>& kernels, const std::string& directory);

}  // namespace tmf
