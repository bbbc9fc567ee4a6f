#pragma once

#include "tmf/image.hpp"
#include "tmf/ops.hpp"

namespace tmf {

inline constexpr double kLossEpsilon = 1e-6;

struct LossWeights {
  double alpha = 0.5;
  double composition = 1.5;
  double laplacian = 0.2;

  void validate() const;
};

// Unknown-pixel indicator, (N, 1, H, W) of 0/1 values.
template <typename T>
struct BasicEvalRegion {
  BasicTensor<T> mask;
  double count = 0.0;

  static BasicEvalRegion from_trimap(const Trimap& trimap);
  // From a batched one-hot trimap (N, 3, H, W): the unknown channel.
  static BasicEvalRegion from_one_hot(const BasicTensor<T>& trimap_one_hot);
  static BasicEvalRegion from_mask(const BasicTensor<T>& mask);
  bool empty() const { return count == 0.0; }
};
using EvalRegion = BasicEvalRegion<float>;

// Mean over the region of sqrt((pred - gt)^2 + eps^2). Empty region -> 0.
template <typename T>
BasicTensor<T> alpha_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt, const BasicEvalRegion<T>& region);

// Same robust L1 between pred*F + (1-pred)*B and the observed image, averaged
// over region pixels and the three colour channels.
template <typename T>
BasicTensor<T> composition_loss(const BasicTensor<T>& pred, const BasicTensor<T>& fg, const BasicTensor<T>& bg,
                                const BasicTensor<T>& image, const BasicEvalRegion<T>& region);

// Number of pyramid levels used for an h x w input: 5 from 32 px upwards,
// one fewer for every halving below that.
int laplacian_levels(int h, int w);

// Levels 0..L-2 hold x_l - blur(x_l) with x_{l+1} = avgpool2x2(blur(x_l)); the
// last level holds the low-pass residual x_{L-1}.
template <typename T>
std::vector<BasicTensor<T>> laplacian_pyramid(const BasicTensor<T>& x, int levels);

// sum_l 2^l * mean |Lap_l(pred) - Lap_l(gt)| over the full image.
template <typename T>
BasicTensor<T> laplacian_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt);

template <typename T>
struct LossBreakdown {
  BasicTensor<T> total;
  double alpha = 0.0;
  double composition = 0.0;
  double laplacian = 0.0;
};

template <typename T>
LossBreakdown<T> total_loss(const BasicTensor<T>& pred, const BasicTensor<T>& gt, const BasicTensor<T>& fg,
                            const BasicTensor<T>& bg, const BasicTensor<T>& image, const BasicEvalRegion<T>& region,
                            const LossWeights& weights = {});

}  // namespace tmf
