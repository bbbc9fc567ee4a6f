#pragma once

#include <string>
#include <vector>

#include "tmf/ops.hpp"
#include "tmf/rng.hpp"

namespace tmf {

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
  bool trainable = true;  // false for batch-norm running statistics
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  // He-uniform weights; zero bias.
  Conv2dLayer(int in_channels, int out_channels, int kernel, bool with_bias, Conv2dOptions options, Rng& rng);

  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return conv2d(x, weight_, bias_, options_); }

  int in_channels() const { return weight_.c(); }
  int out_channels() const { return weight_.n(); }
  int kernel() const { return weight_.h(); }
  const Conv2dOptions& options() const { return options_; }
  bool has_bias() const { return bias_.defined(); }
  std::size_t param_count() const { return weight_.numel() + (bias_.defined() ? bias_.numel() : 0); }

  BasicTensor<T>& weight() { return weight_; }
  BasicTensor<T>& bias() { return bias_; }
  const BasicTensor<T>& weight() const { return weight_; }
  const BasicTensor<T>& bias() const { return bias_; }

  void collect(const std::string& prefix, ParamList<T>& out) const;

 private:
  BasicTensor<T> weight_;
  BasicTensor<T> bias_;
  Conv2dOptions options_;
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  explicit BatchNormLayer(int channels);

  BasicTensor<T> operator()(const BasicTensor<T>& x, bool training) const;

  int channels() const { return gamma_.c(); }
  std::size_t param_count() const { return gamma_.numel() + beta_.numel(); }
  void collect(const std::string& prefix, ParamList<T>& out) const;

  BasicTensor<T>& gamma() { return gamma_; }
  BasicTensor<T>& beta() { return beta_; }
  BasicTensor<T>& running_mean() { return running_mean_; }
  BasicTensor<T>& running_var() { return running_var_; }

 private:
  BasicTensor<T> gamma_, beta_, running_mean_, running_var_;
};

// conv -> batch norm -> leaky ReLU(0.01)
template <typename T>
struct ConvBnAct {
  Conv2dLayer<T> conv;
  BatchNormLayer<T> bn;
  T slope = T(0.01);

  ConvBnAct() = default;
  ConvBnAct(int in, int out, int kernel, Conv2dOptions options, Rng& rng, T act_slope = T(0.01))
      : conv(in, out, kernel, false, options, rng), bn(out), slope(act_slope) {}

  BasicTensor<T> operator()(const BasicTensor<T>& x, bool training) const {
    return leaky_relu(bn(conv(x), training), slope);
  }
  std::size_t param_count() const { return conv.param_count() + bn.param_count(); }
  void collect(const std::string& prefix, ParamList<T>& out) const {
    conv.collect(prefix + ".conv", out);
    bn.collect(prefix + ".bn", out);
  }
};

}  // namespace tmf
