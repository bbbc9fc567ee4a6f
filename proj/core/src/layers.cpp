#include "tmf/layers.hpp"

#include <cmath>

namespace tmf {

template <typename T>
Conv2dLayer<T>::Conv2dLayer(int in_channels, int out_channels, int kernel, bool with_bias, Conv2dOptions options,
                            Rng& rng)
    : options_(options) {
  const int fan_in = in_channels * kernel * kernel;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> w(static_cast<std::size_t>(out_channels) * fan_in);
  for (T& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  weight_ = BasicTensor<T>(Shape{out_channels, in_channels, kernel, kernel}, std::move(w));
  weight_.set_requires_grad(true);
  if (with_bias) {
    bias_ = BasicTensor<T>(Shape{1, out_channels, 1, 1}, T(0));
    bias_.set_requires_grad(true);
  }
}

template <typename T>
void Conv2dLayer<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight_, true});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_, true});
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(int channels)
    : gamma_(Shape{1, channels, 1, 1}, T(1)),
      beta_(Shape{1, channels, 1, 1}, T(0)),
      running_mean_(Shape{1, channels, 1, 1}, T(0)),
      running_var_(Shape{1, channels, 1, 1}, T(1)) {
  gamma_.set_requires_grad(true);
  beta_.set_requires_grad(true);
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::operator()(const BasicTensor<T>& x, bool training) const {
  BasicTensor<T> rm = running_mean_;
  BasicTensor<T> rv = running_var_;
  return batch_norm(x, gamma_, beta_, rm, rv, training);
}

template <typename T>
void BatchNormLayer<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gamma", gamma_, true});
  out.push_back({prefix + ".beta", beta_, true});
  out.push_back({prefix + ".running_mean", running_mean_, false});
  out.push_back({prefix + ".running_var", running_var_, false});
}

template class Conv2dLayer<float>;
template class Conv2dLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;

}  // namespace tmf
