#pragma once

#include <cmath>
#include <vector>

#include "tmf/rng.hpp"
#include "tmf/tensor.hpp"

namespace tmf::test {

template <typename T = float>
BasicTensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return BasicTensor<T>(s, std::move(v));
}

inline Tensor from_values(Shape s, const std::vector<double>& v) {
  return Tensor(s, std::vector<float>(v.begin(), v.end()));
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const std::vector<double>& b) {
  double m = a.numel() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < b.size() && i < a.numel(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b[i]));
  return m;
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

template <typename T>
bool bitwise_equal(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace tmf::test
