#include "tmf/matting_ops.hpp"

#include <algorithm>
#include <iostream>
#include <mutex>
#include <set>
#include <utility>

namespace tmf {
namespace {

template <typename T>
void check_mask(const BasicTensor<T>& features, const BasicTensor<T>& mask) {
  const Shape f = features.shape();
  const Shape m = mask.shape();
  if (m.c != 1 || m.n != f.n || m.h != f.h || m.w != f.w) {
    throw ShapeError("non-background pooling: mask " + m.str() + " does not match features " + f.str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T> non_background_mask(const Trimap& trimap, int out_h, int out_w) {
  BasicTensor<T> binary(Shape{1, 1, trimap.height, trimap.width});
  auto d = binary.mutable_data();
  for (std::size_t i = 0; i < trimap.labels.size(); ++i) {
    d[i] = trimap.labels[i] == TrimapLabel::Background ? T(0) : T(1);
  }
  if (out_h == trimap.height && out_w == trimap.width) return binary;
  return bilinear_resize(binary, out_h, out_w);
}

template <typename T>
BasicTensor<T> non_background_mask(const BasicTensor<T>& trimap_one_hot, int out_h, int out_w) {
  if (trimap_one_hot.c() != 3) {
    throw ShapeError("non_background_mask expects a 3-channel one-hot trimap, got " + trimap_one_hot.shape().str());
  }
  const Shape s = trimap_one_hot.shape();
  BasicTensor<T> binary(Shape{s.n, 1, s.h, s.w});
  auto d = binary.mutable_data();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* bg = trimap_one_hot.data().data() + static_cast<std::size_t>(n) * 3 * plane;
    for (std::size_t i = 0; i < plane; ++i) d[n * plane + i] = T(1) - bg[i];
  }
  if (out_h == s.h && out_w == s.w) return binary;
  return bilinear_resize(binary, out_h, out_w);
}

template <typename T>
BasicTensor<T> nbp(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel, T eps) {
  check_mask(features, mask);
  return div(avg_pool(mul(features, mask), kernel), add_scalar(avg_pool(mask, kernel), eps));
}

template <typename T>
BasicTensor<T> nbp_fast(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel, T eps) {
  check_mask(features, mask);
  // Windows without any mask support are exactly zero, as in nbp, instead of
  // table round-off divided by eps.
  BasicTensor<T> support_count;
  {
    NoGradGuard<T> no_grad;
    BasicTensor<T> nonzero(mask.shape());
    auto nz = nonzero.mutable_data();
    const auto m = mask.data();
    for (std::size_t i = 0; i < m.size(); ++i) nz[i] = m[i] != T(0) ? T(1) : T(0);
    support_count = sum_pool(nonzero, kernel);
  }
  BasicTensor<T> support(mask.shape());
  {
    auto sd = support.mutable_data();
    const auto c = support_count.data();
    for (std::size_t i = 0; i < c.size(); ++i) sd[i] = c[i] > T(0.5) ? T(1) : T(0);
  }
  BasicTensor<T> numerator = avg_pool_sat(mul(features, mask), kernel);
  return div(mul(numerator, support), add_scalar(avg_pool_sat(mask, kernel), eps));
}

template <typename T>
BasicTensor<T> nbp_sum_pooled(const BasicTensor<T>& features, const BasicTensor<T>& mask, int kernel, T eps) {
  check_mask(features, mask);
  const T k2 = static_cast<T>(kernel * kernel);
  return div(sum_pool(mul(features, mask), kernel), add_scalar(sum_pool(mask, kernel), eps * k2));
}

int clamp_pool_kernel(int kernel, int h, int w) {
  const int limit = std::min(h, w);
  if (kernel <= limit) return kernel;
  const int clamped = std::max(1, limit % 2 == 1 ? limit : limit - 1);
  static std::mutex mu;
  static std::set<std::pair<int, int>> warned;
  std::lock_guard<std::mutex> lock(mu);
  if (warned.insert({kernel, limit}).second) {
    std::cerr << "warning: pooling kernel " << kernel << " exceeds feature extent " << limit << "; clamped to "
              << clamped << '\n';
  }
  return clamped;
}

void TmpConfig::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || branch_channels() <= 0) {
    throw std::invalid_argument("TmpConfig: channel counts must be positive");
  }
  if (pool_kernels.size() != 4) throw std::invalid_argument("TmpConfig: exactly 4 pooling kernels are required");
  for (int k : pool_kernels) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("TmpConfig: pooling kernel " + std::to_string(k) + " is not odd");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("TmpConfig: epsilon must be positive");
}

namespace {

template <typename T>
void build_context(const TmpConfig& cfg, Rng& rng, std::vector<Conv2dLayer<T>>& branches, ConvBnAct<T>& fuse1,
                   ConvBnAct<T>& fuse2) {
  cfg.validate();
  const int reduce = cfg.branch_channels();
  for (int b = 0; b < 4; ++b) branches.emplace_back(cfg.in_channels, reduce, 1, true, Conv2dOptions{}, rng);
  fuse1 = ConvBnAct<T>(cfg.in_channels + 4 * reduce, cfg.out_channels, 3, Conv2dOptions{1, 1, 1}, rng);
  fuse2 = ConvBnAct<T>(cfg.out_channels, cfg.out_channels, 3, Conv2dOptions{1, 1, 1}, rng);
}

template <typename T>
std::size_t context_params(const std::vector<Conv2dLayer<T>>& branches, const ConvBnAct<T>& fuse1,
                           const ConvBnAct<T>& fuse2) {
  std::size_t total = fuse1.param_count() + fuse2.param_count();
  for (const auto& b : branches) total += b.param_count();
  return total;
}

template <typename T>
void context_collect(const std::string& prefix, const std::vector<Conv2dLayer<T>>& branches,
                     const ConvBnAct<T>& fuse1, const ConvBnAct<T>& fuse2, ParamList<T>& out) {
  for (std::size_t b = 0; b < branches.size(); ++b) branches[b].collect(prefix + ".branch" + std::to_string(b), out);
  fuse1.collect(prefix + ".fuse1", out);
  fuse2.collect(prefix + ".fuse2", out);
}

}  // namespace

template <typename T>
TmpBlock<T>::TmpBlock(const TmpConfig& config, Rng& rng) : config_(config) {
  build_context(config_, rng, branches_, fuse1_, fuse2_);
}

template <typename T>
BasicTensor<T> TmpBlock<T>::forward(const BasicTensor<T>& features, const BasicTensor<T>& trimap_one_hot,
                                    bool training, Trace* trace) const {
  if (features.c() != config_.in_channels) {
    throw ShapeError("TMP: expected " + std::to_string(config_.in_channels) + " channels, got " + features.shape().str());
  }
  const BasicTensor<T> mask = non_background_mask(trimap_one_hot, features.h(), features.w());
  if (trimap_one_hot.n() != features.n()) throw ShapeError("TMP: trimap batch does not match features");
  std::vector<BasicTensor<T>> parts{features};
  if (trace) trace->mask = mask;
  const T eps = static_cast<T>(config_.epsilon);
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const int k = clamp_pool_kernel(config_.pool_kernels[b], features.h(), features.w());
    BasicTensor<T> reduced = branches_[b](features);
    BasicTensor<T> pooled = fast_pooling_ ? nbp_fast(reduced, mask, k, eps) : nbp(reduced, mask, k, eps);
    if (trace) {
      trace->reduced.push_back(reduced);
      trace->pooled.push_back(pooled);
      trace->kernels.push_back(k);
    }
    parts.push_back(std::move(pooled));
  }
  return fuse2_(fuse1_(concat(parts), training), training);
}

template <typename T>
std::size_t TmpBlock<T>::param_count() const {
  return context_params(branches_, fuse1_, fuse2_);
}

template <typename T>
void TmpBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  context_collect(prefix, branches_, fuse1_, fuse2_, out);
}

template <typename T>
PpmBlock<T>::PpmBlock(const TmpConfig& config, Rng& rng) : config_(config) {
  build_context(config_, rng, branches_, fuse1_, fuse2_);
}

template <typename T>
BasicTensor<T> PpmBlock<T>::branch_pooled(const BasicTensor<T>& features, int b) const {
  return branches_[b](adaptive_avg_pool(features, kPpmBins[b]));
}

template <typename T>
BasicTensor<T> PpmBlock<T>::forward(const BasicTensor<T>& features, bool training) const {
  if (features.c() != config_.in_channels) {
    throw ShapeError("PPM: expected " + std::to_string(config_.in_channels) + " channels, got " + features.shape().str());
  }
  if (features.h() < kPpmBins.back() || features.w() < kPpmBins.back()) {
    throw ShapeError("PPM: feature extent " + features.shape().str() + " is smaller than the largest bin (6)");
  }
  std::vector<BasicTensor<T>> parts{features};
  for (int b = 0; b < 4; ++b) {
    parts.push_back(bilinear_resize(branch_pooled(features, b), features.h(), features.w()));
  }
  return fuse2_(fuse1_(concat(parts), training), training);
}

template <typename T>
std::size_t PpmBlock<T>::param_count() const {
  return context_params(branches_, fuse1_, fuse2_);
}

template <typename T>
void PpmBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  context_collect(prefix, branches_, fuse1_, fuse2_, out);
}

std::string to_string(GlobalSource source) {
  switch (source) {
    case GlobalSource::TmpOutput: return "tmp_output";
    case GlobalSource::HighFeaturePool: return "high_feature_pool";
    case GlobalSource::C5Pool: return "c5_pool";
    case GlobalSource::None: return "none";
  }
  return "none";
}

GlobalSource parse_global_source(const std::string& text) {
  if (text == "tmp_output") return GlobalSource::TmpOutput;
  if (text == "high_feature_pool") return GlobalSource::HighFeaturePool;
  if (text == "c5_pool") return GlobalSource::C5Pool;
  if (text == "none") return GlobalSource::None;
  throw std::invalid_argument("unknown global source '" + text + "'");
}

int GlfConfig::effective_global_channels() const {
  switch (global_source) {
    case GlobalSource::HighFeaturePool: return high_channels;
    case GlobalSource::None: return 0;
    default: return global_channels;
  }
}

void GlfConfig::validate() const {
  if (low_channels <= 0 || high_channels <= 0 || internal_channels <= 0 || out_channels <= 0 || group_width <= 0) {
    throw std::invalid_argument("GlfConfig: channel counts must be positive");
  }
  if (high_channels % 4 != 0) {
    throw std::invalid_argument("GlfConfig: high-level channels (" + std::to_string(high_channels) +
                                ") must be divisible by 4 for pixel shuffle");
  }
  if (internal_channels % group_width != 0) {
    throw std::invalid_argument("GlfConfig: internal channels (" + std::to_string(internal_channels) +
                                ") must be divisible by the group width (" + std::to_string(group_width) + ")");
  }
  if ((global_source == GlobalSource::TmpOutput || global_source == GlobalSource::C5Pool) && global_channels <= 0) {
    throw std::invalid_argument("GlfConfig: global channels must be positive for " + to_string(global_source));
  }
}

template <typename T>
GlfBlock<T>::GlfBlock(const GlfConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int c3 = config_.internal_channels;
  distribute_ = Conv2dLayer<T>(config_.high_channels / 4 + config_.low_channels, c3, 1, true, {}, rng);
  local_ = Conv2dLayer<T>(c3, c3, 1, true, {}, rng);
  if (config_.global_source != GlobalSource::None) {
    global_ = Conv2dLayer<T>(config_.effective_global_channels(), c3, 1, true, {}, rng);
  }
  kernel_ = Conv2dLayer<T>(c3, config_.groups() * 9, 3, true, Conv2dOptions{1, 1, 1}, rng);
  mix_ = Conv2dLayer<T>(c3, config_.out_channels, 1, false, {}, rng);
  mix_bn_ = BatchNormLayer<T>(config_.out_channels);
}

template <typename T>
BasicTensor<T> GlfBlock<T>::distribute(const BasicTensor<T>& high, const BasicTensor<T>& low) const {
  if (high.h() * 2 != low.h() || high.w() * 2 != low.w() || high.n() != low.n()) {
    throw ShapeError("GLF: high-level feature " + high.shape().str() + " must be half the extent of low-level " +
                     low.shape().str());
  }
  if (high.c() != config_.high_channels || low.c() != config_.low_channels) {
    throw ShapeError("GLF: channel mismatch, got high " + high.shape().str() + " low " + low.shape().str());
  }
  return distribute_(concat(std::vector<BasicTensor<T>>{pixel_shuffle(high), low}));
}

template <typename T>
KernelField<T> GlfBlock<T>::generate_kernels(const BasicTensor<T>& x, const BasicTensor<T>& global) const {
  BasicTensor<T> pre = local_(x);
  if (config_.global_source != GlobalSource::None) {
    if (!global.defined()) throw std::invalid_argument("GLF: global feature required for " + to_string(config_.global_source));
    if (global.c() != config_.effective_global_channels() || global.h() != 1 || global.w() != 1 ||
        global.n() != x.n()) {
      throw ShapeError("GLF: global feature " + global.shape().str() + " expected " +
                       std::to_string(config_.effective_global_channels()) + " channels");
    }
    pre = add(pre, global_(global));
  }
  return KernelField<T>{kernel_(leaky_relu(pre, T(0.01))), config_.groups()};
}

template <typename T>
BasicTensor<T> GlfBlock<T>::spatial_fusion(const BasicTensor<T>& x, const KernelField<T>& kernels) {
  return dynamic_filter3x3(x, kernels.values, kernels.groups);
}

template <typename T>
BasicTensor<T> GlfBlock<T>::mix(const BasicTensor<T>& y, bool training) const {
  return leaky_relu(mix_bn_(mix_(y), training), T(0.01));
}

template <typename T>
BasicTensor<T> GlfBlock<T>::forward(const BasicTensor<T>& high, const BasicTensor<T>& low,
                                    const BasicTensor<T>& global, bool training, KernelField<T>* kernels_out) const {
  const BasicTensor<T> x = distribute(high, low);
  BasicTensor<T> g = global;
  if (config_.global_source == GlobalSource::HighFeaturePool) g = global_avg_pool(high);
  KernelField<T> k = generate_kernels(x, g);
  BasicTensor<T> out = mix(spatial_fusion(x, k), training);
  if (kernels_out) *kernels_out = std::move(k);
  return out;
}

template <typename T>
std::size_t GlfBlock<T>::param_count() const {
  std::size_t total = distribute_.param_count() + local_.param_count() + kernel_.param_count() + mix_.param_count() +
                      mix_bn_.param_count();
  if (config_.global_source != GlobalSource::None) total += global_.param_count();
  return total;
}

template <typename T>
void GlfBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  distribute_.collect(prefix + ".distribute", out);
  local_.collect(prefix + ".local", out);
  if (config_.global_source != GlobalSource::None) global_.collect(prefix + ".global", out);
  kernel_.collect(prefix + ".kernel", out);
  mix_.collect(prefix + ".mix", out);
  mix_bn_.collect(prefix + ".mix_bn", out);
}

template <typename T>
StaticFusionBlock<T>::StaticFusionBlock(int low_channels, int high_channels, int out_channels, Rng& rng)
    : conv_(high_channels + low_channels, out_channels, 3, true, Conv2dOptions{1, 1, 1}, rng),
      low_channels_(low_channels),
      high_channels_(high_channels) {}

template <typename T>
BasicTensor<T> StaticFusionBlock<T>::forward(const BasicTensor<T>& high, const BasicTensor<T>& low) const {
  if (high.c() != high_channels_ || low.c() != low_channels_ || high.n() != low.n()) {
    throw ShapeError("static fusion: channel mismatch, got high " + high.shape().str() + " low " + low.shape().str());
  }
  BasicTensor<T> up = bilinear_resize(high, low.h(), low.w());
  return leaky_relu(conv_(concat(std::vector<BasicTensor<T>>{up, low})), T(0.01));
}

#define TMF_MATTING_INSTANTIATE(T)                                                                          \
  template BasicTensor<T> non_background_mask<T>(const Trimap&, int, int);                                  \
  template BasicTensor<T> non_background_mask<T>(const BasicTensor<T>&, int, int);                          \
  template BasicTensor<T> nbp<T>(const BasicTensor<T>&, const BasicTensor<T>&, int, T);                     \
  template BasicTensor<T> nbp_fast<T>(const BasicTensor<T>&, const BasicTensor<T>&, int, T);                \
  template BasicTensor<T> nbp_sum_pooled<T>(const BasicTensor<T>&, const BasicTensor<T>&, int, T);          \
  template class TmpBlock<T>;                                                                               \
  template class PpmBlock<T>;                                                                               \
  template class GlfBlock<T>;                                                                               \
  template class StaticFusionBlock<T>;

TMF_MATTING_INSTANTIATE(float)
TMF_MATTING_INSTANTIATE(double)

}  // namespace tmf
