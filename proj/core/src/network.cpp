#include "tmf/network.hpp"

#include <stdexcept>

namespace tmf {
namespace {

constexpr std::array<int, 4> kResNetBlocks{3, 4, 6, 3};
constexpr std::array<int, 4> kResNetMid{64, 128, 256, 512};

template <typename T>
void collect_all(const std::string& prefix, const std::vector<ConvBnAct<T>>& layers, ParamList<T>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + std::to_string(i), out);
}

}  // namespace

template <typename T>
Bottleneck<T>::Bottleneck(int in, int mid, int stride, int dilation, Rng& rng)
    : reduce(in, mid, 1, Conv2dOptions{}, rng, T(0)),
      spatial(mid, mid, 3, Conv2dOptions{stride, dilation, dilation}, rng, T(0)),
      expand(mid, mid * 4, 1, false, Conv2dOptions{}, rng),
      expand_bn(mid * 4) {
  has_projection = stride != 1 || in != mid * 4;
  if (has_projection) {
    projection = Conv2dLayer<T>(in, mid * 4, 1, false, Conv2dOptions{stride, 0, 1}, rng);
    projection_bn = BatchNormLayer<T>(mid * 4);
  }
}

template <typename T>
BasicTensor<T> Bottleneck<T>::operator()(const BasicTensor<T>& x, bool training) const {
  BasicTensor<T> y = expand_bn(expand(spatial(reduce(x, training), training)), training);
  BasicTensor<T> shortcut = has_projection ? projection_bn(projection(x), training) : x;
  return leaky_relu(add(y, shortcut), T(0));
}

template <typename T>
std::size_t Bottleneck<T>::param_count() const {
  std::size_t total = reduce.param_count() + spatial.param_count() + expand.param_count() + expand_bn.param_count();
  if (has_projection) total += projection.param_count() + projection_bn.param_count();
  return total;
}

template <typename T>
void Bottleneck<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  reduce.collect(prefix + ".reduce", out);
  spatial.collect(prefix + ".spatial", out);
  expand.collect(prefix + ".expand", out);
  expand_bn.collect(prefix + ".expand_bn", out);
  if (has_projection) {
    projection.collect(prefix + ".projection", out);
    projection_bn.collect(prefix + ".projection_bn", out);
  }
}

template <typename T>
Encoder<T>::Encoder(const ArchConfig& config, Rng& rng) : kind_(config.encoder) {
  if (kind_ == EncoderKind::Toy) {
    const auto ch = config.encoder_channels();
    const std::array<int, 5> strides{2, 2, 2, 2, 1};
    int in = 6;
    for (int s = 0; s < 5; ++s) {
      toy_.emplace_back(in, ch[s], 3, Conv2dOptions{strides[s], 1, 1}, rng);
      in = ch[s];
    }
    return;
  }
  stem_ = ConvBnAct<T>(6, 64, 7, Conv2dOptions{2, 3, 1}, rng, T(0));
  int in = 64;
  for (int l = 0; l < 4; ++l) {
    const int stride = (l == 1 || l == 2) ? 2 : 1;
    const int dilation = l == 3 ? 2 : 1;
    for (int b = 0; b < kResNetBlocks[l]; ++b) {
      layers_[l].emplace_back(in, kResNetMid[l], b == 0 ? stride : 1, dilation, rng);
      in = kResNetMid[l] * 4;
    }
  }
}

template <typename T>
typename Encoder<T>::Features Encoder<T>::forward(const BasicTensor<T>& x, bool training) const {
  Features f;
  if (kind_ == EncoderKind::Toy) {
    BasicTensor<T> h = x;
    for (int s = 0; s < 5; ++s) {
      h = toy_[s](h, training);
      f[s] = h;
    }
    return f;
  }
  f[0] = stem_(x, training);
  BasicTensor<T> h = max_pool(f[0], 3, 2, 1);
  for (int l = 0; l < 4; ++l) {
    for (const auto& block : layers_[l]) h = block(h, training);
    f[l + 1] = h;
  }
  return f;
}

template <typename T>
std::size_t Encoder<T>::param_count() const {
  std::size_t total = 0;
  for (const auto& s : toy_) total += s.param_count();
  if (kind_ == EncoderKind::PaperShape) {
    total += stem_.param_count();
    for (const auto& layer : layers_)
      for (const auto& b : layer) total += b.param_count();
  }
  return total;
}

template <typename T>
void Encoder<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  if (kind_ == EncoderKind::Toy) {
    collect_all(prefix + ".stage", toy_, out);
    return;
  }
  stem_.collect(prefix + ".stem", out);
  for (int l = 0; l < 4; ++l)
    for (std::size_t b = 0; b < layers_[l].size(); ++b)
      layers_[l][b].collect(prefix + ".layer" + std::to_string(l + 1) + "." + std::to_string(b), out);
}

template <typename T>
Network<T>::Network(const ArchConfig& config, std::uint64_t seed) : config_(config) {
  config_.tmp.in_channels = config_.encoder_channels()[4];
  config_.validate();
  Rng rng(seed);
  encoder_ = Encoder<T>(config_, rng);
  if (config_.context == ContextKind::Tmp) {
    tmp_ = TmpBlock<T>(config_.tmp, rng);
  } else {
    ppm_ = PpmBlock<T>(config_.tmp, rng);
  }
  if (config_.uses_global(GlobalSource::C5Pool)) {
    c5_projection_ = Conv2dLayer<T>(config_.tmp.in_channels, config_.global_channels(), 1, true, {}, rng);
  }
  const auto enc = config_.encoder_channels();
  const std::array<int, 3> lows{enc[1], enc[0], 6};
  int high = config_.tmp.out_channels;
  for (int s = 0; s < 3; ++s) {
    const auto& st = config_.stages[s];
    if (st.kind == FusionKind::Glf) {
      glf_[s] = GlfBlock<T>(config_.glf_config(s), rng);
    } else {
      static_[s] = StaticFusionBlock<T>(lows[s], high, st.out_channels, rng);
    }
    high = st.out_channels;
  }
  head_hidden_ = Conv2dLayer<T>(high, config_.head_channels, 3, true, Conv2dOptions{1, 1, 1}, rng);
  head_out_ = Conv2dLayer<T>(config_.head_channels, 1, 3, true, Conv2dOptions{1, 1, 1}, rng);
  // Start the prediction near 0.5 so the clamp passes gradient from the first step.
  for (T& w : head_out_.weight().mutable_data()) w *= T(0.1);
  head_out_.bias().mutable_data()[0] = T(0.5);
}

template <typename T>
BasicTensor<T> Network<T>::network_input(const BasicTensor<T>& image, const BasicTensor<T>& trimap_one_hot) const {
  if (image.c() != 3 || trimap_one_hot.c() != 3) {
    throw ShapeError("network expects a 3-channel image and a 3-channel one-hot trimap, got " + image.shape().str() +
                     " and " + trimap_one_hot.shape().str());
  }
  if (image.n() != trimap_one_hot.n() || image.h() != trimap_one_hot.h() || image.w() != trimap_one_hot.w()) {
    throw ShapeError("image " + image.shape().str() + " and trimap " + trimap_one_hot.shape().str() +
                     " differ in size");
  }
  if (image.h() % 16 != 0 || image.w() % 16 != 0) {
    throw ShapeError("input extent " + std::to_string(image.h()) + "x" + std::to_string(image.w()) +
                     " is not divisible by 16; pad the input first");
  }
  return concat(std::vector<BasicTensor<T>>{image, trimap_one_hot});
}

template <typename T>
typename Encoder<T>::Features Network<T>::encode(const BasicTensor<T>& input) const {
  return encoder_.forward(input, training_);
}

template <typename T>
BasicTensor<T> Network<T>::context(const BasicTensor<T>& c5, const BasicTensor<T>& trimap_one_hot) const {
  if (config_.context == ContextKind::Tmp) return tmp_.forward(c5, trimap_one_hot, training_);
  return ppm_.forward(c5, training_);
}

template <typename T>
BasicTensor<T> Network<T>::decode(const typename Encoder<T>::Features& features, const BasicTensor<T>& input,
                                  const BasicTensor<T>& context, NetworkTrace<T>* trace) const {
  BasicTensor<T> g_tmp, g_c5;
  if (config_.uses_global(GlobalSource::TmpOutput)) g_tmp = global_avg_pool(context);
  if (config_.uses_global(GlobalSource::C5Pool)) g_c5 = c5_projection_(global_avg_pool(features[4]));
  if (trace) {
    trace->encoder = features;
    trace->context = context;
    trace->global_tmp = g_tmp;
    trace->global_c5 = g_c5;
  }
  BasicTensor<T> h = context;
  if (config_.stages[0].kind == FusionKind::Glf) h = bilinear_resize(h, h.h() * 2, h.w() * 2);
  const std::array<BasicTensor<T>, 3> lows{features[1], features[0], input};
  for (int s = 0; s < 3; ++s) {
    const auto& st = config_.stages[s];
    if (st.kind == FusionKind::Glf) {
      const BasicTensor<T>& g = st.global_source == GlobalSource::TmpOutput ? g_tmp
                                : st.global_source == GlobalSource::C5Pool  ? g_c5
                                                                            : BasicTensor<T>();
      KernelField<T> k;
      h = glf_[s].forward(h, lows[s], g, training_, trace ? &k : nullptr);
      if (trace) trace->kernels[s] = std::move(k);
    } else {
      h = static_[s].forward(h, lows[s]);
    }
    if (trace) trace->stages[s] = h;
  }
  return clamp(head_out_(leaky_relu(head_hidden_(h), T(0.01))), T(0), T(1));
}

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& image, const BasicTensor<T>& trimap_one_hot,
                                   NetworkTrace<T>* trace) const {
  const BasicTensor<T> input = network_input(image, trimap_one_hot);
  const auto features = encode(input);
  return decode(features, input, context(features[4], trimap_one_hot), trace);
}

template <typename T>
ParamList<T> Network<T>::named_tensors() const {
  ParamList<T> out;
  encoder_.collect("encoder", out);
  if (config_.context == ContextKind::Tmp) {
    tmp_.collect("context.tmp", out);
  } else {
    ppm_.collect("context.ppm", out);
  }
  if (config_.uses_global(GlobalSource::C5Pool)) c5_projection_.collect("global.c5_projection", out);
  for (int s = 0; s < 3; ++s) {
    const std::string prefix = kStageNames[s];
    if (config_.stages[s].kind == FusionKind::Glf) {
      glf_[s].collect(prefix + ".glf", out);
    } else {
      static_[s].collect(prefix + ".static", out);
    }
  }
  head_hidden_.collect("head.hidden", out);
  head_out_.collect("head.out", out);
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> Network<T>::trainable_parameters() const {
  std::vector<BasicTensor<T>> out;
  for (const auto& nt : named_tensors())
    if (nt.trainable) out.push_back(nt.tensor);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, std::size_t>> Network<T>::module_param_counts() const {
  std::vector<std::pair<std::string, std::size_t>> rows;
  rows.emplace_back("encoder", encoder_.param_count());
  rows.emplace_back("context", config_.context == ContextKind::Tmp ? tmp_.param_count() : ppm_.param_count());
  rows.emplace_back("global",
                    config_.uses_global(GlobalSource::C5Pool) ? c5_projection_.param_count() : std::size_t{0});
  for (int s = 0; s < 3; ++s) {
    const bool glf = config_.stages[s].kind == FusionKind::Glf;
    rows.emplace_back(kStageNames[s], glf ? glf_[s].param_count() : static_[s].param_count());
  }
  rows.emplace_back("head", head_hidden_.param_count() + head_out_.param_count());
  return rows;
}

template <typename T>
std::size_t Network<T>::param_count() const {
  std::size_t total = 0;
  for (const auto& [name, count] : module_param_counts()) total += count;
  return total;
}

template <typename T>
std::uint64_t Network<T>::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& nt : named_tensors()) {
    feed(nt.name);
    feed(nt.tensor.shape().str());
    feed(nt.trainable ? "p" : "b");
  }
  return h;
}

AlphaMatte predict(const Network<float>& net, const Image& image, const Trimap& trimap) {
  NoGradGuard<float> guard;
  const Tensor out = net.forward(to_tensor(image), one_hot_trimap(trimap));
  return to_image(out);
}

template struct Bottleneck<float>;
template struct Bottleneck<double>;
template class Encoder<float>;
template class Encoder<double>;
template class Network<float>;
template class Network<double>;

}  // namespace tmf
