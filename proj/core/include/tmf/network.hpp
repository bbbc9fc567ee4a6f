#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tmf/arch_config.hpp"
#include "tmf/image.hpp"
#include "tmf/matting_ops.hpp"

namespace tmf {

// ResNet bottleneck: 1x1 -> 3x3 (stride, dilation) -> 1x1 (x4), projection
// shortcut when the shape changes.
template <typename T>
struct Bottleneck {
  ConvBnAct<T> reduce, spatial;
  Conv2dLayer<T> expand;
  BatchNormLayer<T> expand_bn;
  bool has_projection = false;
  Conv2dLayer<T> projection;
  BatchNormLayer<T> projection_bn;

  Bottleneck() = default;
  Bottleneck(int in, int mid, int stride, int dilation, Rng& rng);
  BasicTensor<T> operator()(const BasicTensor<T>& x, bool training) const;
  std::size_t param_count() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
class Encoder {
 public:
  using Features = std::array<BasicTensor<T>, 5>;

  Encoder() = default;
  Encoder(const ArchConfig& config, Rng& rng);

  // C1..C5 at output strides 2, 4, 8, 16, 16.
  Features forward(const BasicTensor<T>& x, bool training) const;
  std::size_t param_count() const;
  void collect(const std::string& prefix, ParamList<T>& out) const;

  EncoderKind kind() const { return kind_; }
  const std::vector<ConvBnAct<T>>& toy_stages() const { return toy_; }
  const ConvBnAct<T>& stem() const { return stem_; }
  const std::array<std::vector<Bottleneck<T>>, 4>& layers() const { return layers_; }

 private:
  EncoderKind kind_ = EncoderKind::Toy;
  std::vector<ConvBnAct<T>> toy_;
  ConvBnAct<T> stem_;
  std::array<std::vector<Bottleneck<T>>, 4> layers_;
};

template <typename T>
struct NetworkTrace {
  typename Encoder<T>::Features encoder;
  BasicTensor<T> context;
  BasicTensor<T> global_tmp;  // (N, C', 1, 1) when some stage uses the TMP output
  BasicTensor<T> global_c5;   // projected C5 pool when some stage uses it
  std::array<KernelField<T>, 3> kernels;  // filled for GLF stages
  std::array<BasicTensor<T>, 3> stages;
};

template <typename T>
class Network {
 public:
  explicit Network(const ArchConfig& config, std::uint64_t seed = 1);

  // image (N, 3, H, W) and one-hot trimap (N, 3, H, W), H and W divisible by 16.
  BasicTensor<T> forward(const BasicTensor<T>& image, const BasicTensor<T>& trimap_one_hot,
                         NetworkTrace<T>* trace = nullptr) const;

  // Pieces of forward(), exposed for probing the decoder in isolation.
  BasicTensor<T> network_input(const BasicTensor<T>& image, const BasicTensor<T>& trimap_one_hot) const;
  typename Encoder<T>::Features encode(const BasicTensor<T>& input) const;
  BasicTensor<T> context(const BasicTensor<T>& c5, const BasicTensor<T>& trimap_one_hot) const;
  BasicTensor<T> decode(const typename Encoder<T>::Features& features, const BasicTensor<T>& input,
                        const BasicTensor<T>& context, NetworkTrace<T>* trace = nullptr) const;

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  const ArchConfig& config() const { return config_; }
  ParamList<T> named_tensors() const;
  std::vector<BasicTensor<T>> trainable_parameters() const;
  std::size_t param_count() const;
  // (module, trainable parameter count) for encoder, context, global, F1..F3, head.
  std::vector<std::pair<std::string, std::size_t>> module_param_counts() const;
  // FNV-1a over parameter names and shapes.
  std::uint64_t fingerprint() const;

  const Encoder<T>& encoder() const { return encoder_; }
  const TmpBlock<T>& tmp() const { return tmp_; }
  const PpmBlock<T>& ppm() const { return ppm_; }
  TmpBlock<T>& tmp() { return tmp_; }
  const Conv2dLayer<T>& c5_projection() const { return c5_projection_; }
  const GlfBlock<T>& glf(int stage) const { return glf_[stage]; }
  const StaticFusionBlock<T>& static_fusion(int stage) const { return static_[stage]; }
  const Conv2dLayer<T>& head_hidden() const { return head_hidden_; }
  const Conv2dLayer<T>& head_out() const { return head_out_; }

 private:
  ArchConfig config_;
  bool training_ = false;
  Encoder<T> encoder_;
  TmpBlock<T> tmp_;
  PpmBlock<T> ppm_;
  Conv2dLayer<T> c5_projection_;
  std::array<GlfBlock<T>, 3> glf_;
  std::array<StaticFusionBlock<T>, 3> static_;
  Conv2dLayer<T> head_hidden_, head_out_;
};

// Single-image eval-mode inference; input extents must be divisible by 16.
AlphaMatte predict(const Network<float>& net, const Image& image, const Trimap& trimap);

}  // namespace tmf
