#pragma once

#include <cstdint>
#include <vector>

#include "tmf/tensor.hpp"

namespace tmf {

// Planar float image (channel-major), values nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f)
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {}

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(height_) * width_; }

  float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool same_size(const Image& o) const { return height_ == o.height_ && width_ == o.width_; }

  Image crop(int top, int left, int height, int width) const;
  Image flipped_horizontal() const;

  bool operator==(const Image&) const = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Single-channel opacity field in [0, 1].
using AlphaMatte = Image;

enum class TrimapLabel : std::uint8_t { Background = 0, Unknown = 1, Foreground = 2 };

struct Trimap {
  int height = 0;
  int width = 0;
  std::vector<TrimapLabel> labels;

  Trimap() = default;
  Trimap(int h, int w, TrimapLabel fill = TrimapLabel::Unknown)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  TrimapLabel& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  TrimapLabel at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count(TrimapLabel label) const;

  Trimap crop(int top, int left, int h, int w) const;
  Trimap flipped_horizontal() const;

  bool operator==(const Trimap&) const = default;
};

// (1, C, H, W) copy of an image.
Tensor to_tensor(const Image& image);
// Batch item `n` of a tensor as an image.
Image to_image(const Tensor& t, int n = 0);
// (1, 3, H, W) with channels (background, unknown, foreground).
Tensor one_hot_trimap(const Trimap& trimap);
// Argmax over the one-hot channels of batch item n.
Trimap trimap_from_one_hot(const Tensor& t, int n = 0);
// Concatenate along the batch axis (no gradient).
Tensor stack_batch(const std::vector<Tensor>& items);

}  // namespace tmf
