#include "tmf/image.hpp"

#include <algorithm>
#include <stdexcept>

namespace tmf {

Image Image::crop(int top, int left, int height, int width) const {
  if (top < 0 || left < 0 || top + height > height_ || left + width > width_) {
    throw std::out_of_range("Image::crop outside image bounds");
  }
  Image out(channels_, height, width);
  for (int c = 0; c < channels_; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.at(c, y, x) = at(c, top + y, left + x);
    }
  }
  return out;
}

Image Image::flipped_horizontal() const {
  Image out(channels_, height_, width_);
  for (int c = 0; c < channels_; ++c) {
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) out.at(c, y, x) = at(c, y, width_ - 1 - x);
    }
  }
  return out;
}

std::size_t Trimap::count(TrimapLabel label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

Trimap Trimap::crop(int top, int left, int h, int w) const {
  if (top < 0 || left < 0 || top + h > height || left + w > width) {
    throw std::out_of_range("Trimap::crop outside trimap bounds");
  }
  Trimap out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(y, x) = at(top + y, left + x);
  }
  return out;
}

Trimap Trimap::flipped_horizontal() const {
  Trimap out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at(y, x) = at(y, width - 1 - x);
  }
  return out;
}

Tensor to_tensor(const Image& image) {
  return Tensor(Shape{1, image.channels(), image.height(), image.width()}, image.data());
}

Image to_image(const Tensor& t, int n) {
  Image out(t.c(), t.h(), t.w());
  const std::size_t len = static_cast<std::size_t>(t.c()) * t.h() * t.w();
  const auto src = t.data().subspan(static_cast<std::size_t>(n) * len, len);
  std::copy(src.begin(), src.end(), out.data().begin());
  return out;
}

Tensor one_hot_trimap(const Trimap& trimap) {
  Tensor out(Shape{1, 3, trimap.height, trimap.width});
  auto d = out.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(trimap.height) * trimap.width;
  for (std::size_t i = 0; i < plane; ++i) d[static_cast<std::size_t>(trimap.labels[i]) * plane + i] = 1.0f;
  return out;
}

Trimap trimap_from_one_hot(const Tensor& t, int n) {
  if (t.c() != 3) throw ShapeError("trimap_from_one_hot expects 3 channels, got " + t.shape().str());
  Trimap out(t.h(), t.w());
  for (int y = 0; y < t.h(); ++y) {
    for (int x = 0; x < t.w(); ++x) {
      int best = 0;
      for (int c = 1; c < 3; ++c) {
        if (t(n, c, y, x) > t(n, best, y, x)) best = c;
      }
      out.at(y, x) = static_cast<TrimapLabel>(best);
    }
  }
  return out;
}

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw ShapeError("stack_batch of an empty list");
  const Shape first = items.front().shape();
  int n = 0;
  for (const auto& t : items) {
    if (t.c() != first.c || t.h() != first.h || t.w() != first.w) {
      throw ShapeError("stack_batch: mismatched item " + t.shape().str() + " vs " + first.str());
    }
    n += t.n();
  }
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(n) * first.c * first.plane());
  for (const auto& t : items) data.insert(data.end(), t.data().begin(), t.data().end());
  return Tensor(Shape{n, first.c, first.h, first.w}, std::move(data));
}

}  // namespace tmf
