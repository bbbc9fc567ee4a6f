#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmf/image.hpp"

namespace tmf {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Decoded PNG samples exactly as stored (no value mapping).
struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (RGB); alpha channels are dropped
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;  // interleaved, row-major
};

RawPng read_png_raw(const std::string& path);
void write_png_raw(const std::string& path, const RawPng& png);

// Samples mapped linearly to [0, 1] (v / 255 or v / 65535).
Image read_image(const std::string& path);
// Gray (1 channel) or RGB (3 channels); values clamped to [0, 1] and rounded
// to the nearest code of the requested bit depth (8 or 16).
void write_image(const std::string& path, const Image& image, int bit_depth = 8);

// Trimaps are stored as 8-bit gray: 0 background, 255 foreground, anything
// else unknown (128 on write).
Trimap read_trimap(const std::string& path);
void write_trimap(const std::string& path, const Trimap& trimap);

}  // namespace tmf
