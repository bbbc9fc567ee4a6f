#include "tmf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace tmf {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

RawPng read_png_raw(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw ImageIoError("cannot open '" + path + "' for reading");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw ImageIoError("'" + path + "' is not a PNG file");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw ImageIoError("libpng initialisation failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  RawPng out;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("failed to decode '" + path + "': " + (error.empty() ? "corrupt data" : error));
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS(png, info, nullptr, 0, nullptr);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if ((out.channels != 1 && out.channels != 3) || (out.bit_depth != 8 && out.bit_depth != 16)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("unsupported PNG layout in '" + path + "' (" + std::to_string(out.channels) + " channels, " +
                       std::to_string(out.bit_depth) + "-bit)");
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(count);
  if (out.bit_depth == 8) {
    for (std::size_t i = 0; i < count; ++i) out.samples[i] = buffer[i];
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
  }
  return out;
}

void write_png_raw(const std::string& path, const RawPng& image) {
  if ((image.channels != 1 && image.channels != 3) || (image.bit_depth != 8 && image.bit_depth != 16)) {
    throw ImageIoError("unsupported PNG layout for '" + path + "'");
  }
  if (image.samples.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ImageIoError("sample count does not match extents for '" + path + "'");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw ImageIoError("cannot open '" + path + "' for writing");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw ImageIoError("libpng initialisation failed for '" + path + "'");
  png_infop info = png_create_info_struct(png);
  const int bytes = image.bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(image.width) * image.channels * bytes;
  std::vector<png_byte> buffer(rowbytes * image.height);
  for (std::size_t i = 0; i < image.samples.size(); ++i) {
    if (bytes == 1) {
      buffer[i] = static_cast<png_byte>(image.samples[i]);
    } else {
      buffer[2 * i] = static_cast<png_byte>(image.samples[i] >> 8);
      buffer[2 * i + 1] = static_cast<png_byte>(image.samples[i] & 0xff);
    }
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * rowbytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("failed to encode '" + path + "': " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, image.bit_depth,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_image(const std::string& path) {
  const RawPng raw = read_png_raw(path);
  const float scale = raw.bit_depth == 8 ? 1.0f / 255.0f : 1.0f / 65535.0f;
  Image out(raw.channels, raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      for (int c = 0; c < raw.channels; ++c) {
        out.at(c, y, x) = static_cast<float>(raw.samples[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels + c]) * scale;
      }
    }
  }
  return out;
}

void write_image(const std::string& path, const Image& image, int bit_depth) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ImageIoError("write_image: only 1- or 3-channel images are supported ('" + path + "')");
  }
  if (bit_depth != 8 && bit_depth != 16) throw ImageIoError("write_image: unsupported bit depth for '" + path + "'");
  RawPng raw;
  raw.width = image.width();
  raw.height = image.height();
  raw.channels = image.channels();
  raw.bit_depth = bit_depth;
  const double top = bit_depth == 8 ? 255.0 : 65535.0;
  raw.samples.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      for (int c = 0; c < raw.channels; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        raw.samples[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels + c] =
            static_cast<std::uint16_t>(std::lround(v * top));
      }
    }
  }
  write_png_raw(path, raw);
}

Trimap read_trimap(const std::string& path) {
  const RawPng raw = read_png_raw(path);
  if (raw.channels != 1) throw ImageIoError("trimap '" + path + "' must be single-channel");
  const unsigned top = raw.bit_depth == 8 ? 255u : 65535u;
  Trimap out(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    const unsigned v = raw.samples[i];
    out.labels[i] = v == 0 ? TrimapLabel::Background : (v == top ? TrimapLabel::Foreground : TrimapLabel::Unknown);
  }
  return out;
}

void write_trimap(const std::string& path, const Trimap& trimap) {
  RawPng raw;
  raw.width = trimap.width;
  raw.height = trimap.height;
  raw.channels = 1;
  raw.bit_depth = 8;
  raw.samples.resize(trimap.labels.size());
  for (std::size_t i = 0; i < trimap.labels.size(); ++i) {
    switch (trimap.labels[i]) {
      case TrimapLabel::Background: raw.samples[i] = 0; break;
      case TrimapLabel::Unknown: raw.samples[i] = 128; break;
      case TrimapLabel::Foreground: raw.samples[i] = 255; break;
    }
  }
  write_png_raw(path, raw);
}

}  // namespace tmf
