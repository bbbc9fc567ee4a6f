#include <algorithm>
#include <cmath>
#include <filesystem>

#include "tmf/image_io.hpp"
#include "tmf/matting_ops.hpp"

namespace tmf {

std::vector<KernelMapFile> export_kernel_maps(const KernelField<float>& kernels, const std::string& directory) {
  const Tensor& k = kernels.values;
  if (k.c() != kernels.groups * 9) throw ShapeError("export_kernel_maps: kernel field layout mismatch");
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw ImageIoError("cannot create directory '" + directory + "': " + ec.message());

  std::vector<KernelMapFile> files;
  const int h = k.h(), w = k.w();
  for (int g = 0; g < kernels.groups; ++g) {
    for (int tap = 0; tap < 9; ++tap) {
      const int u = tap / 3 - 1, v = tap % 3 - 1;
      const int channel = g * 9 + tap;
      float lo = k(0, channel, 0, 0), hi = lo;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const float val = k(0, channel, y, x);
          if (!std::isfinite(val)) throw std::domain_error("export_kernel_maps: non-finite kernel value");
          lo = std::min(lo, val);
          hi = std::max(hi, val);
        }
      }
      Image slice(1, h, w);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          slice.at(0, y, x) = hi > lo ? (k(0, channel, y, x) - lo) / (hi - lo) : 0.5f;
        }
      }
      KernelMapFile file;
      file.group = g;
      file.u = u;
      file.v = v;
      file.min = lo;
      file.max = hi;
      file.path = (std::filesystem::path(directory) /
                   ("g" + std::to_string(g) + "_u" + std::to_string(u + 1) + "_v" + std::to_string(v + 1) + ".png"))
                      .string();
      write_image(file.path, slice, 8);
      files.push_back(std::move(file));
    }
  }
  return files;
}

}  // namespace tmf
