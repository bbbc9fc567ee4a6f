#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmf/image.hpp"
#include "tmf/rng.hpp"

namespace tmf {

// Alpha values within this distance of 0 or 1 count as pure background or foreground.
inline constexpr double kPureDelta = 1e-3;

struct MattingSample {
  Image foreground;  // RGB
  Image background;  // RGB
  AlphaMatte alpha;
  Image composite;  // RGB, alpha * F + (1 - alpha) * B
  Trimap trimap;
};

// alpha * F + (1 - alpha) * B per channel.
Image composite(const Image& foreground, const Image& background, const AlphaMatte& alpha);

// Square structuring elements of side k anchored at offset -(k-1)/2; pixels
// outside the image are ignored.
std::vector<std::uint8_t> erode_square(const std::vector<std::uint8_t>& mask, int h, int w, int k);
std::vector<std::uint8_t> dilate_square(const std::vector<std::uint8_t>& mask, int h, int w, int k);

// FG = erode({alpha >= 1 - delta}, k_erode); BG = not dilate({alpha > delta}, k_dilate).
Trimap gen_trimap(const AlphaMatte& alpha, int k_dilate, int k_erode);

struct CropWindow {
  int top = 0;
  int left = 0;
  int size = 0;
};

class DegenerateTrimapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Square window centred on a uniformly drawn unknown pixel, shifted to stay
// inside the image. Requires size <= min(h, w).
CropWindow choose_unknown_crop(const Trimap& trimap, int size, Rng& rng);
MattingSample crop_sample(const MattingSample& sample, const CropWindow& window);
// Reflect-pads first when `size` exceeds the sample.
MattingSample crop_unknown_centered(const MattingSample& sample, int size, Rng& rng);
MattingSample flip_sample(const MattingSample& sample);

// Reflect padding at the bottom and right edges up to (h, w).
Image reflect_pad(const Image& image, int h, int w);
Trimap reflect_pad(const Trimap& trimap, int h, int w);
MattingSample reflect_pad(const MattingSample& sample, int h, int w);

struct PaddedInput {
  Image image;
  Trimap trimap;
  int original_h = 0;
  int original_w = 0;
};

PaddedInput pad_to_multiple(const Image& image, const Trimap& trimap, int multiple = 16);
AlphaMatte unpad(const AlphaMatte& prediction, const PaddedInput& padded);

enum class ToyShape { Disc, Polygon, Strands };
std::string to_string(ToyShape shape);

struct ToyForeground {
  ToyShape shape = ToyShape::Disc;
  Image foreground;  // RGB
  AlphaMatte alpha;
  // Distractor variants carry a second salient shape that belongs to the
  // background: it hugs the object's boundary but has zero opacity.
  bool has_distractor = false;
  Image distractor_color;
  AlphaMatte distractor_alpha;
};

struct ToyDataConfig {
  int size = 128;
  int k_min = 3;
  int k_max = 15;
  double distractor_probability = 0.5;
};

// Procedural soft-edged shapes. Alpha is a binary shape blurred with a
// Gaussian of sigma in [0.5, 3] and snapped to exact 0/1 within kPureDelta.
std::vector<ToyForeground> synth_toy_foregrounds(int n, std::uint64_t seed, const ToyDataConfig& config = {});
ToyForeground synth_toy_foreground(std::uint64_t seed, const ToyDataConfig& config = {});
Image synth_toy_background(int h, int w, Rng& rng);

// Sample `index` of the dataset seeded by `seed`; identical arguments give a
// bitwise-identical sample.
MattingSample make_toy_sample(std::uint64_t seed, int index, const ToyDataConfig& config = {});
std::vector<MattingSample> make_toy_dataset(int n, std::uint64_t seed, const ToyDataConfig& config = {},
                                            int first_index = 0);

// Largest |composite - (alpha F + (1 - alpha) B)| over the sample.
double composition_residual(const MattingSample& sample);

struct ManifestEntry {
  std::string id;
  std::string fg_path;
  std::string alpha_path;
  std::vector<std::string> bg_paths;
  std::string composite_path;
  std::string trimap_path;
  std::string split;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

// Writes {fg,alpha,bg,composite,trimap}/NNNN.png (alpha as 16-bit gray) and
// manifest.json under `root`. Entry i carries split tag splits[i] when given.
DatasetManifest write_dataset(const std::string& root, const std::vector<MattingSample>& samples,
                              std::uint64_t seed, const std::vector<std::string>& splits = {});
DatasetManifest read_manifest(const std::string& root);
// Loads every entry (optionally only one split). The composite is recomputed
// in floating point from F, B and alpha; the stored PNG is the 8-bit export.
std::vector<MattingSample> load_dataset(const std::string& root, const std::string& split = "");

}  // namespace tmf
