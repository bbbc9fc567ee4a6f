#pragma once

#include <array>
#include <string>
#include <vector>

#include "tmf/matting_ops.hpp"

namespace tmf {

enum class EncoderKind { Toy, PaperShape };
enum class ContextKind { Tmp, Ppm };
enum class FusionKind { Glf, Static };

inline constexpr std::array<const char*, 3> kStageNames{"F1", "F2", "F3"};

struct FusionStageConfig {
  FusionKind kind = FusionKind::Glf;
  GlobalSource global_source = GlobalSource::TmpOutput;
  int internal_channels = 0;  // C3, used by GLF
  int out_channels = 0;
};

// Declarative description of encoder, context module, fusion stages and head.
// JSON layout is documented in docs/arch_config.schema.json.
struct ArchConfig {
  EncoderKind encoder = EncoderKind::Toy;
  std::vector<int> toy_stage_channels{16, 32, 64, 96, 128};
  ContextKind context = ContextKind::Tmp;
  TmpConfig tmp;  // in_channels is derived from the encoder
  int group_width = 16;
  std::array<FusionStageConfig, 3> stages;
  int head_channels = 32;

  // Channels of encoder stages C1..C5.
  std::array<int, 5> encoder_channels() const;
  // Channels of the 1x1-projected global vector (C').
  int global_channels() const { return tmp.out_channels; }
  bool uses_global(GlobalSource source) const;

  GlfConfig glf_config(int stage) const;
  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  // Same encoder and widths with PPM context and static fusion everywhere.
  ArchConfig baseline_twin() const;

  std::string to_json() const;
  static ArchConfig from_json(const std::string& text);
  static ArchConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Full-width TMP + 3x GLF network (stage widths 256/256/32, group width 16).
  static ArchConfig tmfnet(EncoderKind encoder = EncoderKind::PaperShape);
  // PPM + 3x static fusion with the same widths.
  static ArchConfig baseline(EncoderKind encoder = EncoderKind::PaperShape);
  // Desk-scale TMP + 3x GLF network on the toy encoder.
  static ArchConfig toy_tmfnet();
  static ArchConfig toy_baseline() { return toy_tmfnet().baseline_twin(); }
};

std::string to_string(EncoderKind kind);
std::string to_string(ContextKind kind);
std::string to_string(FusionKind kind);

}  // namespace tmf
