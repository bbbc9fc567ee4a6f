#include "tmf/arch_config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tmf {
namespace {

using nlohmann::json;

constexpr std::array<int, 5> kPaperShapeChannels{64, 256, 512, 1024, 2048};

EncoderKind parse_encoder(const std::string& s) {
  if (s == "toy") return EncoderKind::Toy;
  if (s == "paper_shape") return EncoderKind::PaperShape;
  throw std::invalid_argument("unknown encoder kind '" + s + "'");
}

ContextKind parse_context(const std::string& s) {
  if (s == "tmp") return ContextKind::Tmp;
  if (s == "ppm") return ContextKind::Ppm;
  throw std::invalid_argument("unknown decoder context '" + s + "'");
}

FusionKind parse_fusion(const std::string& s) {
  if (s == "glf") return FusionKind::Glf;
  if (s == "static") return FusionKind::Static;
  throw std::invalid_argument("unknown fusion kind '" + s + "'");
}

}  // namespace

std::string to_string(EncoderKind kind) { return kind == EncoderKind::Toy ? "toy" : "paper_shape"; }
std::string to_string(ContextKind kind) { return kind == ContextKind::Tmp ? "tmp" : "ppm"; }
std::string to_string(FusionKind kind) { return kind == FusionKind::Glf ? "glf" : "static"; }

std::array<int, 5> ArchConfig::encoder_channels() const {
  if (encoder == EncoderKind::PaperShape) return kPaperShapeChannels;
  if (toy_stage_channels.size() != 5) throw std::invalid_argument("ArchConfig: toy encoder needs exactly 5 stage channels");
  return {toy_stage_channels[0], toy_stage_channels[1], toy_stage_channels[2], toy_stage_channels[3],
          toy_stage_channels[4]};
}

bool ArchConfig::uses_global(GlobalSource source) const {
  for (const auto& s : stages) {
    if (s.kind == FusionKind::Glf && s.global_source == source) return true;
  }
  return false;
}

GlfConfig ArchConfig::glf_config(int stage) const {
  const auto enc = encoder_channels();
  const std::array<int, 3> lows{enc[1], enc[0], 6};
  GlfConfig g;
  g.low_channels = lows[stage];
  g.high_channels = stage == 0 ? tmp.out_channels : stages[stage - 1].out_channels;
  g.internal_channels = stages[stage].internal_channels;
  g.group_width = group_width;
  g.out_channels = stages[stage].out_channels;
  g.global_channels = global_channels();
  g.global_source = stages[stage].global_source;
  return g;
}

void ArchConfig::validate() const {
  const auto enc = encoder_channels();
  for (int c : enc) {
    if (c <= 0) throw std::invalid_argument("ArchConfig: encoder channels must be positive");
  }
  TmpConfig t = tmp;
  t.in_channels = enc[4];
  t.validate();
  if (tmp.in_channels != 0 && tmp.in_channels != enc[4]) {
    throw std::invalid_argument("ArchConfig: tmp.in_channels (" + std::to_string(tmp.in_channels) +
                                ") does not match the last encoder stage (" + std::to_string(enc[4]) + ")");
  }
  if (head_channels <= 0) throw std::invalid_argument("ArchConfig: head_channels must be positive");
  for (int s = 0; s < 3; ++s) {
    const auto& st = stages[s];
    const std::string name = kStageNames[s];
    if (st.out_channels <= 0) throw std::invalid_argument("ArchConfig: " + name + " out_channels must be positive");
    if (st.kind != FusionKind::Glf) continue;
    if (st.global_source == GlobalSource::TmpOutput && context != ContextKind::Tmp) {
      throw std::invalid_argument("ArchConfig: " + name +
                                  " takes its global feature from the TMP output but the context module is PPM");
    }
    try {
      glf_config(s).validate();
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("ArchConfig: " + name + ": " + e.what());
    }
  }
}

ArchConfig ArchConfig::baseline_twin() const {
  ArchConfig b = *this;
  b.context = ContextKind::Ppm;
  for (auto& s : b.stages) {
    s.kind = FusionKind::Static;
    s.global_source = GlobalSource::None;
  }
  return b;
}

ArchConfig ArchConfig::tmfnet(EncoderKind encoder) {
  ArchConfig c;
  c.encoder = encoder;
  c.context = ContextKind::Tmp;
  c.tmp.in_channels = c.encoder_channels()[4];
  c.tmp.reduce_channels = 0;
  c.tmp.pool_kernels = {31, 17, 11, 5};
  c.tmp.out_channels = 256;
  c.group_width = 16;
  c.stages = {FusionStageConfig{FusionKind::Glf, GlobalSource::TmpOutput, 256, 256},
              FusionStageConfig{FusionKind::Glf, GlobalSource::TmpOutput, 256, 256},
              FusionStageConfig{FusionKind::Glf, GlobalSource::TmpOutput, 32, 32}};
  c.head_channels = 32;
  return c;
}

ArchConfig ArchConfig::baseline(EncoderKind encoder) { return tmfnet(encoder).baseline_twin(); }

ArchConfig ArchConfig::toy_tmfnet() {
  ArchConfig c;
  c.encoder = EncoderKind::Toy;
  c.toy_stage_channels = {16, 32, 64, 96, 128};
  c.context = ContextKind::Tmp;
  c.tmp.in_channels = 128;
  c.tmp.reduce_channels = 0;
  c.tmp.pool_kernels = {7, 5, 3, 1};
  c.tmp.out_channels = 64;
  c.group_width = 8;
  c.stages = {FusionStageConfig{FusionKind::Glf, GlobalSource::TmpOutput, 32, 32},
              FusionStageConfig{FusionKind::Glf, GlobalSource::TmpOutput, 32, 32},
              FusionStageConfig{FusionKind::Glf, GlobalSource::TmpOutput, 16, 16}};
  c.head_channels = 16;
  return c;
}

std::string ArchConfig::to_json() const {
  json j;
  j["encoder"] = {{"kind", to_string(encoder)}};
  if (encoder == EncoderKind::Toy) j["encoder"]["stage_channels"] = toy_stage_channels;
  j["decoder_context"] = to_string(context);
  j["tmp"] = {{"reduce_channels", tmp.reduce_channels},
              {"pool_kernels", tmp.pool_kernels},
              {"out_channels", tmp.out_channels},
              {"epsilon", tmp.epsilon}};
  j["group_width"] = group_width;
  json st = json::object();
  for (int s = 0; s < 3; ++s) {
    st[kStageNames[s]] = {{"fusion", to_string(stages[s].kind)},
                          {"global_source", to_string(stages[s].global_source)},
                          {"internal_channels", stages[s].internal_channels},
                          {"out_channels", stages[s].out_channels}};
  }
  j["stages"] = st;
  j["head_channels"] = head_channels;
  return j.dump(2);
}

ArchConfig ArchConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("ArchConfig: malformed JSON: ") + e.what());
  }
  try {
    ArchConfig c;
    const json& enc = j.at("encoder");
    c.encoder = parse_encoder(enc.at("kind").get<std::string>());
    if (c.encoder == EncoderKind::Toy && enc.contains("stage_channels")) {
      c.toy_stage_channels = enc["stage_channels"].get<std::vector<int>>();
    }
    c.context = parse_context(j.value("decoder_context", std::string("tmp")));
    if (j.contains("tmp")) {
      const json& t = j["tmp"];
      c.tmp.reduce_channels = t.value("reduce_channels", 0);
      if (t.contains("pool_kernels")) c.tmp.pool_kernels = t["pool_kernels"].get<std::vector<int>>();
      c.tmp.out_channels = t.value("out_channels", 256);
      c.tmp.epsilon = t.value("epsilon", kNbpEpsilon);
    } else {
      c.tmp.out_channels = 256;
    }
    c.tmp.in_channels = c.encoder_channels()[4];
    c.group_width = j.value("group_width", 16);
    const std::array<int, 3> default_internal{256, 256, 32};
    for (int s = 0; s < 3; ++s) {
      auto& st = c.stages[s];
      st.internal_channels = default_internal[s];
      st.out_channels = default_internal[s];
      if (!j.contains("stages") || !j["stages"].contains(kStageNames[s])) continue;
      const json& js = j["stages"][kStageNames[s]];
      st.kind = parse_fusion(js.value("fusion", std::string("glf")));
      st.global_source = parse_global_source(js.value("global_source", std::string("tmp_output")));
      st.internal_channels = js.value("internal_channels", st.internal_channels);
      st.out_channels = js.value("out_channels", st.internal_channels);
    }
    c.head_channels = j.value("head_channels", 32);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("ArchConfig: ") + e.what());
  }
}

ArchConfig ArchConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open architecture config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void ArchConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write architecture config '" + path + "'");
  out << to_json() << '\n';
}

}  // namespace tmf
