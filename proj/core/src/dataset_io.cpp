#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tmf/data.hpp"
#include "tmf/image_io.hpp"

namespace tmf {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string numbered(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", i);
  return buf;
}

}  // namespace

std::string DatasetManifest::to_json() const {
  json j;
  j["seed"] = seed;
  j["samples"] = json::array();
  for (const auto& e : entries) {
    j["samples"].push_back({{"id", e.id},
                            {"fg_path", e.fg_path},
                            {"alpha_path", e.alpha_path},
                            {"bg_paths", e.bg_paths},
                            {"composite_path", e.composite_path},
                            {"trimap_path", e.trimap_path},
                            {"split", e.split}});
  }
  return j.dump(2);
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    DatasetManifest m;
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.fg_path = s.at("fg_path").get<std::string>();
      e.alpha_path = s.at("alpha_path").get<std::string>();
      e.bg_paths = s.at("bg_paths").get<std::vector<std::string>>();
      e.composite_path = s.value("composite_path", std::string());
      e.trimap_path = s.value("trimap_path", std::string());
      e.split = s.value("split", std::string("train"));
      if (e.bg_paths.empty()) throw std::invalid_argument("manifest entry '" + e.id + "' has no background");
      m.entries.push_back(std::move(e));
    }
    return m;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed dataset manifest: ") + e.what());
  }
}

DatasetManifest write_dataset(const std::string& root, const std::vector<MattingSample>& samples, std::uint64_t seed,
                              const std::vector<std::string>& splits) {
  for (const char* sub : {"fg", "alpha", "bg", "composite", "trimap"}) fs::create_directories(fs::path(root) / sub);
  DatasetManifest m;
  m.seed = seed;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string name = numbered(static_cast<int>(i));
    ManifestEntry e;
    e.id = name.substr(0, 4);
    e.fg_path = "fg/" + name;
    e.alpha_path = "alpha/" + name;
    e.bg_paths = {"bg/" + name};
    e.composite_path = "composite/" + name;
    e.trimap_path = "trimap/" + name;
    e.split = i < splits.size() ? splits[i] : "train";
    write_image((fs::path(root) / e.fg_path).string(), s.foreground);
    write_image((fs::path(root) / e.alpha_path).string(), s.alpha, 16);
    write_image((fs::path(root) / e.bg_paths[0]).string(), s.background);
    write_image((fs::path(root) / e.composite_path).string(), s.composite);
    write_trimap((fs::path(root) / e.trimap_path).string(), s.trimap);
    m.entries.push_back(std::move(e));
  }
  std::ofstream out(fs::path(root) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest under '" + root + "'");
  out << m.to_json() << '\n';
  return m;
}

DatasetManifest read_manifest(const std::string& root) {
  const fs::path p = fs::path(root) / "manifest.json";
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return DatasetManifest::from_json(ss.str());
}

std::vector<MattingSample> load_dataset(const std::string& root, const std::string& split) {
  const DatasetManifest m = read_manifest(root);
  std::vector<MattingSample> out;
  for (const auto& e : m.entries) {
    if (!split.empty() && e.split != split) continue;
    MattingSample s;
    s.foreground = read_image((fs::path(root) / e.fg_path).string());
    s.alpha = read_image((fs::path(root) / e.alpha_path).string());
    s.background = read_image((fs::path(root) / e.bg_paths[0]).string());
    if (s.foreground.channels() != 3 || s.background.channels() != 3 || s.alpha.channels() != 1 ||
        !s.foreground.same_size(s.alpha) || !s.background.same_size(s.alpha)) {
      throw std::runtime_error("dataset entry '" + e.id + "' has inconsistent image sizes or channels");
    }
    s.composite = composite(s.foreground, s.background, s.alpha);
    s.trimap = e.trimap_path.empty() ? gen_trimap(s.alpha, 10, 10) : read_trimap((fs::path(root) / e.trimap_path).string());
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tmf
