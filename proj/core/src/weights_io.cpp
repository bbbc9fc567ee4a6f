#include "tmf/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace tmf {
namespace {

constexpr char kMagic[4] = {'T', 'M', 'F', 'W'};

template <typename U>
void put(std::ostream& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw WeightFileError("truncated weight file '" + path + "'");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

void read_header(std::istream& in, const std::string& path, std::uint64_t& fingerprint, std::uint32_t& count) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw WeightFileError("'" + path + "' is not a weight file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kWeightFormatVersion) {
    throw WeightFileError("'" + path + "' has unsupported format version " + std::to_string(version));
  }
  fingerprint = get<std::uint64_t>(in, path);
  count = get<std::uint32_t>(in, path);
}

}  // namespace

void save_weights(const Network<float>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightFileError("cannot write weight file '" + path + "'");
  const auto tensors = net.named_tensors();
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kWeightFormatVersion);
  put<std::uint64_t>(out, net.fingerprint());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put<std::uint32_t>(out, nt.trainable ? 0u : 1u);
    const Shape s = nt.tensor.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(out, d);
    for (float v : nt.tensor.data()) put<float>(out, v);
  }
  if (!out) throw WeightFileError("failed while writing '" + path + "'");
}

void load_weights(Network<float>& net, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError("cannot open weight file '" + path + "'");
  std::uint64_t fingerprint = 0;
  std::uint32_t count = 0;
  read_header(in, path, fingerprint, count);
  if (fingerprint != net.fingerprint()) {
    throw WeightFileError("architecture fingerprint mismatch in '" + path + "' (file " + std::to_string(fingerprint) +
                          ", network " + std::to_string(net.fingerprint()) + ")");
  }
  auto tensors = net.named_tensors();
  if (count != tensors.size()) throw WeightFileError("entry count mismatch in '" + path + "'");
  std::vector<std::vector<float>> staged(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw WeightFileError("corrupt entry name in '" + path + "'");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw WeightFileError("truncated weight file '" + path + "'");
    get<std::uint32_t>(in, path);
    Shape s;
    s.n = get<std::int32_t>(in, path);
    s.c = get<std::int32_t>(in, path);
    s.h = get<std::int32_t>(in, path);
    s.w = get<std::int32_t>(in, path);
    if (name != tensors[i].name || !(s == tensors[i].tensor.shape())) {
      throw WeightFileError("entry '" + name + "' " + s.str() + " does not match '" + tensors[i].name + "' " +
                            tensors[i].tensor.shape().str());
    }
    staged[i].resize(s.numel());
    for (float& v : staged[i]) v = get<float>(in, path);
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    auto dst = tensors[i].tensor.mutable_data();
    std::copy(staged[i].begin(), staged[i].end(), dst.begin());
  }
}

std::uint64_t read_weight_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFileError("cannot open weight file '" + path + "'");
  std::uint64_t fingerprint = 0;
  std::uint32_t count = 0;
  read_header(in, path, fingerprint, count);
  return fingerprint;
}

}  // namespace tmf
