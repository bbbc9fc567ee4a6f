#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "tmf/network.hpp"

namespace tmf {

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kWeightFormatVersion = 1;

// Binary layout (little-endian):
//   "TMFW" | u32 version | u64 architecture fingerprint | u32 entry count
//   per entry: u32 name length | name | u32 kind (0 parameter, 1 buffer) |
//              i32 n, c, h, w | f32 values
void save_weights(const Network<float>& net, const std::string& path);
// Fails with WeightFileError on a fingerprint, name or shape mismatch; the
// network is left untouched in that case.
void load_weights(Network<float>& net, const std::string& path);
std::uint64_t read_weight_fingerprint(const std::string& path);

}  // namespace tmf
