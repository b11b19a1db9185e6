#pragma once

// Named-tensor container file:
//   "SCNW" | u32 version | u32 count |
//   count x ( u32 name_len | name (UTF-8) | u32 ndim | u32 dims[ndim] | f32 payload )
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scalenet/tensor.hpp"

namespace scalenet::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<std::uint8_t>& bytes);  // CheckpointError

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace scalenet::nn
