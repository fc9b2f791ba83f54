#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vqsf/ad/tensor.hpp"

namespace vqsf {

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

// Checkpoint container, little-endian:
//   "VQSF" | u16 version | u32 count |
//   count x { u32 name_len | name (UTF-8) | u8 dtype (f32=0, f64=1) | u32 rank |
//             rank x u64 extent | raw element data } |
//   u32 CRC32 over every byte from `count` through the last entry.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::vector<unsigned char>& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Lookup helpers; throw DataError when the name is missing.
const ad::Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace vqsf
