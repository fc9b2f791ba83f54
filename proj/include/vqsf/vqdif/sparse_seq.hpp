#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vqsf::vqdif {

struct Tuple {
  std::uint32_t c = 0;  // raveled cell index in [0, R^3)
  std::uint32_t v = 0;  // codebook index in [0, V)
  friend bool operator==(const Tuple&, const Tuple&) = default;
};

// A shape as an ordered list of (cell, code) tuples, cells strictly increasing.
struct SparseSeq {
  std::uint32_t R = 0;
  std::uint32_t V = 0;
  std::vector<Tuple> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  // Throws DataError naming the first violated invariant.
  void validate() const;
  // K * (ceil(log2 R^3) + ceil(log2 V)) / 8.
  double byte_size() const;

  friend bool operator==(const SparseSeq&, const SparseSeq&) = default;
};

// File layout, little-endian: "VQSQ" | u16 version | u32 K | u16 R | u32 V |
// K x (u32 c, u32 v).
inline constexpr std::uint16_t kSparseSeqVersion = 1;

std::vector<unsigned char> encode_sparse_seq(const SparseSeq& seq);
SparseSeq decode_sparse_seq(const std::vector<unsigned char>& bytes);
void write_sparse_seq(const std::filesystem::path& path, const SparseSeq& seq);
SparseSeq read_sparse_seq(const std::filesystem::path& path);

}  // namespace vqsf::vqdif
