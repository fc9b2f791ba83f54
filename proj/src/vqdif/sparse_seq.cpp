#include "vqsf/vqdif/sparse_seq.hpp"

#include <bit>
#include <cstring>

#include "vqsf/common/bytes.hpp"
#include "vqsf/common/checkpoint.hpp"
#include "vqsf/common/error.hpp"

namespace vqsf::vqdif {

namespace {

unsigned ceil_log2(std::uint64_t n) { return n <= 1 ? 0u : static_cast<unsigned>(std::bit_width(n - 1)); }

}  // namespace

void SparseSeq::validate() const {
  if (R == 0 || V == 0) throw DataError("sparse sequence: R and V must be positive");
  const std::uint64_t cells = std::uint64_t{R} * R * R;
  if (entries.size() > cells)
    throw DataError("sparse sequence: length " + std::to_string(entries.size()) + " exceeds R^3");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& t = entries[i];
    if (t.c >= cells)
      throw DataError("sparse sequence: cell " + std::to_string(t.c) + " outside [0, " + std::to_string(cells) + ")");
    if (t.v >= V)
      throw DataError("sparse sequence: code " + std::to_string(t.v) + " outside [0, " + std::to_string(V) + ")");
    if (i > 0 && t.c <= entries[i - 1].c)
      throw DataError("sparse sequence: cells not strictly increasing at position " + std::to_string(i));
  }
}

double SparseSeq::byte_size() const {
  const unsigned bits = ceil_log2(std::uint64_t{R} * R * R) + ceil_log2(V);
  return static_cast<double>(entries.size()) * bits / 8.0;
}

std::vector<unsigned char> encode_sparse_seq(const SparseSeq& seq) {
  seq.validate();
  if (seq.R > 0xffff) throw DataError("sparse sequence: R too large for the file format");
  ByteWriter w;
  w.put_bytes("VQSQ", 4);
  w.put<std::uint16_t>(kSparseSeqVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(seq.entries.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(seq.R));
  w.put<std::uint32_t>(seq.V);
  for (const auto& t : seq.entries) {
    w.put<std::uint32_t>(t.c);
    w.put<std::uint32_t>(t.v);
  }
  return std::move(w.bytes);
}

SparseSeq decode_sparse_seq(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "VQSQ", 4) != 0)
    throw DataError("not a sparse sequence file (bad magic)");
  ByteReader r(bytes, bytes.size(), "sparse sequence");
  r.seek(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kSparseSeqVersion)
    throw DataError("unsupported sparse sequence version " + std::to_string(version) + " (expected " +
                    std::to_string(kSparseSeqVersion) + ")");
  const auto k = r.get<std::uint32_t>();
  SparseSeq seq;
  seq.R = r.get<std::uint16_t>();
  seq.V = r.get<std::uint32_t>();
  if (r.remaining() != std::size_t{k} * 8)
    throw DataError("sparse sequence: expected " + std::to_string(k) + " tuples, file size disagrees");
  seq.entries.resize(k);
  for (auto& t : seq.entries) {
    t.c = r.get<std::uint32_t>();
    t.v = r.get<std::uint32_t>();
  }
  seq.validate();
  return seq;
}

void write_sparse_seq(const std::filesystem::path& path, const SparseSeq& seq) {
  write_file_bytes(path, encode_sparse_seq(seq));
}

SparseSeq read_sparse_seq(const std::filesystem::path& path) { return decode_sparse_seq(read_file_bytes(path)); }

}  // namespace vqsf::vqdif
