#include "vqsf/common/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "vqsf/common/bytes.hpp"
#include "vqsf/common/error.hpp"

namespace vqsf {
namespace {

using Writer = ByteWriter;

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

constexpr std::size_t kHeader = 4 + sizeof(std::uint16_t);

}  // namespace

std::vector<unsigned char> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  Writer w;
  w.put_bytes("VQSF", 4);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dtype()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.put<std::uint64_t>(e);
    ad::visit_dtype(t.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto s = t.span<T>();
      w.put_bytes(s.data(), s.size_bytes());
    });
  }
  const std::uint32_t crc = crc_of(w.bytes.data() + kHeader, w.bytes.size() - kHeader);
  w.put<std::uint32_t>(crc);
  return std::move(w.bytes);
}

std::vector<NamedTensor> decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kHeader + 8 || std::memcmp(bytes.data(), "VQSF", 4) != 0)
    throw DataError("not a checkpoint (bad magic)");
  std::uint16_t version;
  std::memcpy(&version, bytes.data() + 4, sizeof version);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  const std::size_t payload_end = bytes.size() - 4;
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + payload_end, sizeof stored_crc);
  if (crc_of(bytes.data() + kHeader, payload_end - kHeader) != stored_crc) throw DataError("checkpoint CRC mismatch");

  ByteReader r(bytes, payload_end, "checkpoint");
  r.seek(kHeader);
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    if (name_len > payload_end) throw DataError("checkpoint entry name too long");
    std::string name(name_len, '\0');
    r.take(name.data(), name_len);
    const auto tag = r.get<std::uint8_t>();
    if (tag > 1) throw DataError("checkpoint entry '" + name + "' has unknown dtype tag " + std::to_string(tag));
    const auto rank = r.get<std::uint32_t>();
    if (rank > 16) throw DataError("checkpoint entry '" + name + "' has implausible rank");
    ad::Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(r.get<std::uint64_t>());
    ad::Tensor t(shape, static_cast<ad::DType>(tag));
    ad::visit_dtype(t.dtype(), [&](auto zero) {
      using T = decltype(zero);
      auto s = t.span<T>();
      r.take(s.data(), s.size_bytes());
    });
    out.push_back({std::move(name), std::move(t)});
  }
  if (r.pos() != payload_end) throw DataError("checkpoint has trailing bytes");
  return out;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // write-then-rename so an interrupted save never leaves a torn file behind
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot replace " + path.string() + ": " + ec.message());
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  write_file_bytes(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

const ad::Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw DataError("checkpoint has no tensor named '" + name + "'");
}

bool has_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& nt : tensors)
    if (nt.name == name) return true;
  return false;
}

}  // namespace vqsf
