#pragma once

#include <bit>
#include <cstring>
#include <string>
#include <vector>

#include "vqsf/common/error.hpp"

namespace vqsf {

static_assert(std::endian::native == std::endian::little, "binary IO assumes a little-endian host");

class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<unsigned char> bytes;
};

// Bounds-checked reader over bytes[0, end); overruns throw DataError("<what> truncated").
class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& b, std::size_t end, std::string what = "file")
      : bytes_(b), end_(end), what_(std::move(what)) {}
  template <class T>
  T get() {
    T value;
    take(&value, sizeof(T));
    return value;
  }
  void take(void* out, std::size_t n) {
    if (n > end_ - pos_) throw DataError(what_ + " truncated");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return end_ - pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace vqsf
