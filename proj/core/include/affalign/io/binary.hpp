#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "affalign/common/error.hpp"

namespace affalign::io {

// Little-endian byte sink, independent of host byte order.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  const std::vector<char>& buffer() const noexcept { return buf_; }
  std::string str() const { return std::string(buf_.begin(), buf_.end()); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::vector<char> buf_;
};

// Little-endian byte source; every short read throws FormatError carrying
// the offset where the missing data should have started.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  std::string_view bytes(std::size_t n, std::string_view what) {
    need(n, what);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(std::string_view what) { return static_cast<std::uint8_t>(get(1, what)); }
  std::uint16_t u16(std::string_view what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(std::string_view what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(std::string_view what) { return get(8, what); }
  float f32(std::string_view what) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, what)));
  }
  double f64(std::string_view what) { return std::bit_cast<double>(get(8, what)); }

  void expect_end() const {
    if (pos_ != data_.size()) {
      throw FormatError(std::to_string(remaining()) + " trailing bytes", pos_);
    }
  }

 private:
  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      throw FormatError("truncated while reading " + std::string(what), pos_);
    }
  }
  std::uint64_t get(int n, std::string_view what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

// Whole-file helpers; failures throw IoError naming the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace affalign::io
