#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace credstuff {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// All multi-byte integers on the wire and in snapshots are big-endian.

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void put_i64(Bytes& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

inline std::uint16_t load_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

inline std::uint32_t load_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = v << 8 | p[i];
  return v;
}

inline std::uint64_t load_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | p[i];
  return v;
}

inline std::int64_t load_i64(const std::uint8_t* p) { return static_cast<std::int64_t>(load_u64(p)); }

// Sequential reader with bounds checking; throws on truncated input.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() { return load_u16(take(2).data()); }
  std::uint32_t u32() { return load_u32(take(4).data()); }
  std::uint64_t u64() { return load_u64(take(8).data()); }
  std::int64_t i64() { return load_i64(take(8).data()); }

  ByteView take(std::size_t n) {
    if (remaining() < n) throw std::out_of_range("byte reader: truncated input");
    ByteView v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

  template <std::size_t N>
  std::array<std::uint8_t, N> take_array() {
    std::array<std::uint8_t, N> a{};
    ByteView v = take(N);
    std::memcpy(a.data(), v.data(), N);
    return a;
  }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

std::string hex_encode(ByteView data);
Bytes hex_decode(const std::string& hex);  // throws std::invalid_argument on bad input

}  // namespace credstuff
