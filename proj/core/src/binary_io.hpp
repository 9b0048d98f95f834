#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

namespace xlenc::detail {

template <class U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

template <class U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

inline void put_f32(std::string& out, float value) { put_le(out, std::bit_cast<std::uint32_t>(value)); }

inline void put_f32s(std::string& out, std::span<const float> values) {
  for (float v : values) put_f32(out, v);
}

/// Bounds-checked cursor over an in-memory byte buffer.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  // Callers check has() first.
  template <class U>
  U le() {
    const U v = get_le<U>(reinterpret_cast<const unsigned char*>(bytes_.data() + pos_));
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string_view take(std::size_t n) {
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace xlenc::detail
