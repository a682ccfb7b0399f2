#pragma once

// Little-endian primitive packing shared by the binary formats.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <vector>

namespace holoev::detail {

class ByteWriter {
 public:
  void bytes(std::string_view s) {
    for (char c : s) out_.push_back(static_cast<std::byte>(c));
  }
  void append(std::span<const std::byte> b) { out_.insert(out_.end(), b.begin(), b.end()); }

  template <typename T>
  void le(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xFF));
    }
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }

  void reserve(std::size_t n) { out_.reserve(n); }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  bool has(std::size_t n) const noexcept { return remaining() >= n; }

  // Callers check has() first; these do not bounds-check.
  template <typename T>
  T le() noexcept {
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(std::to_integer<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float f32() noexcept { return std::bit_cast<float>(le<std::uint32_t>()); }
  double f64() noexcept { return std::bit_cast<double>(le<std::uint64_t>()); }

  std::span<const std::byte> take(std::size_t n) noexcept {
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool match(std::string_view magic) const noexcept {
    if (!has(magic.size())) return false;
    return std::memcmp(in_.data() + pos_, magic.data(), magic.size()) == 0;
  }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace holoev::detail
