#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace prmlab {

/// 128-bit content digest (BLAKE2b truncated to 16 bytes).
struct Digest128 {
  std::array<std::uint8_t, 16> bytes{};

  auto operator<=>(const Digest128&) const = default;

  std::string hex() const;
  static Digest128 from_hex(std::string_view hex);
  /// First eight bytes as an integer; for bucketing, never for identity.
  std::uint64_t low64() const;
};

Digest128 digest_bytes(std::string_view data);

struct Digest128Hash {
  std::size_t operator()(const Digest128& d) const noexcept { return static_cast<std::size_t>(d.low64()); }
};

/// Append-only builder for canonical, length-prefixed binary serializations.
class CanonicalWriter {
 public:
  explicit CanonicalWriter(std::string_view tag) { put_string(tag); }

  CanonicalWriter& put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
    return *this;
  }
  CanonicalWriter& put_i64(std::int64_t v) {
    const auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((u >> (8 * i)) & 0xffU));
    return *this;
  }
  CanonicalWriter& put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    buffer_.append(s);
    return *this;
  }

  const std::string& bytes() const { return buffer_; }
  Digest128 digest() const { return digest_bytes(buffer_); }

 private:
  std::string buffer_;
};

}  // namespace prmlab
