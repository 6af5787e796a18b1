#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "corodb/common.hpp"

namespace corodb {

inline std::uint64_t to_big_endian(std::uint64_t v) noexcept {
  if constexpr (std::endian::native == std::endian::little) return __builtin_bswap64(v);
  return v;
}

// First eight key bytes as an integer whose numeric order equals byte order.
// Short keys are zero padded.
inline std::uint64_t key_prefix(std::string_view bytes) noexcept {
  std::uint64_t raw = 0;
  std::memcpy(&raw, bytes.data(), bytes.size() < 8 ? bytes.size() : 8);
  return to_big_endian(raw);
}

// Fixed-width integer key: big-endian so byte order matches numeric order.
inline std::string encode_u64_key(std::uint64_t v) {
  std::string out(8, '\0');
  std::uint64_t be = to_big_endian(v);
  std::memcpy(out.data(), &be, 8);
  return out;
}

// `len`-byte key for integer `v`: zero fill followed by the big-endian value, so
// longer keys share a common prefix and still sort numerically.
inline std::string encode_u64_key(std::uint64_t v, std::size_t len) {
  if (len < 8) throw usage_error("key length must be at least 8 bytes");
  std::string out(len, '\0');
  std::uint64_t be = to_big_endian(v);
  std::memcpy(out.data() + (len - 8), &be, 8);
  return out;
}

inline std::uint64_t decode_u64_key(std::string_view key) {
  if (key.size() < 8) throw usage_error("key shorter than 8 bytes");
  std::uint64_t be = 0;
  std::memcpy(&be, key.data() + key.size() - 8, 8);
  return to_big_endian(be);
}

// A probe key with its prefix precomputed.
struct search_key {
  std::string_view bytes;
  std::uint64_t prefix;

  explicit search_key(std::string_view b) noexcept : bytes(b), prefix(key_prefix(b)) {}
};

}  // namespace corodb
