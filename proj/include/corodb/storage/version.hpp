#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <new>
#include <string_view>

#include "corodb/common.hpp"

namespace corodb {

// Identity of the transaction that owns an uncommitted version.
struct owner_id {
  std::uint16_t worker = 0;
  std::uint8_t slot = 0;
  std::uint64_t seq = 0;  // per-slot transaction sequence, 39 bits

  static constexpr std::uint64_t seq_mask = (std::uint64_t{1} << 39) - 1;

  std::uint64_t pack() const noexcept {
    return ((seq & seq_mask) << 24) | (std::uint64_t{worker} << 8) | slot;
  }

  static owner_id unpack(std::uint64_t v) noexcept {
    return {static_cast<std::uint16_t>(v >> 8), static_cast<std::uint8_t>(v), (v >> 24) & seq_mask};
  }

  friend bool operator==(const owner_id&, const owner_id&) = default;
};

// Commit timestamp or owner mark, in one word. The top bit tags owner marks.
class version_stamp {
 public:
  static constexpr std::uint64_t owner_bit = std::uint64_t{1} << 63;

  constexpr version_stamp() noexcept = default;

  static version_stamp committed(timestamp ts) {
    if (ts & owner_bit) throw invariant_error("commit timestamp overflow");
    return version_stamp(ts);
  }
  static version_stamp owned_by(owner_id o) noexcept { return version_stamp(owner_bit | o.pack()); }
  static constexpr version_stamp from_raw(std::uint64_t raw) noexcept { return version_stamp(raw); }

  bool is_owner() const noexcept { return (raw_ & owner_bit) != 0; }
  timestamp commit_ts() const noexcept { return raw_; }
  owner_id owner() const noexcept { return owner_id::unpack(raw_ & ~owner_bit); }
  std::uint64_t raw() const noexcept { return raw_; }

  friend bool operator==(version_stamp, version_stamp) = default;

 private:
  constexpr explicit version_stamp(std::uint64_t raw) noexcept : raw_(raw) {}
  std::uint64_t raw_ = 0;
};

// One record version. Payload bytes follow the header in the same allocation.
class version {
 public:
  static version* make(version_stamp stamp, version* next, std::string_view payload, bool tombstone = false) {
    if (payload.size() > UINT32_MAX) throw usage_error("payload too large");
    void* mem = ::operator new(sizeof(version) + payload.size());
    auto* v = new (mem) version(stamp, next, static_cast<std::uint32_t>(payload.size()), tombstone);
    if (!payload.empty()) std::memcpy(v->data(), payload.data(), payload.size());
    return v;
  }

  static void destroy(version* v) noexcept {
    if (v == nullptr) return;
    v->~version();
    ::operator delete(v);
  }

  version_stamp stamp(std::memory_order mo = std::memory_order_acquire) const noexcept {
    return version_stamp::from_raw(stamp_.load(mo));
  }
  void set_stamp(version_stamp s) noexcept { stamp_.store(s.raw(), std::memory_order_release); }

  version* next() const noexcept { return next_; }
  bool tombstone() const noexcept { return tombstone_; }
  std::uint32_t size() const noexcept { return size_; }
  std::string_view payload() const noexcept { return {data(), size_}; }

  // Bytes owned by this version, header included.
  std::size_t footprint() const noexcept { return sizeof(version) + size_; }

  char* data() noexcept { return reinterpret_cast<char*>(this + 1); }
  const char* data() const noexcept { return reinterpret_cast<const char*>(this + 1); }

 private:
  version(version_stamp s, version* next, std::uint32_t size, bool tombstone) noexcept
      : stamp_(s.raw()), next_(next), size_(size), tombstone_(tombstone) {}

  std::atomic<std::uint64_t> stamp_;
  version* next_;
  std::uint32_t size_;
  bool tombstone_;
};

}  // namespace corodb
