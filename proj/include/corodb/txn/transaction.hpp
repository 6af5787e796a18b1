#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string_view>
#include <vector>

#include "corodb/common.hpp"
#include "corodb/storage/table.hpp"
#include "corodb/wal/log.hpp"

namespace corodb {

// Result of a write operation. Anything but ok means the transaction has
// already been rolled back.
enum class rc : std::uint8_t { ok, conflict, not_found, duplicate };

inline constexpr std::string_view to_string(rc r) noexcept {
  switch (r) {
    case rc::ok: return "ok";
    case rc::conflict: return "conflict";
    case rc::not_found: return "not-found";
    case rc::duplicate: return "duplicate";
  }
  return "?";
}

enum class txn_state : std::uint8_t { idle, active, committed, aborted };

// Bump allocator for values handed back to a transaction. Reset, not freed,
// between the transactions of a slot.
class scratch_arena {
 public:
  static constexpr std::size_t chunk_size = 16 * 1024;

  scratch_arena() { chunks_.push_back({std::make_unique<char[]>(chunk_size), chunk_size}); }

  std::string_view copy(std::string_view s) {
    if (s.empty()) return {};
    while (idx_ < chunks_.size() && chunks_[idx_].size - off_ < s.size()) {
      ++idx_;
      off_ = 0;
    }
    if (idx_ == chunks_.size()) {
      std::size_t cap = s.size() > chunk_size ? s.size() : chunk_size;
      chunks_.push_back({std::make_unique<char[]>(cap), cap});
    }
    char* out = chunks_[idx_].mem.get() + off_;
    std::memcpy(out, s.data(), s.size());
    off_ += s.size();
    return {out, s.size()};
  }

  void reset() noexcept {
    idx_ = 0;
    off_ = 0;
  }

  const void* id() const noexcept { return chunks_.front().mem.get(); }

 private:
  struct chunk {
    std::unique_ptr<char[]> mem;
    std::size_t size;
  };
  std::vector<chunk> chunks_;
  std::size_t idx_ = 0;
  std::size_t off_ = 0;
};

// Per-slot transaction state. Each (worker, batch slot) pair owns one of these
// and reuses it for every transaction admitted into that slot.
class transaction {
 public:
  struct write_entry {
    table* tbl;
    rid r;
    version* installed;
    std::size_t log_index;
    bool inserted;  // created the record rather than updating it
  };

  struct read_entry {
    std::uint32_t table_id;
    rid r;
  };

  transaction(unsigned worker, unsigned slot) : worker_(worker), slot_(slot) {}

  transaction(const transaction&) = delete;
  transaction& operator=(const transaction&) = delete;

  timestamp begin_ts() const noexcept { return begin_; }
  txn_state state() const noexcept { return state_; }
  bool active() const noexcept { return state_ == txn_state::active; }
  unsigned worker() const noexcept { return worker_; }
  unsigned slot() const noexcept { return slot_; }
  owner_id owner() const noexcept {
    return {static_cast<std::uint16_t>(worker_), static_cast<std::uint8_t>(slot_), seq_};
  }

  const std::vector<write_entry>& write_set() const noexcept { return writes_; }
  const std::vector<read_entry>& read_set() const noexcept { return reads_; }
  const log_buffer& log() const noexcept { return log_; }
  const void* scratch_id() const noexcept { return scratch_.id(); }

 private:
  friend class engine;

  write_entry* find_write(const version* v) noexcept {
    for (auto& w : writes_) {
      if (w.installed == v) return &w;
    }
    return nullptr;
  }

  unsigned worker_;
  unsigned slot_;
  std::uint64_t seq_ = 0;
  timestamp begin_ = 0;
  txn_state state_ = txn_state::idle;
  std::vector<write_entry> writes_;
  std::vector<read_entry> reads_;
  log_buffer log_;
  scratch_arena scratch_;
};

}  // namespace corodb
