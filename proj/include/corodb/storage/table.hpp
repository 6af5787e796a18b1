#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "corodb/index/btree.hpp"
#include "corodb/storage/version.hpp"

namespace corodb {

// RID-indexed slots holding the newest version of each record. Grows in fixed
// chunks that never move, so a slot address stays valid for the table's life.
class indirection_array {
 public:
  static constexpr unsigned chunk_bits = 14;
  static constexpr std::uint64_t chunk_slots = std::uint64_t{1} << chunk_bits;

  using slot = std::atomic<version*>;

  explicit indirection_array(std::uint64_t max_slots)
      : dir_size_((max_slots + chunk_slots - 1) >> chunk_bits), dir_(new std::atomic<slot*>[dir_size_]) {
    for (std::uint64_t i = 0; i < dir_size_; ++i) dir_[i].store(nullptr, std::memory_order_relaxed);
  }

  ~indirection_array() {
    for (std::uint64_t i = 0; i < dir_size_; ++i) {
      slot* c = dir_[i].load(std::memory_order_relaxed);
      if (c == nullptr) continue;
      for (std::uint64_t j = 0; j < chunk_slots; ++j) {
        version* v = c[j].load(std::memory_order_relaxed);
        while (v != nullptr) {
          version* next = v->next();
          version::destroy(v);
          v = next;
        }
      }
      delete[] c;
    }
  }

  indirection_array(const indirection_array&) = delete;
  indirection_array& operator=(const indirection_array&) = delete;

  // Slot for `i`, creating its chunk if needed.
  slot& ensure(std::uint64_t i) {
    auto& entry = dir_[i >> chunk_bits];
    slot* c = entry.load(std::memory_order_acquire);
    if (c == nullptr) {
      auto* fresh = new slot[chunk_slots];
      for (std::uint64_t j = 0; j < chunk_slots; ++j) fresh[j].store(nullptr, std::memory_order_relaxed);
      if (entry.compare_exchange_strong(c, fresh, std::memory_order_acq_rel, std::memory_order_acquire)) {
        c = fresh;
      } else {
        delete[] fresh;
      }
    }
    return c[i & (chunk_slots - 1)];
  }

  // Slot for `i` if its chunk exists.
  slot* find(std::uint64_t i) const noexcept {
    slot* c = dir_[i >> chunk_bits].load(std::memory_order_acquire);
    return c == nullptr ? nullptr : &c[i & (chunk_slots - 1)];
  }

 private:
  std::uint64_t dir_size_;
  std::unique_ptr<std::atomic<slot*>[]> dir_;
};

class table {
 public:
  using index_type = btree<16>;

  static constexpr std::uint64_t default_max_rids = std::uint64_t{1} << 30;

  table(std::string name, std::uint32_t id, std::uint64_t max_rids = default_max_rids)
      : name_(std::move(name)), id_(id), max_rids_(max_rids), slots_(max_rids) {
    if (max_rids == 0) throw usage_error("table capacity must be positive");
  }

  table(const table&) = delete;
  table& operator=(const table&) = delete;

  const std::string& name() const noexcept { return name_; }
  std::uint32_t id() const noexcept { return id_; }
  bool live() const noexcept { return live_.load(std::memory_order_acquire); }
  std::uint64_t capacity() const noexcept { return max_rids_; }

  // Number of RIDs handed out so far.
  std::uint64_t allocated() const noexcept {
    std::uint64_t n = next_.load(std::memory_order_acquire);
    return n < max_rids_ ? n : max_rids_;
  }

  index_type& index() noexcept { return index_; }
  const index_type& index() const noexcept { return index_; }

  rid allocate() {
    check_live();
    std::uint64_t r = next_.fetch_add(1, std::memory_order_acq_rel);
    if (r >= max_rids_) throw resource_error("table '" + name_ + "' is full");
    slots_.ensure(r);
    return rid{r};
  }

  // Replace the head of `r` with `desired` if it still equals `expected`.
  bool install(rid r, version* expected, version* desired) {
    check_allocated(r);
    if (desired == nullptr || desired->next() != expected || !desired->stamp().is_owner()) {
      throw usage_error("installed version must be owner-stamped and linked to the expected head");
    }
    return slots_.ensure(r.value).compare_exchange_strong(expected, desired, std::memory_order_acq_rel,
                                                          std::memory_order_acquire);
  }

  // Unconditional head replacement for rollback and in-place rewrites by the
  // owning transaction. Same CAS semantics, without the owner-stamp check.
  bool replace_head(rid r, version* expected, version* desired) {
    check_allocated(r);
    return slots_.ensure(r.value).compare_exchange_strong(expected, desired, std::memory_order_acq_rel,
                                                          std::memory_order_acquire);
  }

  version* head(rid r) const {
    check_allocated(r);
    auto* s = slots_.find(r.value);
    return s == nullptr ? nullptr : s->load(std::memory_order_acquire);
  }

  // Address of the slot for prefetching; null if not materialized yet.
  const void* slot_address(rid r) const noexcept { return slots_.find(r.value); }

  void drop() noexcept { live_.store(false, std::memory_order_release); }

 private:
  void check_live() const {
    if (!live()) throw usage_error("table '" + name_ + "' has been dropped");
  }

  void check_allocated(rid r) const {
    check_live();
    if (r.value >= allocated()) throw usage_error("rid out of range");
  }

  std::string name_;
  std::uint32_t id_;
  std::uint64_t max_rids_;
  std::atomic<bool> live_{true};
  std::atomic<std::uint64_t> next_{0};
  indirection_array slots_;
  index_type index_;
};

// Named tables. Dropped tables stay allocated until the catalog is destroyed so
// stale references fail cleanly instead of dangling.
class catalog {
 public:
  table& create(const std::string& name, std::uint64_t max_rids = table::default_max_rids) {
    std::lock_guard<std::mutex> g(mu_);
    if (by_name_.count(name) != 0) throw usage_error("table '" + name + "' already exists");
    auto id = static_cast<std::uint32_t>(all_.size());
    all_.push_back(std::make_unique<table>(name, id, max_rids));
    by_name_.emplace(name, all_.back().get());
    return *all_.back();
  }

  table* find(const std::string& name) const {
    std::lock_guard<std::mutex> g(mu_);
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  table* by_id(std::uint32_t id) const {
    std::lock_guard<std::mutex> g(mu_);
    return id < all_.size() ? all_[id].get() : nullptr;
  }

  void drop(const std::string& name) {
    std::lock_guard<std::mutex> g(mu_);
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw usage_error("no table '" + name + "'");
    it->second->drop();
    by_name_.erase(it);
  }

 private:
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<table>> all_;
  std::map<std::string, table*> by_name_;
};

}  // namespace corodb
