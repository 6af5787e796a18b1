#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "corodb/common.hpp"
#include "corodb/coro/exec.hpp"

namespace corodb {

struct epoch_stats {
  std::uint64_t advances = 0;
  std::uint64_t bytes_retired = 0;
  std::uint64_t bytes_reclaimed = 0;
  std::uint64_t objects_retired = 0;
  std::uint64_t objects_reclaimed = 0;
  std::uint64_t max_residency_bytes = 0;  // largest pending retire volume seen on one worker
  std::uint64_t enters = 0;
  std::uint64_t exits = 0;
};

// Epoch-based reclamation with one announcement slot per worker.
//
// A worker announces the global epoch when it enters and goes quiescent when it
// exits. Memory retired in epoch e is freed once the global epoch is at least
// e + 2 and no worker still announces an epoch <= e. Guards are meant to span a
// whole batch of transactions, so entering from inside a transaction body is
// rejected.
class epoch_manager {
 public:
  static constexpr std::uint64_t quiescent = std::numeric_limits<std::uint64_t>::max();
  static constexpr std::size_t default_threshold = std::size_t{16} << 20;

  using deleter = void (*)(void*) noexcept;

  class guard {
   public:
    guard() noexcept = default;
    guard(guard&& o) noexcept : m_(std::exchange(o.m_, nullptr)), worker_(o.worker_), epoch_(o.epoch_) {}
    guard& operator=(guard&& o) noexcept {
      if (this != &o) {
        exit();
        m_ = std::exchange(o.m_, nullptr);
        worker_ = o.worker_;
        epoch_ = o.epoch_;
      }
      return *this;
    }
    ~guard() { exit(); }

    bool live() const noexcept { return m_ != nullptr; }
    unsigned worker() const noexcept { return worker_; }
    std::uint64_t epoch() const noexcept { return epoch_; }

    void exit() noexcept {
      if (m_ != nullptr) std::exchange(m_, nullptr)->leave(worker_);
    }

   private:
    friend class epoch_manager;
    guard(epoch_manager* m, unsigned w, std::uint64_t e) noexcept : m_(m), worker_(w), epoch_(e) {}

    epoch_manager* m_ = nullptr;
    unsigned worker_ = 0;
    std::uint64_t epoch_ = 0;
  };

  explicit epoch_manager(std::size_t workers, std::size_t advance_threshold = default_threshold)
      : threshold_(advance_threshold), workers_(workers) {
    if (workers == 0) throw usage_error("epoch manager needs at least one worker");
    for (std::size_t i = 0; i < workers; ++i) workers_[i] = std::make_unique<worker_state>();
  }

  ~epoch_manager() {
    for (auto& w : workers_) {
      for (auto& b : w->buckets) {
        for (auto& r : b.items) r.fn(r.p);
      }
    }
  }

  epoch_manager(const epoch_manager&) = delete;
  epoch_manager& operator=(const epoch_manager&) = delete;

  std::size_t workers() const noexcept { return workers_.size(); }
  std::uint64_t current() const noexcept { return global_.load(std::memory_order_seq_cst); }
  std::size_t threshold() const noexcept { return threshold_; }

  std::uint64_t announced(unsigned worker) const {
    return state(worker).announce.load(std::memory_order_seq_cst);
  }

  [[nodiscard]] guard enter(unsigned worker) {
    auto* ctx = coro::current_context();
    if (ctx != nullptr && ctx->in_task) throw usage_error("epoch enter from inside a transaction body");
    worker_state& w = state(worker);
    if (w.announce.load(std::memory_order_relaxed) != quiescent) throw usage_error("worker already inside an epoch");
    // Re-announce until the announcement matches the global epoch, so a
    // concurrent advance cannot slip between the read and the publish.
    std::uint64_t e = global_.load(std::memory_order_seq_cst);
    for (;;) {
      w.announce.store(e, std::memory_order_seq_cst);
      std::uint64_t again = global_.load(std::memory_order_seq_cst);
      if (again == e) break;
      e = again;
    }
    w.enters.fetch_add(1, std::memory_order_relaxed);
    return guard(this, worker, e);
  }

  void exit(guard& g) {
    if (!g.live()) throw usage_error("guard is not live");
    g.exit();
  }

  // Hand `p` to the reclaimer. `fn` runs once no worker can still reach it.
  void retire(unsigned worker, void* p, std::size_t bytes, deleter fn) {
    worker_state& w = state(worker);
    std::uint64_t e = global_.load(std::memory_order_seq_cst);
    if (w.buckets.empty() || w.buckets.back().epoch != e) w.buckets.push_back({e, {}, 0});
    auto& b = w.buckets.back();
    b.items.push_back({p, fn});
    b.bytes += bytes;
    w.pending_bytes += bytes;
    w.since_advance += bytes;
    w.bytes_retired.fetch_add(bytes, std::memory_order_relaxed);
    w.objects_retired.fetch_add(1, std::memory_order_relaxed);
    if (w.pending_bytes > w.max_residency.load(std::memory_order_relaxed)) {
      w.max_residency.store(w.pending_bytes, std::memory_order_relaxed);
    }
  }

  template <typename T>
  void retire(unsigned worker, T* p, std::size_t bytes) {
    retire(worker, p, bytes, [](void* q) noexcept { delete static_cast<T*>(q); });
  }

  // Advance the global epoch if `worker` has retired at least the threshold
  // since its last advance. Returns whether the epoch moved.
  bool try_advance(unsigned worker) {
    worker_state& w = state(worker);
    if (w.since_advance < threshold_) return false;
    w.since_advance = 0;
    advance();
    return true;
  }

  void advance() noexcept {
    global_.fetch_add(1, std::memory_order_seq_cst);
    advances_.fetch_add(1, std::memory_order_relaxed);
  }

  // Free every bucket of `worker` that has passed its grace period. Returns the
  // number of objects freed.
  std::size_t try_reclaim(unsigned worker) {
    worker_state& w = state(worker);
    if (w.buckets.empty()) return 0;
    std::uint64_t g = global_.load(std::memory_order_seq_cst);
    std::uint64_t oldest = quiescent;
    for (auto& other : workers_) oldest = std::min(oldest, other->announce.load(std::memory_order_seq_cst));
    std::size_t freed = 0;
    while (!w.buckets.empty()) {
      auto& b = w.buckets.front();
      if (g < b.epoch + 2 || oldest <= b.epoch) break;
      for (auto& r : b.items) r.fn(r.p);
      freed += b.items.size();
      w.pending_bytes -= b.bytes;
      w.bytes_reclaimed.fetch_add(b.bytes, std::memory_order_relaxed);
      w.objects_reclaimed.fetch_add(b.items.size(), std::memory_order_relaxed);
      w.buckets.pop_front();
    }
    return freed;
  }

  // Bytes retired by `worker` and not yet freed.
  std::size_t pending_bytes(unsigned worker) const { return state(worker).pending_bytes; }
  std::size_t pending_objects(unsigned worker) const {
    std::size_t n = 0;
    for (auto& b : state(worker).buckets) n += b.items.size();
    return n;
  }

  epoch_stats stats() const noexcept {
    epoch_stats s;
    s.advances = advances_.load(std::memory_order_relaxed);
    for (auto& w : workers_) {
      s.bytes_retired += w->bytes_retired.load(std::memory_order_relaxed);
      s.bytes_reclaimed += w->bytes_reclaimed.load(std::memory_order_relaxed);
      s.objects_retired += w->objects_retired.load(std::memory_order_relaxed);
      s.objects_reclaimed += w->objects_reclaimed.load(std::memory_order_relaxed);
      s.max_residency_bytes = std::max<std::uint64_t>(s.max_residency_bytes, w->max_residency.load(std::memory_order_relaxed));
      s.enters += w->enters.load(std::memory_order_relaxed);
      s.exits += w->exits.load(std::memory_order_relaxed);
    }
    return s;
  }

 private:
  struct retired {
    void* p;
    deleter fn;
  };

  struct bucket {
    std::uint64_t epoch;
    std::vector<retired> items;
    std::size_t bytes;
  };

  struct alignas(64) worker_state {
    std::atomic<std::uint64_t> announce{quiescent};
    // Owner-only.
    std::deque<bucket> buckets;
    std::size_t pending_bytes = 0;
    std::size_t since_advance = 0;
    // Read by stats().
    std::atomic<std::uint64_t> bytes_retired{0};
    std::atomic<std::uint64_t> bytes_reclaimed{0};
    std::atomic<std::uint64_t> objects_retired{0};
    std::atomic<std::uint64_t> objects_reclaimed{0};
    std::atomic<std::uint64_t> max_residency{0};
    std::atomic<std::uint64_t> enters{0};
    std::atomic<std::uint64_t> exits{0};
  };

  worker_state& state(unsigned worker) {
    if (worker >= workers_.size()) throw usage_error("worker id out of range");
    return *workers_[worker];
  }
  const worker_state& state(unsigned worker) const {
    if (worker >= workers_.size()) throw usage_error("worker id out of range");
    return *workers_[worker];
  }

  void leave(unsigned worker) noexcept {
    worker_state& w = *workers_[worker];
    w.announce.store(quiescent, std::memory_order_seq_cst);
    w.exits.fetch_add(1, std::memory_order_relaxed);
    try_advance(worker);
    try_reclaim(worker);
  }

  std::size_t threshold_;
  std::atomic<std::uint64_t> global_{0};
  std::atomic<std::uint64_t> advances_{0};
  std::vector<std::unique_ptr<worker_state>> workers_;
};

}  // namespace corodb
