#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corodb/coro/task.hpp"
#include "corodb/index/key.hpp"

namespace corodb {

// Per-operation instrumentation.
struct index_op_stats {
  std::uint64_t nodes_visited = 0;
  std::uint64_t suspend_points = 0;
  std::uint64_t retries = 0;
};

struct scan_entry {
  std::string key;
  rid value;
};

namespace detail {

// Append-only storage for key bytes past the inline eight-byte prefix. Never
// freed before the tree, so optimistic readers can always dereference it.
class key_arena {
 public:
  const char* copy(std::string_view s) {
    std::lock_guard<std::mutex> g(mu_);
    if (s.size() > left_) {
      std::size_t cap = std::max<std::size_t>(chunk_size, s.size());
      chunks_.push_back(std::make_unique<char[]>(cap));
      cur_ = chunks_.back().get();
      left_ = cap;
    }
    char* out = cur_;
    std::memcpy(out, s.data(), s.size());
    cur_ += s.size();
    left_ -= s.size();
    return out;
  }

 private:
  static constexpr std::size_t chunk_size = 1 << 20;
  std::mutex mu_;
  std::vector<std::unique_ptr<char[]>> chunks_;
  char* cur_ = nullptr;
  std::size_t left_ = 0;
};

}  // namespace detail

// B-link tree mapping byte-string keys to RIDs.
//
// Readers never latch: they read a node's version word, read the node, and
// re-check the version, restarting from the root if it moved. Every node has a
// high key and a right link, so a reader that lands on a node that split under
// it moves right instead of failing. Writers latch single nodes for the in-node
// update and latch upward hand over hand during splits; neither path suspends.
//
// The suspendable operations issue a prefetch and a suspension point before
// every node dereference.
template <std::size_t Fanout = 16>
class btree {
  static_assert(Fanout >= 4, "fanout too small");

 public:
  static constexpr std::size_t fanout = Fanout;
  static constexpr unsigned max_height = 24;

  struct key_slot {
    std::uint64_t prefix;
    std::uint32_t len;
    const char* rest;  // bytes after the first eight, null when len <= 8
  };

  struct alignas(64) node {
    std::atomic<std::uint64_t> version{0};
    std::uint16_t count = 0;
    std::uint16_t level = 0;  // 0 for leaves
    bool has_high = false;
    node* right = nullptr;
    key_slot high{};
    key_slot keys[Fanout];
  };

  struct leaf_node : node {
    std::uint64_t rids[Fanout];
  };

  struct inner_node : node {
    node* children[Fanout + 1];
  };

  // Bytes prefetched per node hint.
  static constexpr std::size_t node_bytes = sizeof(inner_node) > sizeof(leaf_node) ? sizeof(inner_node)
                                                                                     : sizeof(leaf_node);

  // Outcome of examining one node for a key.
  struct probe {
    enum kind_t : std::uint8_t { down, right, found, absent, restart } kind;
    const node* next = nullptr;
    std::uint64_t rid = 0;
  };

  btree() { root_.store(new leaf_node(), std::memory_order_release); }

  ~btree() {
    node* level_head = root_.load(std::memory_order_relaxed);
    while (level_head != nullptr) {
      node* below = level_head->level == 0 ? nullptr : static_cast<inner_node*>(level_head)->children[0];
      for (node* n = level_head; n != nullptr;) {
        node* r = n->right;
        destroy(n);
        n = r;
      }
      level_head = below;
    }
  }

  btree(const btree&) = delete;
  btree& operator=(const btree&) = delete;

  const node* root() const noexcept { return root_.load(std::memory_order_acquire); }

  unsigned height() const noexcept { return root()->level + 1u; }

  std::uint64_t retries() const noexcept { return retries_.load(std::memory_order_relaxed); }

  // ---- suspendable operations -------------------------------------------------

  coro::task<std::optional<rid>> search(std::string_view key, index_op_stats* stats = nullptr) const {
    if (auto* c = coro::current_context(); c != nullptr && c->mode == coro::exec_mode::fully_nested) {
      return search_nested(key, stats);
    }
    return search_flat(key, stats);
  }

  coro::task<bool> insert(std::string_view key, rid value, index_op_stats* stats = nullptr) {
    if (auto* c = coro::current_context(); c != nullptr && c->mode == coro::exec_mode::fully_nested) {
      return insert_nested(key, value, stats);
    }
    return insert_flat(key, value, stats);
  }

  // First `count` entries with key >= start, ascending.
  coro::task<std::vector<scan_entry>> scan(std::string_view start, std::size_t count,
                                           index_op_stats* stats = nullptr) const {
    if (count == 0) throw usage_error("scan count must be positive");
    if (auto* c = coro::current_context(); c != nullptr && c->mode == coro::exec_mode::fully_nested) {
      return scan_nested(start, count, stats);
    }
    return scan_flat(start, count, stats);
  }

  // Single-level search with the traversal inlined.
  coro::task<std::optional<rid>> search_flat(std::string_view key, index_op_stats* stats) const {
    search_key k(key);
    const node* n = root();
    for (;;) {
      co_await coro::suspend_point(n, node_bytes);
      count_visit(stats);
      probe p = probe_node(n, k);
      switch (p.kind) {
        case probe::found: co_return rid{p.rid};
        case probe::absent: co_return std::nullopt;
        case probe::restart:
          note_retry(stats);
          n = root();
          break;
        default: n = p.next; break;
      }
    }
  }

  coro::task<bool> insert_flat(std::string_view key, rid value, index_op_stats* stats) {
    search_key k(key);
    path_t path;
    node* n = nullptr;
    for (node* cur = root_mut();;) {
      co_await coro::suspend_point(cur, node_bytes);
      count_visit(stats);
      probe p = probe_node(cur, k);
      if (p.kind == probe::found) co_return false;
      if (p.kind == probe::absent) {
        n = cur;
        break;
      }
      if (p.kind == probe::restart) {
        note_retry(stats);
        path.clear();
        cur = root_mut();
        continue;
      }
      if (p.kind == probe::down) path.set(cur);
      cur = const_cast<node*>(p.next);
    }
    co_return insert_at_leaf(n, k, value, path);
  }

  coro::task<std::vector<scan_entry>> scan_flat(std::string_view start, std::size_t count,
                                                index_op_stats* stats) const {
    search_key k(start);
    const node* n = root();
    for (;;) {
      co_await coro::suspend_point(n, node_bytes);
      count_visit(stats);
      probe p = probe_node(n, k);
      if (p.kind == probe::found || p.kind == probe::absent) break;
      if (p.kind == probe::restart) {
        note_retry(stats);
        n = root();
      } else {
        n = p.next;
      }
    }
    std::vector<scan_entry> out;
    out.reserve(count);
    scan_cursor cur(start);
    for (;;) {
      const node* next = collect_leaf(n, cur, out, count);
      if (out.size() >= count || next == nullptr) break;
      n = next;
      co_await coro::suspend_point(n, node_bytes);
      count_visit(stats);
    }
    co_return out;
  }

  // Fully nested variants: one small coroutine per node visit, awaited from the
  // operation coroutine.
  coro::task<probe> visit(const node* n, std::string_view key, index_op_stats* stats) const {
    co_await coro::suspend_point(n, node_bytes);
    count_visit(stats);
    co_return probe_node(n, search_key(key));
  }

  coro::task<std::optional<rid>> search_nested(std::string_view key, index_op_stats* stats) const {
    const node* n = root();
    for (;;) {
      probe p = co_await visit(n, key, stats);
      switch (p.kind) {
        case probe::found: co_return rid{p.rid};
        case probe::absent: co_return std::nullopt;
        case probe::restart:
          note_retry(stats);
          n = root();
          break;
        default: n = p.next; break;
      }
    }
  }

  coro::task<bool> insert_nested(std::string_view key, rid value, index_op_stats* stats) {
    path_t path;
    node* cur = root_mut();
    for (;;) {
      probe p = co_await visit(cur, key, stats);
      if (p.kind == probe::found) co_return false;
      if (p.kind == probe::absent) break;
      if (p.kind == probe::restart) {
        note_retry(stats);
        path.clear();
        cur = root_mut();
        continue;
      }
      if (p.kind == probe::down) path.set(cur);
      cur = const_cast<node*>(p.next);
    }
    co_return insert_at_leaf(cur, search_key(key), value, path);
  }

  coro::task<const node*> visit_leaf_link(const node* n, index_op_stats* stats) const {
    co_await coro::suspend_point(n, node_bytes);
    count_visit(stats);
    co_return n;
  }

  coro::task<std::vector<scan_entry>> scan_nested(std::string_view start, std::size_t count,
                                                  index_op_stats* stats) const {
    const node* n = root();
    for (;;) {
      probe p = co_await visit(n, start, stats);
      if (p.kind == probe::found || p.kind == probe::absent) break;
      if (p.kind == probe::restart) {
        note_retry(stats);
        n = root();
      } else {
        n = p.next;
      }
    }
    std::vector<scan_entry> out;
    out.reserve(count);
    scan_cursor cur(start);
    for (;;) {
      const node* next = collect_leaf(n, cur, out, count);
      if (out.size() >= count || next == nullptr) break;
      n = co_await visit_leaf_link(next, stats);
    }
    co_return out;
  }

  // ---- non-suspending building blocks -----------------------------------------
  // Engine operations that flatten index traversal into their own coroutine use
  // these directly.

  // Examine `n` for `k` under optimistic validation. Inner nodes yield down or
  // right; leaves yield found, absent or right. restart means the node changed.
  probe probe_node(const node* n, const search_key& k) const noexcept {
    std::uint64_t v = read_begin(n);
    probe p{probe::restart};
    if (n->has_high && compare(k, n->high) >= 0) {
      p = {probe::right, n->right};
    } else if (n->level == 0) {
      auto* leaf = static_cast<const leaf_node*>(n);
      std::size_t i = lower_bound(n, k);
      if (i < n->count && compare(k, n->keys[i]) == 0) {
        p = {probe::found, n, leaf->rids[i]};
      } else {
        p = {probe::absent, n};
      }
    } else {
      auto* in = static_cast<const inner_node*>(n);
      p = {probe::down, in->children[upper_bound(n, k)]};
    }
    if (!read_validate(n, v) || ((p.kind == probe::right || p.kind == probe::down) && p.next == nullptr)) {
      return {probe::restart};
    }
    return p;
  }

  // Inner nodes from the last descent, indexed by level - 1.
  class path_t {
   public:
    void set(node* n) noexcept {
      unsigned l = n->level;
      if (l - 1 < max_height) {
        nodes_[l - 1] = n;
        if (l > depth_) depth_ = l;
      }
    }
    node* at(unsigned level) const noexcept { return level <= depth_ ? nodes_[level - 1] : nullptr; }
    void clear() noexcept { depth_ = 0; }

   private:
    node* nodes_[max_height]{};
    unsigned depth_ = 0;
  };

  // Insert into the leaf reached by a descent. Returns false on duplicate key,
  // storing the existing RID in `existing` if given. Latches are taken and
  // released inside; never suspends.
  bool insert_at_leaf(node* n, const search_key& k, rid value, const path_t& path, rid* existing = nullptr) {
    key_slot slot = make_slot(k.bytes);
    lock(n);
    while (n->has_high && compare(k, n->high) >= 0) {
      node* r = n->right;
      lock(r);
      unlock_unchanged(n);
      n = r;
    }
    auto* leaf = static_cast<leaf_node*>(n);
    std::size_t pos = lower_bound(n, k);
    if (pos < n->count && compare(k, n->keys[pos]) == 0) {
      if (existing != nullptr) *existing = rid{leaf->rids[pos]};
      unlock_unchanged(n);
      return false;
    }
    if (n->count < Fanout) {
      leaf_insert_at(leaf, pos, slot, value.value);
      unlock(n);
      return true;
    }

    auto* r = new leaf_node();
    // Appending past the right end of the key space keeps the left node full so
    // ascending loads do not leave half-empty leaves behind.
    bool append = n->right == nullptr && pos == n->count;
    std::size_t mid = append ? Fanout : Fanout / 2;
    std::size_t moved = n->count - mid;
    std::copy_n(n->keys + mid, moved, r->keys);
    std::copy_n(leaf->rids + mid, moved, r->rids);
    r->count = static_cast<std::uint16_t>(moved);
    n->count = static_cast<std::uint16_t>(mid);
    if (pos <= mid && !append) {
      leaf_insert_at(leaf, pos, slot, value.value);
    } else {
      leaf_insert_at(r, pos - mid, slot, value.value);
    }
    key_slot sep = r->keys[0];
    r->high = n->high;
    r->has_high = n->has_high;
    r->right = n->right;
    n->high = sep;
    n->has_high = true;
    std::atomic_thread_fence(std::memory_order_release);
    n->right = r;
    insert_into_parent(n, sep, r, path);
    return true;
  }

  // Scan position: entries must be > last emitted key, or >= start initially.
  class scan_cursor {
   public:
    explicit scan_cursor(std::string_view start) : bound_(start) {}
    const std::string& bound() const noexcept { return bound_; }
    bool inclusive() const noexcept { return inclusive_; }
    void advance(const std::string& last) {
      bound_ = last;
      inclusive_ = false;
    }

   private:
    std::string bound_;
    bool inclusive_ = true;
  };

  // Append qualifying entries of leaf `n` to `out` (up to `limit` total) and
  // return the right link. Retries the leaf until a consistent read.
  const node* collect_leaf(const node* n, scan_cursor& cur, std::vector<scan_entry>& out,
                           std::size_t limit) const {
    key_slot slots[Fanout];
    std::uint64_t rids[Fanout];
    for (;;) {
      search_key bound(cur.bound());
      std::uint64_t v = read_begin(n);
      auto* leaf = static_cast<const leaf_node*>(n);
      std::size_t taken = 0;
      std::size_t cnt = std::min<std::size_t>(n->count, Fanout);
      for (std::size_t i = 0; i < cnt && out.size() + taken < limit; ++i) {
        int c = compare(bound, n->keys[i]);
        if (c < 0 || (c == 0 && cur.inclusive())) {
          slots[taken] = n->keys[i];
          rids[taken] = leaf->rids[i];
          ++taken;
        }
      }
      const node* next = n->right;
      if (!read_validate(n, v)) {
        retries_.fetch_add(1, std::memory_order_relaxed);
        continue;
      }
      for (std::size_t i = 0; i < taken; ++i) {
        out.push_back({materialize(slots[i]), rid{rids[i]}});
      }
      if (taken > 0) cur.advance(out.back().key);
      return next;
    }
  }

  // Number of keys, walking the leaf level. Not safe against concurrent writers.
  std::size_t size() const {
    const node* n = root();
    while (n->level != 0) n = static_cast<const inner_node*>(n)->children[0];
    std::size_t total = 0;
    for (; n != nullptr; n = n->right) total += n->count;
    return total;
  }

  // Structural check: sorted keys, separators bounding children, linked leaves in
  // order. Returns false on the first violation. Quiescent use only.
  bool check_structure() const {
    const node* head = root();
    while (head != nullptr) {
      std::string prev;
      bool first = true;
      for (const node* n = head; n != nullptr; n = n->right) {
        for (std::size_t i = 0; i < n->count; ++i) {
          std::string k = materialize(n->keys[i]);
          if (!first && k <= prev) return false;
          prev = std::move(k);
          first = false;
        }
        if (n->has_high && n->count > 0 && compare(search_key(prev), n->high) >= 0) return false;
        if (n->has_high != (n->right != nullptr)) return false;
      }
      head = head->level == 0 ? nullptr : static_cast<const inner_node*>(head)->children[0];
    }
    return true;
  }

  void note_retry(index_op_stats* s = nullptr) const noexcept {
    retries_.fetch_add(1, std::memory_order_relaxed);
    if (s != nullptr) ++s->retries;
  }

  static std::string materialize(const key_slot& s) {
    std::string out(s.len, '\0');
    std::uint64_t be = to_big_endian(s.prefix);
    std::memcpy(out.data(), &be, s.len < 8 ? s.len : 8);
    if (s.len > 8) std::memcpy(out.data() + 8, s.rest, s.len - 8);
    return out;
  }

  static int compare(const search_key& k, const key_slot& s) noexcept {
    if (k.prefix != s.prefix) return k.prefix < s.prefix ? -1 : 1;
    std::size_t kl = k.bytes.size();
    if (kl > 8 && s.len > 8) {
      std::size_t n = std::min<std::size_t>(kl, s.len) - 8;
      int c = std::memcmp(k.bytes.data() + 8, s.rest, n);
      if (c != 0) return c < 0 ? -1 : 1;
    }
    // Equal prefixes with either side <= 8 bytes: the shorter key is a prefix.
    return kl < s.len ? -1 : (kl > s.len ? 1 : 0);
  }

 private:
  node* root_mut() noexcept { return root_.load(std::memory_order_acquire); }

  static void count_visit(index_op_stats* s) noexcept {
    if (s != nullptr) {
      ++s->nodes_visited;
      ++s->suspend_points;
    }
  }


  static void destroy(node* n) {
    if (n->level == 0) {
      delete static_cast<leaf_node*>(n);
    } else {
      delete static_cast<inner_node*>(n);
    }
  }

  key_slot make_slot(std::string_view key) {
    key_slot s{key_prefix(key), static_cast<std::uint32_t>(key.size()), nullptr};
    if (key.size() > 8) s.rest = arena_.copy(key.substr(8));
    return s;
  }

  static std::size_t lower_bound(const node* n, const search_key& k) noexcept {
    std::size_t lo = 0, hi = std::min<std::size_t>(n->count, Fanout);
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (compare(k, n->keys[mid]) > 0) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  static std::size_t upper_bound(const node* n, const search_key& k) noexcept {
    std::size_t lo = 0, hi = std::min<std::size_t>(n->count, Fanout);
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (compare(k, n->keys[mid]) >= 0) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    return lo;
  }

  static std::uint64_t read_begin(const node* n) noexcept {
    coro::spin_wait wait;
    for (;;) {
      std::uint64_t v = n->version.load(std::memory_order_acquire);
      if ((v & 1) == 0) return v;
      wait();
    }
  }

  static bool read_validate(const node* n, std::uint64_t v) noexcept {
    std::atomic_thread_fence(std::memory_order_acquire);
    return n->version.load(std::memory_order_relaxed) == v;
  }

  static void lock(node* n) noexcept {
    coro::spin_wait wait;
    for (;;) {
      std::uint64_t v = n->version.load(std::memory_order_relaxed);
      if ((v & 1) == 0 &&
          n->version.compare_exchange_weak(v, v + 1, std::memory_order_acquire, std::memory_order_relaxed)) {
        coro::note_latch_acquired();
        return;
      }
      wait();
    }
  }

  static void unlock(node* n) noexcept {
    n->version.fetch_add(1, std::memory_order_release);
    coro::note_latch_released();
  }

  static void unlock_unchanged(node* n) noexcept {
    n->version.fetch_sub(1, std::memory_order_release);
    coro::note_latch_released();
  }

  static void leaf_insert_at(leaf_node* n, std::size_t pos, const key_slot& slot, std::uint64_t value) noexcept {
    std::copy_backward(n->keys + pos, n->keys + n->count, n->keys + n->count + 1);
    std::copy_backward(n->rids + pos, n->rids + n->count, n->rids + n->count + 1);
    n->keys[pos] = slot;
    n->rids[pos] = value;
    ++n->count;
  }

  // Non-suspending descent to the node at `level` whose range covers `k`.
  node* find_at_level(const search_key& k, unsigned level) noexcept {
    for (;;) {
      node* n = root_mut();
      if (n->level < level) return nullptr;
      bool restarted = false;
      while (n->level > level) {
        probe p = probe_node(n, k);
        if (p.kind == probe::restart) {
          restarted = true;
          break;
        }
        n = const_cast<node*>(p.next);
      }
      if (!restarted) return n;
    }
  }

  // `child` is latched and has just split off `sibling` with separator `sep`.
  // Links the sibling into the parent level and releases `child`.
  void insert_into_parent(node* child, key_slot sep, node* sibling, const path_t& path) {
    unsigned level = child->level + 1u;
    std::string sep_bytes = materialize(sep);
    search_key sk(sep_bytes);
    node* p = path.at(level);
    if (p == nullptr) {
      {
        std::lock_guard<std::mutex> g(root_mu_);
        if (root_.load(std::memory_order_relaxed) == child) {
          auto* r = new inner_node();
          r->level = static_cast<std::uint16_t>(level);
          r->count = 1;
          r->keys[0] = sep;
          r->children[0] = child;
          r->children[1] = sibling;
          root_.store(r, std::memory_order_release);
          unlock(child);
          return;
        }
      }
      p = find_at_level(sk, level);
    }
    lock(p);
    while (p->has_high && compare(sk, p->high) >= 0) {
      node* r = p->right;
      lock(r);
      unlock_unchanged(p);
      p = r;
    }
    unlock(child);

    auto* in = static_cast<inner_node*>(p);
    std::size_t pos = upper_bound(p, sk);
    if (p->count < Fanout) {
      std::copy_backward(p->keys + pos, p->keys + p->count, p->keys + p->count + 1);
      std::copy_backward(in->children + pos + 1, in->children + p->count + 1, in->children + p->count + 2);
      p->keys[pos] = sep;
      in->children[pos + 1] = sibling;
      ++p->count;
      unlock(p);
      return;
    }

    key_slot keys[Fanout + 1];
    node* children[Fanout + 2];
    std::copy_n(p->keys, pos, keys);
    keys[pos] = sep;
    std::copy(p->keys + pos, p->keys + Fanout, keys + pos + 1);
    std::copy_n(in->children, pos + 1, children);
    children[pos + 1] = sibling;
    std::copy(in->children + pos + 1, in->children + Fanout + 1, children + pos + 2);

    std::size_t m = (Fanout + 1) / 2;
    auto* r = new inner_node();
    r->level = p->level;
    r->count = static_cast<std::uint16_t>(Fanout - m);
    std::copy(keys + m + 1, keys + Fanout + 1, r->keys);
    std::copy(children + m + 1, children + Fanout + 2, r->children);
    r->high = p->high;
    r->has_high = p->has_high;
    r->right = p->right;

    std::copy_n(keys, m, p->keys);
    std::copy_n(children, m + 1, in->children);
    p->count = static_cast<std::uint16_t>(m);
    key_slot up = keys[m];
    p->high = up;
    p->has_high = true;
    std::atomic_thread_fence(std::memory_order_release);
    p->right = r;
    insert_into_parent(p, up, r, path);
  }

  std::atomic<node*> root_;
  std::mutex root_mu_;
  detail::key_arena arena_;
  mutable std::atomic<std::uint64_t> retries_{0};
};

}  // namespace corodb
