#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corodb/coro/task.hpp"
#include "corodb/epoch/epoch.hpp"
#include "corodb/storage/table.hpp"
#include "corodb/txn/transaction.hpp"
#include "corodb/wal/log.hpp"

namespace corodb {

struct engine_config {
  unsigned workers = 1;
  unsigned batch_size = 8;
  std::size_t epoch_threshold = epoch_manager::default_threshold;
  log_sink::mode log_mode = log_sink::mode::count;
  std::optional<std::filesystem::path> log_dir;
};

struct txn_counters {
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
};

struct scan_row {
  std::string key;
  std::string_view value;
};

// Multi-version snapshot-isolation engine.
//
// Every record access is a coroutine that prefetches and suspends before each
// index node, indirection slot and version it touches. In fully_nested mode the
// index traversal and chain walk run as nested coroutines; otherwise each
// operation is one flat coroutine.
//
// Timestamps: the clock moves in steps of two. Transactions begin at the
// current (even) value and commit at an odd value taken by a fetch-add, so a
// version is visible to a snapshot exactly when its commit stamp is smaller
// than the snapshot's begin stamp, and a commit stamp always exceeds its own
// begin stamp.
class engine {
 public:
  using index_type = table::index_type;
  using node = index_type::node;
  using probe = index_type::probe;

  static constexpr std::size_t version_prefetch_bytes = 2 * coro::cache_line;
  static constexpr unsigned max_batch_size = 256;

  explicit engine(engine_config cfg = {}) : cfg_(std::move(cfg)), epochs_(check_config(cfg_), cfg_.epoch_threshold) {
    std::size_t slots = std::size_t{cfg_.workers} * cfg_.batch_size;
    registry_ = std::make_unique<registry_entry[]>(slots);
    outcomes_ = std::make_unique<outcome_counters[]>(cfg_.workers);
    for (unsigned w = 0; w < cfg_.workers; ++w) {
      for (unsigned s = 0; s < cfg_.batch_size; ++s) txns_.push_back(std::make_unique<transaction>(w, s));
      sinks_.push_back(std::make_unique<log_sink>(w, cfg_.log_mode, cfg_.log_dir));
    }
  }

  engine(const engine&) = delete;
  engine& operator=(const engine&) = delete;

  const engine_config& config() const noexcept { return cfg_; }
  catalog& tables() noexcept { return catalog_; }
  epoch_manager& epochs() noexcept { return epochs_; }
  log_sink& sink(unsigned worker) { return *sinks_.at(worker); }
  timestamp clock() const noexcept { return clock_.load(std::memory_order_seq_cst); }

  // Finished transactions, for one worker or summed over all of them.
  txn_counters counters(unsigned worker) const {
    if (worker >= cfg_.workers) throw usage_error("worker out of range");
    auto& o = outcomes_[worker];
    return {o.commits.load(std::memory_order_relaxed), o.aborts.load(std::memory_order_relaxed)};
  }
  txn_counters counters() const {
    txn_counters sum;
    for (unsigned w = 0; w < cfg_.workers; ++w) {
      auto c = counters(w);
      sum.commits += c.commits;
      sum.aborts += c.aborts;
    }
    return sum;
  }

  table& create_table(const std::string& name, std::uint64_t max_rids = table::default_max_rids) {
    return catalog_.create(name, max_rids);
  }

  transaction& slot(unsigned worker, unsigned slot) {
    if (worker >= cfg_.workers || slot >= cfg_.batch_size) throw usage_error("slot out of range");
    return *txns_[std::size_t{worker} * cfg_.batch_size + slot];
  }

  // Start a transaction in a batch slot, reusing the slot's buffers.
  transaction& begin(unsigned worker, unsigned slot_id) {
    transaction& tx = slot(worker, slot_id);
    if (tx.active()) throw usage_error("batch slot is busy");
    ++tx.seq_;
    tx.writes_.clear();
    tx.reads_.clear();
    tx.log_.clear();
    tx.scratch_.reset();
    registry_for(worker, slot_id).owner.store(tx.owner().pack(), std::memory_order_seq_cst);
    tx.begin_ = clock_.load(std::memory_order_seq_cst);
    tx.state_ = txn_state::active;
    return tx;
  }

  // Value visible to `tx` under `key`, or nothing if absent or deleted. The view
  // stays valid until the slot's next transaction begins.
  coro::task<std::optional<std::string_view>> read(transaction& tx, table& t, std::string_view key) {
    return nested() ? read_nested(tx, t, key) : read_flat(tx, t, key);
  }

  coro::task<rc> update(transaction& tx, table& t, std::string_view key, std::string_view value) {
    return nested() ? write_nested(tx, t, key, value, false) : write_flat(tx, t, key, value, false);
  }

  coro::task<rc> remove(transaction& tx, table& t, std::string_view key) {
    return nested() ? write_nested(tx, t, key, {}, true) : write_flat(tx, t, key, {}, true);
  }

  coro::task<rc> insert(transaction& tx, table& t, std::string_view key, std::string_view value) {
    return nested() ? insert_nested(tx, t, key, value) : insert_flat(tx, t, key, value);
  }

  // First `count` visible records with key >= start.
  coro::task<std::vector<scan_row>> scan(transaction& tx, table& t, std::string_view start, std::size_t count) {
    if (count == 0) throw usage_error("scan count must be positive");
    return nested() ? scan_nested(tx, t, start, count) : scan_flat(tx, t, start, count);
  }

  // Reads all `keys`, interleaving the lookups among themselves. Never yields
  // to the caller's scheduler.
  coro::task<std::vector<std::optional<std::string_view>>> multi_get(transaction& tx, table& t,
                                                                     std::span<const std::string> keys) {
    check_active(tx);
    if (keys.empty()) throw usage_error("multi_get needs at least one key");
    std::vector<coro::task<std::optional<std::string_view>>> reads;
    reads.reserve(keys.size());
    for (auto& k : keys) reads.push_back(read(tx, t, k));
    for (bool pending = true; pending;) {
      pending = false;
      for (auto& r : reads) {
        if (!r.done()) {
          r.resume();
          pending = pending || !r.done();
        }
      }
    }
    std::vector<std::optional<std::string_view>> out;
    out.reserve(reads.size());
    for (auto& r : reads) out.push_back(r.result());
    co_return out;
  }

  // Commit. Returns the commit timestamp, or nothing for a read-only
  // transaction, which consumes no clock tick.
  std::optional<timestamp> commit(transaction& tx) {
    check_active(tx);
    registry_entry& reg = registry_for(tx.worker_, tx.slot_);
    if (tx.writes_.empty()) {
      finish(tx, reg, txn_state::committed);
      return std::nullopt;
    }
    reg.commit_ts.store(pending_ts, std::memory_order_seq_cst);
    timestamp c = clock_.fetch_add(2, std::memory_order_seq_cst) + 1;
    if (c <= tx.begin_) throw invariant_error("commit timestamp not after begin timestamp");
    sinks_[tx.worker_]->seal(tx.log_, c);
    reg.commit_ts.store(c, std::memory_order_seq_cst);
    auto stamp = version_stamp::committed(c);
    for (auto& w : tx.writes_) w.installed->set_stamp(stamp);
    finish(tx, reg, txn_state::committed);
    return c;
  }

  void abort(transaction& tx) {
    check_active(tx);
    rollback(tx);
  }

 private:
  static constexpr std::uint64_t pending_ts = ~std::uint64_t{0};

  // Published state of the transaction in each slot, so readers meeting an owner
  // mark can tell an in-flight writer from one that has already committed.
  struct alignas(64) registry_entry {
    std::atomic<std::uint64_t> owner{0};
    std::atomic<std::uint64_t> commit_ts{0};
  };

  // Written only by the owning worker.
  struct alignas(64) outcome_counters {
    std::atomic<std::uint64_t> commits{0};
    std::atomic<std::uint64_t> aborts{0};
  };

  static unsigned check_config(const engine_config& c) {
    if (c.workers == 0 || c.workers > 0xffff) throw usage_error("worker count out of range");
    if (c.batch_size == 0 || c.batch_size > max_batch_size) throw usage_error("batch size out of range");
    return c.workers;
  }

  static bool nested() noexcept {
    auto* c = coro::current_context();
    return c != nullptr && c->mode == coro::exec_mode::fully_nested;
  }

  static void check_active(const transaction& tx) {
    if (!tx.active()) throw usage_error("transaction is not active");
  }

  registry_entry& registry_for(unsigned worker, unsigned slot) noexcept {
    return registry_[std::size_t{worker} * cfg_.batch_size + slot];
  }

  void finish(transaction& tx, registry_entry& reg, txn_state s) {
    auto& o = outcomes_[tx.worker_];
    auto& n = s == txn_state::committed ? o.commits : o.aborts;
    n.store(n.load(std::memory_order_relaxed) + 1, std::memory_order_relaxed);
    reg.owner.store(0, std::memory_order_seq_cst);
    reg.commit_ts.store(0, std::memory_order_seq_cst);
    tx.log_.clear();
    tx.state_ = s;
  }

  // Whether `v` belongs to the snapshot of `tx`.
  bool visible(const transaction& tx, const version* v) noexcept {
    version_stamp s = v->stamp();
    if (!s.is_owner()) return s.commit_ts() < tx.begin_;
    owner_id o = s.owner();
    if (o == tx.owner()) return true;
    if (o.worker >= cfg_.workers || o.slot >= cfg_.batch_size) return false;
    registry_entry& reg = registry_for(o.worker, o.slot);
    const std::uint64_t packed = o.pack();
    coro::spin_wait wait;
    for (;;) {
      if (reg.owner.load(std::memory_order_seq_cst) == packed) {
        std::uint64_t ct = reg.commit_ts.load(std::memory_order_seq_cst);
        if (reg.owner.load(std::memory_order_seq_cst) == packed) {
          if (ct == 0) return false;
          if (ct == pending_ts) {
            wait();
            continue;
          }
          return ct < tx.begin_;
        }
      }
      // The owner has finished. Committed versions are stamped before the
      // registry is cleared, so a remaining owner mark means a rollback.
      s = v->stamp();
      return !s.is_owner() && s.commit_ts() < tx.begin_;
    }
  }

  std::optional<std::string_view> materialize(transaction& tx, const version* v) {
    CORODB_CHECK(visible(tx, v));
    if (v->tombstone()) return std::nullopt;
    return tx.scratch_.copy(v->payload());
  }

  version_stamp own_stamp(const transaction& tx) const noexcept { return version_stamp::owned_by(tx.owner()); }

  void retire(unsigned worker, version* v) {
    epochs_.retire(worker, v, v->footprint(),
                   [](void* p) noexcept { version::destroy(static_cast<version*>(p)); });
  }

  rc fail(transaction& tx, rc code) {
    rollback(tx);
    return code;
  }

  void rollback(transaction& tx) {
    for (auto it = tx.writes_.rbegin(); it != tx.writes_.rend(); ++it) {
      version* v = it->installed;
      if (!it->tbl->replace_head(it->r, v, v->next())) throw invariant_error("rollback found a foreign head");
      retire(tx.worker_, v);
    }
    tx.writes_.clear();
    finish(tx, registry_for(tx.worker_, tx.slot_), txn_state::aborted);
  }

  // Rewrite this transaction's own head version of `r`.
  void replace_own(transaction& tx, table& t, rid r, version* h, std::string_view value, bool tomb) {
    auto* w = tx.find_write(h);
    if (w == nullptr) throw invariant_error("own version missing from write set");
    version* nv = version::make(own_stamp(tx), h->next(), value, tomb);
    if (!t.replace_head(r, h, nv)) {
      version::destroy(nv);
      throw invariant_error("own head changed underneath");
    }
    w->installed = nv;
    log_kind k = tomb ? log_kind::remove : (w->inserted ? log_kind::insert : log_kind::update);
    tx.log_.rewrite(w->log_index, k, value);
    retire(tx.worker_, h);
  }

  // Update or delete over head `h` of an existing record; first updater wins.
  rc overwrite(transaction& tx, table& t, rid r, version* h, std::string_view value, bool tomb) {
    if (h == nullptr) return fail(tx, rc::not_found);
    version_stamp s = h->stamp();
    if (s.is_owner()) {
      if (s.owner() != tx.owner()) return fail(tx, rc::conflict);
      if (h->tombstone()) return fail(tx, rc::not_found);
      replace_own(tx, t, r, h, value, tomb);
      return rc::ok;
    }
    if (s.commit_ts() >= tx.begin_) return fail(tx, rc::conflict);
    if (h->tombstone()) return fail(tx, rc::not_found);
    version* nv = version::make(own_stamp(tx), h, value, tomb);
    if (!t.install(r, h, nv)) {
      version::destroy(nv);
      return fail(tx, rc::conflict);
    }
    std::size_t li = tx.log_.append(tomb ? log_kind::remove : log_kind::update, t.id(), r.value, value);
    tx.writes_.push_back({&t, r, nv, li, false});
    return rc::ok;
  }

  void record_insert(transaction& tx, table& t, rid r, version* v, std::string_view value) {
    std::size_t li = tx.log_.append(log_kind::insert, t.id(), r.value, value);
    tx.writes_.push_back({&t, r, v, li, true});
  }

  // Drop the version installed on a fresh RID that lost the index race. Nobody
  // else can reach the RID, so the version is freed directly.
  static void discard_fresh(table& t, rid r, version* v) {
    if (!t.replace_head(r, v, nullptr)) throw invariant_error("fresh rid head changed");
    version::destroy(v);
  }

  // Insert for a key already in the index, mapped to `r` with head `h`. Reuses
  // the RID when the record is absent or deleted in this snapshot.
  rc reinsert(transaction& tx, table& t, rid r, version* h, std::string_view value) {
    if (h == nullptr) {
      version* nv = version::make(own_stamp(tx), nullptr, value);
      if (!t.install(r, nullptr, nv)) {
        version::destroy(nv);
        return fail(tx, rc::conflict);
      }
      record_insert(tx, t, r, nv, value);
      return rc::ok;
    }
    version_stamp s = h->stamp();
    if (s.is_owner()) {
      if (s.owner() != tx.owner()) return fail(tx, rc::conflict);
      if (!h->tombstone()) return fail(tx, rc::duplicate);
      replace_own(tx, t, r, h, value, false);
      return rc::ok;
    }
    if (s.commit_ts() >= tx.begin_) return fail(tx, rc::conflict);
    if (!h->tombstone()) return fail(tx, rc::duplicate);
    version* nv = version::make(own_stamp(tx), h, value);
    if (!t.install(r, h, nv)) {
      version::destroy(nv);
      return fail(tx, rc::conflict);
    }
    record_insert(tx, t, r, nv, value);
    return rc::ok;
  }

  // ---- flattened operations ---------------------------------------------------

  coro::task<std::optional<std::string_view>> read_flat(transaction& tx, table& t, std::string_view key) {
    check_active(tx);
    index_type& idx = t.index();
    search_key k(key);
    std::optional<rid> r;
    for (const node* n = idx.root();;) {
      co_await coro::suspend_point(n, index_type::node_bytes);
      probe p = idx.probe_node(n, k);
      if (p.kind == probe::found) {
        r = rid{p.rid};
        break;
      }
      if (p.kind == probe::absent) break;
      if (p.kind == probe::restart) {
        idx.note_retry();
        n = idx.root();
      } else {
        n = p.next;
      }
    }
    if (!r) co_return std::nullopt;
    tx.reads_.push_back({t.id(), *r});
    co_await coro::suspend_point(t.slot_address(*r), sizeof(void*));
    for (const version* v = t.head(*r); v != nullptr; v = v->next()) {
      co_await coro::suspend_point(v, version_prefetch_bytes);
      if (visible(tx, v)) co_return materialize(tx, v);
    }
    co_return std::nullopt;
  }

  coro::task<rc> write_flat(transaction& tx, table& t, std::string_view key, std::string_view value, bool tomb) {
    check_active(tx);
    index_type& idx = t.index();
    search_key k(key);
    std::optional<rid> r;
    for (const node* n = idx.root();;) {
      co_await coro::suspend_point(n, index_type::node_bytes);
      probe p = idx.probe_node(n, k);
      if (p.kind == probe::found) {
        r = rid{p.rid};
        break;
      }
      if (p.kind == probe::absent) break;
      if (p.kind == probe::restart) {
        idx.note_retry();
        n = idx.root();
      } else {
        n = p.next;
      }
    }
    if (!r) co_return fail(tx, rc::not_found);
    co_await coro::suspend_point(t.slot_address(*r), sizeof(void*));
    version* h = t.head(*r);
    if (h != nullptr) co_await coro::suspend_point(h, version_prefetch_bytes);
    co_return overwrite(tx, t, *r, h, value, tomb);
  }

  coro::task<rc> insert_flat(transaction& tx, table& t, std::string_view key, std::string_view value) {
    check_active(tx);
    rid r = t.allocate();
    version* v = version::make(own_stamp(tx), nullptr, value);
    t.install(r, nullptr, v);

    index_type& idx = t.index();
    search_key k(key);
    index_type::path_t path;
    rid existing{};
    bool inserted = false;
    for (node* n = const_cast<node*>(idx.root());;) {
      co_await coro::suspend_point(n, index_type::node_bytes);
      probe p = idx.probe_node(n, k);
      if (p.kind == probe::found) {
        existing = rid{p.rid};
        break;
      }
      if (p.kind == probe::absent) {
        inserted = idx.insert_at_leaf(n, k, r, path, &existing);
        break;
      }
      if (p.kind == probe::restart) {
        idx.note_retry();
        path.clear();
        n = const_cast<node*>(idx.root());
        continue;
      }
      if (p.kind == probe::down) path.set(n);
      n = const_cast<node*>(p.next);
    }
    if (inserted) {
      record_insert(tx, t, r, v, value);
      co_return rc::ok;
    }
    discard_fresh(t, r, v);
    co_await coro::suspend_point(t.slot_address(existing), sizeof(void*));
    version* h = t.head(existing);
    if (h != nullptr) co_await coro::suspend_point(h, version_prefetch_bytes);
    co_return reinsert(tx, t, existing, h, value);
  }

  coro::task<std::vector<scan_row>> scan_flat(transaction& tx, table& t, std::string_view start, std::size_t count) {
    check_active(tx);
    index_type& idx = t.index();
    search_key k(start);
    const node* n = idx.root();
    for (;;) {
      co_await coro::suspend_point(n, index_type::node_bytes);
      probe p = idx.probe_node(n, k);
      if (p.kind == probe::found || p.kind == probe::absent) break;
      if (p.kind == probe::restart) {
        idx.note_retry();
        n = idx.root();
      } else {
        n = p.next;
      }
    }
    std::vector<scan_row> out;
    std::vector<scan_entry> entries;
    index_type::scan_cursor cur(start);
    for (;;) {
      entries.clear();
      const node* next = idx.collect_leaf(n, cur, entries, index_type::fanout);
      for (auto& e : entries) {
        tx.reads_.push_back({t.id(), e.value});
        co_await coro::suspend_point(t.slot_address(e.value), sizeof(void*));
        const version* v = t.head(e.value);
        for (; v != nullptr; v = v->next()) {
          co_await coro::suspend_point(v, version_prefetch_bytes);
          if (visible(tx, v)) break;
        }
        if (v != nullptr && !v->tombstone()) {
          out.push_back({std::move(e.key), tx.scratch_.copy(v->payload())});
          if (out.size() == count) co_return out;
        }
      }
      if (next == nullptr) break;
      n = next;
      co_await coro::suspend_point(n, index_type::node_bytes);
    }
    co_return out;
  }

  // ---- nested operations ------------------------------------------------------

  static coro::task<version*> load_head(table& t, rid r) {
    co_await coro::suspend_point(t.slot_address(r), sizeof(void*));
    co_return t.head(r);
  }

  static coro::task<void> touch(const version* v) {
    co_await coro::suspend_point(v, version_prefetch_bytes);
  }

  coro::task<bool> visit_version(const transaction& tx, const version* v) {
    co_await coro::suspend_point(v, version_prefetch_bytes);
    co_return visible(tx, v);
  }

  coro::task<const version*> walk_chain(const transaction& tx, const version* v) {
    for (; v != nullptr; v = v->next()) {
      if (co_await visit_version(tx, v)) co_return v;
    }
    co_return nullptr;
  }

  coro::task<std::optional<std::string_view>> read_nested(transaction& tx, table& t, std::string_view key) {
    check_active(tx);
    std::optional<rid> r = co_await t.index().search_nested(key, nullptr);
    if (!r) co_return std::nullopt;
    tx.reads_.push_back({t.id(), *r});
    const version* head = co_await load_head(t, *r);
    const version* v = co_await walk_chain(tx, head);
    if (v == nullptr) co_return std::nullopt;
    co_return materialize(tx, v);
  }

  coro::task<rc> write_nested(transaction& tx, table& t, std::string_view key, std::string_view value, bool tomb) {
    check_active(tx);
    std::optional<rid> r = co_await t.index().search_nested(key, nullptr);
    if (!r) co_return fail(tx, rc::not_found);
    version* h = co_await load_head(t, *r);
    if (h != nullptr) co_await touch(h);
    co_return overwrite(tx, t, *r, h, value, tomb);
  }

  coro::task<rc> insert_nested(transaction& tx, table& t, std::string_view key, std::string_view value) {
    check_active(tx);
    rid r = t.allocate();
    version* v = version::make(own_stamp(tx), nullptr, value);
    t.install(r, nullptr, v);
    if (co_await t.index().insert_nested(key, r, nullptr)) {
      record_insert(tx, t, r, v, value);
      co_return rc::ok;
    }
    discard_fresh(t, r, v);
    // Index keys are never removed, so the duplicate is still there.
    std::optional<rid> existing = co_await t.index().search_nested(key, nullptr);
    if (!existing) throw invariant_error("duplicate index key vanished");
    version* h = co_await load_head(t, *existing);
    if (h != nullptr) co_await touch(h);
    co_return reinsert(tx, t, *existing, h, value);
  }

  coro::task<std::vector<scan_row>> scan_nested(transaction& tx, table& t, std::string_view start,
                                                std::size_t count) {
    check_active(tx);
    std::vector<scan_row> out;
    std::string from(start);
    for (;;) {
      std::size_t want = count - out.size();
      std::vector<scan_entry> entries = co_await t.index().scan_nested(from, want, nullptr);
      for (auto& e : entries) {
        tx.reads_.push_back({t.id(), e.value});
        const version* head = co_await load_head(t, e.value);
        const version* v = co_await walk_chain(tx, head);
        if (v != nullptr && !v->tombstone()) {
          out.push_back({e.key, tx.scratch_.copy(v->payload())});
          if (out.size() == count) co_return out;
        }
      }
      if (entries.size() < want) break;
      // Smallest key after the last one returned.
      from = entries.back().key;
      from.push_back('\0');
    }
    co_return out;
  }

  engine_config cfg_;
  epoch_manager epochs_;
  catalog catalog_;
  std::atomic<timestamp> clock_{2};
  std::unique_ptr<registry_entry[]> registry_;
  std::unique_ptr<outcome_counters[]> outcomes_;
  std::vector<std::unique_ptr<transaction>> txns_;
  std::vector<std::unique_ptr<log_sink>> sinks_;
};

}  // namespace corodb
