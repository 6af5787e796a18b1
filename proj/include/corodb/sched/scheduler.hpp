#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "corodb/coro/task.hpp"
#include "corodb/sched/histogram.hpp"
#include "corodb/txn/engine.hpp"

namespace corodb {

// One whole transaction: application logic plus engine calls. The scheduler
// begins the transaction before the first resume and commits it if the body
// returns with it still active.
using txn_body = std::function<coro::task<void>(transaction&)>;

// Pull-based supplier. Returns nothing once drained.
using txn_source = std::function<std::optional<txn_body>()>;

struct scheduler_config {
  unsigned batch_size = 8;
  coro::exec_mode mode = coro::exec_mode::two_level;
  unsigned prefetch_lines = 0;
};

struct run_stats {
  std::uint64_t batches = 0;
  std::uint64_t admitted = 0;
  std::uint64_t resumes = 0;
  std::uint64_t suspensions = 0;
  std::uint64_t hops = 0;
  std::uint64_t suspends_under_latch = 0;
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
  std::uint64_t errors = 0;
  std::uint64_t epoch_enters = 0;
  std::uint64_t epoch_exits = 0;
  double wall_seconds = 0;
  histogram latency_ns;
  std::string last_error;

  void merge(const run_stats& o) {
    batches += o.batches;
    admitted += o.admitted;
    resumes += o.resumes;
    suspensions += o.suspensions;
    hops += o.hops;
    suspends_under_latch += o.suspends_under_latch;
    commits += o.commits;
    aborts += o.aborts;
    errors += o.errors;
    epoch_enters += o.epoch_enters;
    epoch_exits += o.epoch_exits;
    if (o.wall_seconds > wall_seconds) wall_seconds = o.wall_seconds;
    latency_ns.merge(o.latency_ns);
    if (!o.last_error.empty()) last_error = o.last_error;
  }
};

// Fixed-capacity set of bodies waiting for the next batch.
class batch_state {
 public:
  explicit batch_state(unsigned capacity) : bodies_(capacity) {
    if (capacity == 0) throw usage_error("batch size must be positive");
  }

  unsigned admit(txn_body body) {
    if (size_ == bodies_.size()) throw usage_error("batch is full");
    bodies_[size_] = std::move(body);
    return size_++;
  }

  unsigned size() const noexcept { return size_; }
  unsigned capacity() const noexcept { return static_cast<unsigned>(bodies_.size()); }
  bool full() const noexcept { return size_ == bodies_.size(); }
  txn_body& body(unsigned i) { return bodies_.at(i); }

  void clear() noexcept {
    for (unsigned i = 0; i < size_; ++i) bodies_[i] = nullptr;
    size_ = 0;
  }

 private:
  std::vector<txn_body> bodies_;
  unsigned size_ = 0;
};

// Per-worker batch scheduler. Admits up to batch_size bodies, then resumes them
// round-robin in slot order until every one is done, inside one epoch.
class scheduler {
 public:
  using clock = std::chrono::steady_clock;

  scheduler(engine& eng, unsigned worker, scheduler_config cfg = {})
      : eng_(eng), worker_(worker), cfg_(cfg), batch_(cfg.batch_size), slots_(cfg.batch_size) {
    if (worker >= eng.config().workers) throw usage_error("worker out of range");
    if (cfg.batch_size > eng.config().batch_size) throw usage_error("batch size exceeds engine slots");
    ctx_.mode = cfg.mode;
    ctx_.worker_id = worker;
    ctx_.prefetch_lines = cfg.prefetch_lines;
  }

  scheduler(const scheduler&) = delete;
  scheduler& operator=(const scheduler&) = delete;

  const scheduler_config& config() const noexcept { return cfg_; }
  coro::exec_context& context() noexcept { return ctx_; }

  // Test hook, called with the slot index before every resume.
  std::function<void(unsigned)> on_resume;

  run_stats run(const txn_source& source, const std::atomic<bool>* stop = nullptr) {
    run_stats st;
    coro::context_scope scope(ctx_, false);
    auto before = ctx_.counters;
    auto t0 = clock::now();
    for (;;) {
      if (stop != nullptr && stop->load(std::memory_order_relaxed)) break;
      batch_.clear();
      while (!batch_.full()) {
        auto b = source();
        if (!b) break;
        batch_.admit(std::move(*b));
      }
      unsigned n = batch_.size();
      if (n == 0) break;
      run_batch(n, st);
    }
    batch_.clear();
    st.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    st.suspensions = ctx_.counters.suspensions - before.suspensions;
    st.hops = ctx_.counters.hops - before.hops;
    st.suspends_under_latch = ctx_.counters.suspends_under_latch - before.suspends_under_latch;
    return st;
  }

 private:
  struct slot_state {
    coro::task<void> task;
    transaction* tx = nullptr;
    clock::time_point admitted;
    bool finished = false;
  };

  void run_batch(unsigned n, run_stats& st) {
    auto guard = eng_.epochs().enter(worker_);
    ++st.epoch_enters;
    st.admitted += n;
    for (unsigned i = 0; i < n; ++i) {
      auto& s = slots_[i];
      s.tx = &eng_.begin(worker_, i);
      s.admitted = clock::now();
      s.finished = false;
      try {
        s.task = batch_.body(i)(*s.tx);
      } catch (const std::exception& e) {
        fail(s, st, e.what());
      }
    }

    for (;;) {
      unsigned done = 0;
      for (unsigned i = 0; i < n; ++i) {
        auto& s = slots_[i];
        if (s.finished) {
          ++done;
          continue;
        }
        if (on_resume) on_resume(i);
        ctx_.in_task = true;
        s.task.resume();
        ctx_.in_task = false;
        ++st.resumes;
        if (s.task.done()) complete(s, st);
      }
      if (done == n) break;
    }

    for (unsigned i = 0; i < n; ++i) slots_[i].task.reset();
    guard.exit();
    ++st.epoch_exits;
    ++st.batches;
  }

  void complete(slot_state& s, run_stats& st) {
    if (s.task.has_error()) {
      try {
        s.task.result();
      } catch (const std::exception& e) {
        fail(s, st, e.what());
        return;
      } catch (...) {
        fail(s, st, "unknown error");
        return;
      }
    }
    if (s.tx->active()) eng_.commit(*s.tx);
    if (s.tx->state() == txn_state::committed) {
      ++st.commits;
    } else {
      ++st.aborts;
    }
    finish(s, st);
  }

  void fail(slot_state& s, run_stats& st, const char* what) {
    if (s.tx->active()) eng_.abort(*s.tx);
    ++st.errors;
    ++st.aborts;
    st.last_error = what;
    finish(s, st);
  }

  static void finish(slot_state& s, run_stats& st) {
    s.finished = true;
    auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - s.admitted).count();
    st.latency_ns.record(static_cast<std::uint64_t>(ns < 0 ? 0 : ns));
  }

  engine& eng_;
  unsigned worker_;
  scheduler_config cfg_;
  coro::exec_context ctx_;
  batch_state batch_;
  std::vector<slot_state> slots_;
};

}  // namespace corodb
