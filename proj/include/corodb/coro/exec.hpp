#pragma once

#include <coroutine>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <thread>
#include <type_traits>

#include "corodb/common.hpp"

namespace corodb::coro {

// How a worker executes transaction tasks.
//   sequential          - no prefetch, suspension points are no-ops
//   sequential_prefetch - prefetch hints, but never yield
//   two_level           - prefetch + yield; engine calls are one flattened coroutine
//                         and a suspension reaches the scheduler in one hop
//   fully_nested        - prefetch + yield through a chain of nested coroutines,
//                         control returns level by level
enum class exec_mode : std::uint8_t { sequential, sequential_prefetch, two_level, fully_nested };

inline constexpr std::string_view to_string(exec_mode m) noexcept {
  switch (m) {
    case exec_mode::sequential: return "seq";
    case exec_mode::sequential_prefetch: return "seq-prefetch";
    case exec_mode::two_level: return "two-level";
    case exec_mode::fully_nested: return "fully-nested";
  }
  return "?";
}

inline std::optional<exec_mode> parse_exec_mode(std::string_view s) noexcept {
  for (auto m : {exec_mode::sequential, exec_mode::sequential_prefetch, exec_mode::two_level,
                 exec_mode::fully_nested}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

inline constexpr bool yields(exec_mode m) noexcept {
  return m == exec_mode::two_level || m == exec_mode::fully_nested;
}

inline constexpr bool prefetches(exec_mode m) noexcept { return m != exec_mode::sequential; }

struct exec_counters {
  std::uint64_t suspensions = 0;
  // Frames that returned control on the way to the resumer. Equals suspensions
  // in the single-hop modes.
  std::uint64_t hops = 0;
  std::uint64_t suspends_under_latch = 0;
  std::uint32_t max_depth = 0;
};

// Per-worker execution state. Installed as the thread's current context while the
// worker drives tasks.
struct exec_context {
  exec_mode mode = exec_mode::sequential;
  unsigned worker_id = 0;
  // Cache lines prefetched per hint; 0 prefetches the whole object.
  unsigned prefetch_lines = 0;
  int latches_held = 0;
  bool in_task = false;
  exec_counters counters;
};

namespace detail {
inline thread_local exec_context* tls_context = nullptr;
}

inline exec_context* current_context() noexcept { return detail::tls_context; }

// Installs `ctx` as the thread's current context and marks it as running tasks.
class context_scope {
 public:
  explicit context_scope(exec_context& ctx, bool in_task = true)
      : ctx_(ctx), prev_(detail::tls_context), prev_in_task_(ctx.in_task) {
    detail::tls_context = &ctx;
    ctx.in_task = in_task;
  }
  ~context_scope() {
    ctx_.in_task = prev_in_task_;
    detail::tls_context = prev_;
  }
  context_scope(const context_scope&) = delete;
  context_scope& operator=(const context_scope&) = delete;

 private:
  exec_context& ctx_;
  exec_context* prev_;
  bool prev_in_task_;
};

inline constexpr std::size_t cache_line = 64;

inline void prefetch(const void* p, std::size_t bytes, unsigned max_lines = 0) noexcept {
  auto* c = static_cast<const char*>(p);
  std::size_t lines = (bytes + cache_line - 1) / cache_line;
  if (lines == 0) lines = 1;
  if (max_lines != 0 && lines > max_lines) lines = max_lines;
  for (std::size_t i = 0; i < lines; ++i) __builtin_prefetch(c + i * cache_line, 0, 3);
}

// Latch bookkeeping so suspension points can detect a suspend while a latch is held.
inline void note_latch_acquired() noexcept {
  if (auto* c = current_context()) ++c->latches_held;
}
inline void note_latch_released() noexcept {
  if (auto* c = current_context()) --c->latches_held;
}

// Backoff for short waits. Yields after a few spins so a preempted holder on the
// same core can make progress.
class spin_wait {
 public:
  void operator()() noexcept {
    if (++n_ < 16) {
      __builtin_ia32_pause();
    } else {
      std::this_thread::yield();
    }
  }

 private:
  unsigned n_ = 0;
};

// A marked point that prefetches `addr` and, in the yielding modes, hands control
// back to whoever resumed the current coroutine.
class suspend_point {
 public:
  suspend_point(const void* addr, std::size_t bytes) noexcept : addr_(addr), bytes_(bytes) {}

  bool await_ready() {
    ctx_ = current_context();
#ifdef CORODB_CHECKED
    if (ctx_ == nullptr || !ctx_->in_task) {
      throw usage_error("suspension point reached outside a running task");
    }
#else
    if (CORODB_UNLIKELY(ctx_ == nullptr)) return true;
#endif
    if (prefetches(ctx_->mode)) prefetch(addr_, bytes_, ctx_->prefetch_lines);
    return !yields(ctx_->mode);
  }

  template <typename Promise>
  void await_suspend(std::coroutine_handle<Promise> h) noexcept {
    ++ctx_->counters.suspensions;
    ++ctx_->counters.hops;
    if (ctx_->latches_held != 0) ++ctx_->counters.suspends_under_latch;
    if constexpr (requires { h.promise().depth(); }) {
      if (h.promise().depth() > ctx_->counters.max_depth) ctx_->counters.max_depth = h.promise().depth();
    }
  }

  void await_resume() const noexcept {}

 private:
  const void* addr_;
  std::size_t bytes_;
  exec_context* ctx_ = nullptr;
};

}  // namespace corodb::coro
