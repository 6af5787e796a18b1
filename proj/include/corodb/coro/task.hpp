#pragma once

#include <coroutine>
#include <exception>
#include <optional>
#include <utility>

#include "corodb/coro/exec.hpp"
#include "corodb/coro/frame_pool.hpp"

namespace corodb::coro {

template <typename T = void>
class task;

namespace detail {

// State shared by every task promise.
//
// Awaiting a child task behaves differently per execution mode:
//  * single-hop (every mode except fully_nested): the parent transfers directly
//    into the child and the root remembers the innermost active frame (leaf_).
//    A suspension inside the child returns straight to whoever resumed the root,
//    and resuming the root resumes that leaf.
//  * relay (fully_nested): the parent drives the child itself. When the child
//    suspends, the parent suspends too, so control goes back level by level, and
//    resuming the root walks down the chain again to reach the suspended leaf.
class promise_base {
 public:
  static void* operator new(std::size_t n) { return local_frame_pool().allocate(n); }
  static void operator delete(void* p, std::size_t n) noexcept { local_frame_pool().deallocate(p, n); }

  std::suspend_always initial_suspend() noexcept { return {}; }

  struct final_awaiter {
    bool await_ready() const noexcept { return false; }

    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept {
      promise_base& p = h.promise();
      if (p.continuation_) {
        p.root_->leaf_ = p.continuation_;
        return p.continuation_;
      }
      return std::noop_coroutine();
    }

    void await_resume() const noexcept {}
  };

  final_awaiter final_suspend() noexcept { return {}; }

  void unhandled_exception() noexcept { error_ = std::current_exception(); }

  std::uint32_t depth() const noexcept { return depth_; }

  void rethrow_if_error() const {
    if (error_) std::rethrow_exception(error_);
  }

  bool has_error() const noexcept { return static_cast<bool>(error_); }

 protected:
  template <typename>
  friend class corodb::coro::task;
  friend void resume_chain(promise_base& p);

  std::coroutine_handle<> continuation_;
  promise_base* root_ = this;
  std::coroutine_handle<> leaf_;
  std::coroutine_handle<> relay_child_;
  promise_base* relay_promise_ = nullptr;
  std::exception_ptr error_;
  std::uint32_t depth_ = 1;
};

// Resume the suspended frame of the chain rooted at `p`.
inline void resume_chain(promise_base& p) {
  if (p.relay_child_ && !p.relay_child_.done()) {
    resume_chain(*p.relay_promise_);
    if (!p.relay_child_.done()) {
      if (auto* c = current_context()) ++c->counters.hops;
      return;
    }
  }
  p.leaf_.resume();
}

template <typename T>
class value_promise : public promise_base {
 public:
  template <typename U>
  void return_value(U&& v) {
    value_.emplace(std::forward<U>(v));
  }

  T take() {
    rethrow_if_error();
    return std::move(*value_);
  }

 private:
  std::optional<T> value_;
};

class void_promise : public promise_base {
 public:
  void return_void() noexcept {}
  void take() const { rethrow_if_error(); }
};

}  // namespace detail

// Lazily started coroutine returning T. Awaitable from another task, or driven
// from outside with resume() until done().
template <typename T>
class task {
 public:
  struct promise_type
      : std::conditional_t<std::is_void_v<T>, detail::void_promise, detail::value_promise<T>> {
    task get_return_object() noexcept {
      auto h = std::coroutine_handle<promise_type>::from_promise(*this);
      this->leaf_ = h;
      return task(h);
    }
  };
  using handle_type = std::coroutine_handle<promise_type>;

  task() noexcept = default;
  task(task&& o) noexcept : h_(std::exchange(o.h_, {})) {}
  task& operator=(task&& o) noexcept {
    if (this != &o) {
      reset();
      h_ = std::exchange(o.h_, {});
    }
    return *this;
  }
  task(const task&) = delete;
  task& operator=(const task&) = delete;
  ~task() { reset(); }

  bool valid() const noexcept { return static_cast<bool>(h_); }
  bool done() const noexcept { return h_.done(); }

  // Resume as a root: continue wherever the chain below this task is suspended.
  void resume() { detail::resume_chain(h_.promise()); }

  bool has_error() const noexcept { return h_.promise().has_error(); }

  // Result of a finished task; rethrows its exception if it failed.
  T result() { return h_.promise().take(); }

  void reset() noexcept {
    if (h_) {
      h_.destroy();
      h_ = {};
    }
  }

  class awaiter {
   public:
    explicit awaiter(handle_type child) noexcept : child_(child) {}

    bool await_ready() const noexcept { return false; }

    template <typename P>
    std::coroutine_handle<> await_suspend(std::coroutine_handle<P> parent) {
      detail::promise_base& pp = parent.promise();
      auto& cp = child_.promise();
      cp.depth_ = pp.depth_ + 1;
      auto* ctx = current_context();
      if (ctx != nullptr && ctx->mode == exec_mode::fully_nested) {
        parent_ = &pp;
        pp.relay_child_ = child_;
        pp.relay_promise_ = &cp;
        child_.resume();
        if (child_.done()) return parent;
        ++ctx->counters.hops;
        return std::noop_coroutine();
      }
      cp.continuation_ = parent;
      cp.root_ = pp.root_;
      pp.root_->leaf_ = child_;
      return child_;
    }

    T await_resume() {
      if (parent_ != nullptr) {
        parent_->relay_child_ = {};
        parent_->relay_promise_ = nullptr;
      }
      return child_.promise().take();
    }

   private:
    handle_type child_;
    detail::promise_base* parent_ = nullptr;
  };

  awaiter operator co_await() && noexcept { return awaiter{h_}; }

 private:
  explicit task(handle_type h) noexcept : h_(h) {}

  handle_type h_;
};

// Drive `t` to completion on the calling thread under `ctx`.
template <typename T>
T run_sync(task<T> t, exec_context& ctx) {
  context_scope scope(ctx);
  while (!t.done()) t.resume();
  return t.result();
}

// Drive `t` to completion under a throwaway sequential context.
template <typename T>
T run_sync(task<T> t) {
  exec_context ctx;
  return run_sync(std::move(t), ctx);
}

}  // namespace corodb::coro
