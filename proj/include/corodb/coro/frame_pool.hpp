#pragma once

#include <array>
#include <cstddef>
#include <new>

namespace corodb::coro::detail {

// Per-thread free lists of coroutine frames, bucketed by 64-byte size class.
// Frames freed on a thread go to that thread's lists; tasks are resumed and
// destroyed by their owning worker so this keeps frames hot across batches.
class frame_pool {
 public:
  static constexpr std::size_t granularity = 64;
  static constexpr std::size_t classes = 32;

  frame_pool() = default;
  frame_pool(const frame_pool&) = delete;
  frame_pool& operator=(const frame_pool&) = delete;

  ~frame_pool() {
    for (auto*& head : free_) {
      while (head != nullptr) {
        auto* next = head->next;
        ::operator delete(head);
        head = next;
      }
    }
  }

  void* allocate(std::size_t n) {
    std::size_t c = class_of(n);
    if (c >= classes) return ::operator new(n);
    if (auto* b = free_[c]) {
      free_[c] = b->next;
      return b;
    }
    return ::operator new((c + 1) * granularity);
  }

  void deallocate(void* p, std::size_t n) noexcept {
    std::size_t c = class_of(n);
    if (c >= classes) {
      ::operator delete(p);
      return;
    }
    auto* b = static_cast<block*>(p);
    b->next = free_[c];
    free_[c] = b;
  }

 private:
  struct block {
    block* next;
  };

  static constexpr std::size_t class_of(std::size_t n) noexcept {
    return n == 0 ? 0 : (n - 1) / granularity;
  }

  std::array<block*, classes> free_{};
};

inline frame_pool& local_frame_pool() {
  thread_local frame_pool pool;
  return pool;
}

}  // namespace corodb::coro::detail
