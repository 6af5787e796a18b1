#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace corodb {

// Caller broke an API precondition (wrong slot, double enter, bad argument).
class usage_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Configured capacity or memory exhausted.
class resource_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An internal invariant check failed. Only raised when CORODB_CHECKED is set.
class invariant_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

using timestamp = std::uint64_t;

// Logical record ID. Dense per table, never reused.
struct rid {
  std::uint64_t value = 0;

  friend constexpr auto operator<=>(rid, rid) = default;
};

namespace detail {
[[noreturn]] inline void invariant_failed(const char* expr, const char* file, int line) {
  throw invariant_error(std::string("invariant violated: ") + expr + " at " + file + ":" +
                        std::to_string(line));
}
}  // namespace detail

}  // namespace corodb

template <>
struct std::hash<corodb::rid> {
  std::size_t operator()(corodb::rid r) const noexcept { return std::hash<std::uint64_t>{}(r.value); }
};

#ifdef CORODB_CHECKED
#define CORODB_CHECK(expr) \
  ((expr) ? (void)0 : ::corodb::detail::invariant_failed(#expr, __FILE__, __LINE__))
#else
#define CORODB_CHECK(expr) ((void)0)
#endif

#define CORODB_LIKELY(x) __builtin_expect(!!(x), 1)
#define CORODB_UNLIKELY(x) __builtin_expect(!!(x), 0)
