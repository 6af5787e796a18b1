#include <gtest/gtest.h>

#include <vector>

#include "corodb/coro/task.hpp"

namespace {

using corodb::coro::exec_context;
using corodb::coro::exec_mode;
using corodb::coro::suspend_point;
using corodb::coro::task;

int cell = 0;

exec_context context_for(exec_mode m) {
  exec_context ctx;
  ctx.mode = m;
  return ctx;
}

task<int> leaf(int v) {
  co_await suspend_point(&cell, sizeof(cell));
  co_return v + 1;
}

task<int> middle(int v) {
  int a = co_await leaf(v);
  co_return a * 2;
}

task<int> top(int v) {
  int a = co_await middle(v);
  co_return a + 100;
}

// Drives a root task step by step and records how many resumes it took.
template <typename T>
std::pair<T, int> drive(task<T> t, exec_context& ctx) {
  corodb::coro::context_scope scope(ctx);
  int resumes = 0;
  while (!t.done()) {
    t.resume();
    ++resumes;
  }
  return {t.result(), resumes};
}

TEST(Task, SequentialRunsToCompletionInOneResume) {
  auto ctx = context_for(exec_mode::sequential);
  auto [v, resumes] = drive(top(1), ctx);
  EXPECT_EQ(v, 104);
  EXPECT_EQ(resumes, 1);
  EXPECT_EQ(ctx.counters.suspensions, 0u);
}

TEST(Task, PrefetchModeDoesNotYield) {
  auto ctx = context_for(exec_mode::sequential_prefetch);
  auto [v, resumes] = drive(top(1), ctx);
  EXPECT_EQ(v, 104);
  EXPECT_EQ(resumes, 1);
}

TEST(Task, TwoLevelSuspensionIsOneHop) {
  auto ctx = context_for(exec_mode::two_level);
  auto [v, resumes] = drive(top(1), ctx);
  EXPECT_EQ(v, 104);
  EXPECT_EQ(resumes, 2);
  EXPECT_EQ(ctx.counters.suspensions, 1u);
  EXPECT_EQ(ctx.counters.hops, 1u);
  EXPECT_EQ(ctx.counters.max_depth, 3u);
}

TEST(Task, FullyNestedUnwindsLevelByLevel) {
  auto ctx = context_for(exec_mode::fully_nested);
  auto [v, resumes] = drive(top(1), ctx);
  EXPECT_EQ(v, 104);
  EXPECT_EQ(resumes, 2);
  EXPECT_EQ(ctx.counters.suspensions, 1u);
  // leaf, middle and top each hand control upward once.
  EXPECT_EQ(ctx.counters.hops, 3u);
}

task<int> multi_suspend(int n) {
  int total = 0;
  for (int i = 0; i < n; ++i) {
    co_await suspend_point(&cell, sizeof(cell));
    total += i;
  }
  co_return total;
}

task<int> nest_loop() {
  int a = co_await multi_suspend(3);
  int b = co_await multi_suspend(2);
  co_return a + b;
}

TEST(Task, FullyNestedRepeatedSuspensionsKeepUnwinding) {
  auto ctx = context_for(exec_mode::fully_nested);
  auto [v, resumes] = drive(nest_loop(), ctx);
  EXPECT_EQ(v, 3 + 1);
  EXPECT_EQ(resumes, 6);
  EXPECT_EQ(ctx.counters.suspensions, 5u);
  EXPECT_EQ(ctx.counters.hops, 10u);
}

TEST(Task, TwoLevelRepeatedSuspensions) {
  auto ctx = context_for(exec_mode::two_level);
  auto [v, resumes] = drive(nest_loop(), ctx);
  EXPECT_EQ(v, 4);
  EXPECT_EQ(resumes, 6);
  EXPECT_EQ(ctx.counters.hops, 5u);
}

task<int> thrower() {
  co_await suspend_point(&cell, sizeof(cell));
  throw std::runtime_error("boom");
  co_return 0;
}

task<int> catcher() {
  try {
    co_return co_await thrower();
  } catch (const std::runtime_error&) {
    co_return -1;
  }
}

TEST(Task, ExceptionsPropagateThroughAwait) {
  for (auto m : {exec_mode::sequential, exec_mode::two_level, exec_mode::fully_nested}) {
    auto ctx = context_for(m);
    EXPECT_EQ(drive(catcher(), ctx).first, -1);
  }
}

TEST(Task, SuspensionOutsideTaskIsUsageError) {
  auto t = leaf(0);
  t.resume();
  ASSERT_TRUE(t.done());
  EXPECT_THROW(t.result(), corodb::usage_error);
}

TEST(Task, RunSyncDrivesToCompletion) {
  auto ctx = context_for(exec_mode::fully_nested);
  EXPECT_EQ(corodb::coro::run_sync(top(5), ctx), 112);
  EXPECT_EQ(corodb::coro::run_sync(top(5)), 112);
}

}  // namespace
