#include <gtest/gtest.h>

#include <functional>
#include <map>
#include <random>
#include <thread>

#include "corodb/index/key.hpp"
#include "corodb/txn/engine.hpp"

namespace {

using corodb::encode_u64_key;
using corodb::engine;
using corodb::engine_config;
using corodb::rc;
using corodb::table;
using corodb::transaction;
using corodb::coro::exec_context;
using corodb::coro::exec_mode;
using corodb::coro::run_sync;
using corodb::coro::task;

exec_context context_for(exec_mode m) {
  exec_context ctx;
  ctx.mode = m;
  return ctx;
}

engine_config config(unsigned workers = 1, unsigned batch = 8) {
  engine_config c;
  c.workers = workers;
  c.batch_size = batch;
  c.log_mode = corodb::log_sink::mode::retain;
  return c;
}

std::string key(std::uint64_t i) { return encode_u64_key(i); }

// Committed single-record helpers, run synchronously on worker 0 slot 0.
struct fixture {
  engine eng;
  table& t;
  exec_context ctx;

  explicit fixture(exec_mode m = exec_mode::two_level, unsigned workers = 1, unsigned batch = 8)
      : eng(config(workers, batch)), t(eng.create_table("t", 1 << 20)), ctx(context_for(m)) {}

  template <typename T>
  T run(task<T> tk) {
    return run_sync(std::move(tk), ctx);
  }

  void load(std::uint64_t n, const std::string& prefix = "v") {
    auto& tx = eng.begin(0, 0);
    for (std::uint64_t i = 0; i < n; ++i) ASSERT_EQ(run(eng.insert(tx, t, key(i), prefix + std::to_string(i))), rc::ok);
    eng.commit(tx);
  }

  std::optional<std::string> get(std::uint64_t k, unsigned slot = 0) {
    auto& tx = eng.begin(0, slot);
    auto v = run(eng.read(tx, t, key(k)));
    std::optional<std::string> out;
    if (v) out = std::string(*v);
    eng.commit(tx);
    return out;
  }

  std::optional<corodb::timestamp> put(std::uint64_t k, const std::string& v) {
    auto& tx = eng.begin(0, 0);
    if (run(eng.update(tx, t, key(k), v)) != rc::ok) return std::nullopt;
    return eng.commit(tx);
  }
};

TEST(Txn, BeginStampsAndSlots) {
  fixture f;
  auto& a = f.eng.begin(0, 3);
  EXPECT_EQ(a.slot(), 3u);
  EXPECT_EQ(a.worker(), 0u);
  auto& b = f.eng.begin(0, 4);
  EXPECT_LE(a.begin_ts(), b.begin_ts());
  EXPECT_THROW(f.eng.begin(0, 3), corodb::usage_error);
  EXPECT_THROW(f.eng.begin(0, 8), corodb::usage_error);
  EXPECT_THROW(f.eng.begin(1, 0), corodb::usage_error);
  f.eng.commit(a);
  f.eng.abort(b);
  EXPECT_THROW(f.eng.commit(a), corodb::usage_error);
  EXPECT_THROW(f.run(f.eng.read(b, f.t, key(1))), corodb::usage_error);
}

TEST(Txn, SlotBuffersReusedAcrossTransactions) {
  fixture f;
  f.load(10);
  const void* id = nullptr;
  for (int i = 0; i < 100; ++i) {
    auto& tx = f.eng.begin(0, 2);
    if (id == nullptr) id = tx.scratch_id();
    ASSERT_EQ(tx.scratch_id(), id);
    ASSERT_TRUE(f.run(f.eng.read(tx, f.t, key(i % 10))).has_value());
    f.eng.commit(tx);
  }
}

TEST(Txn, SnapshotPicksNewestVersionOlderThanBegin) {
  fixture f;
  f.load(1, "c10-");
  auto& old_snap = f.eng.begin(0, 1);  // sees only the insert
  auto c20 = f.put(0, "c20");
  auto& mid_snap = f.eng.begin(0, 2);  // sees c20
  auto c30 = f.put(0, "c30");
  ASSERT_TRUE(c20 && c30);
  EXPECT_LT(*c20, *c30);
  EXPECT_LT(*c20, mid_snap.begin_ts());
  EXPECT_GT(*c30, mid_snap.begin_ts());
  EXPECT_EQ(*f.run(f.eng.read(mid_snap, f.t, key(0))), "c20");
  EXPECT_EQ(*f.run(f.eng.read(old_snap, f.t, key(0))), "c10-0");

  // A snapshot older than every version sees nothing.
  fixture g;
  auto& early = g.eng.begin(0, 1);
  g.load(1);
  EXPECT_FALSE(g.run(g.eng.read(early, g.t, key(0))).has_value());
}

TEST(Txn, ReadYourWritesAndDeletes) {
  fixture f;
  f.load(3);
  auto& tx = f.eng.begin(0, 0);
  EXPECT_EQ(f.run(f.eng.update(tx, f.t, key(1), "mine")), rc::ok);
  EXPECT_EQ(*f.run(f.eng.read(tx, f.t, key(1))), "mine");
  EXPECT_EQ(f.run(f.eng.insert(tx, f.t, key(100), "fresh")), rc::ok);
  EXPECT_EQ(*f.run(f.eng.read(tx, f.t, key(100))), "fresh");
  EXPECT_EQ(f.run(f.eng.remove(tx, f.t, key(2))), rc::ok);
  EXPECT_FALSE(f.run(f.eng.read(tx, f.t, key(2))).has_value());
  // Another snapshot sees none of it.
  auto& other = f.eng.begin(0, 1);
  EXPECT_EQ(*f.run(f.eng.read(other, f.t, key(1))), "v1");
  EXPECT_FALSE(f.run(f.eng.read(other, f.t, key(100))).has_value());
  EXPECT_EQ(*f.run(f.eng.read(other, f.t, key(2))), "v2");
  f.eng.commit(other);
  f.eng.commit(tx);
  EXPECT_EQ(*f.get(1), "mine");
  EXPECT_EQ(*f.get(100), "fresh");
  EXPECT_FALSE(f.get(2).has_value());
}

TEST(Txn, InsertThenAbortLeavesNothing) {
  fixture f;
  auto& tx = f.eng.begin(0, 0);
  EXPECT_EQ(f.run(f.eng.insert(tx, f.t, key(5), "x")), rc::ok);
  f.eng.abort(tx);
  EXPECT_FALSE(f.get(5).has_value());
  EXPECT_EQ(f.t.index().size(), 1u);
  // The key can be inserted again, reusing the empty RID.
  auto& again = f.eng.begin(0, 0);
  EXPECT_EQ(f.run(f.eng.insert(again, f.t, key(5), "y")), rc::ok);
  f.eng.commit(again);
  EXPECT_EQ(*f.get(5), "y");
  EXPECT_EQ(f.t.allocated(), 2u);
}

TEST(Txn, DuplicateInsertAborts) {
  fixture f;
  f.load(1);
  auto& tx = f.eng.begin(0, 0);
  EXPECT_EQ(f.run(f.eng.insert(tx, f.t, key(0), "dup")), rc::duplicate);
  EXPECT_EQ(tx.state(), corodb::txn_state::aborted);
  EXPECT_EQ(*f.get(0), "v0");
}

TEST(Txn, InsertAfterDeleteReusesRecord) {
  fixture f;
  f.load(1);
  auto& d = f.eng.begin(0, 0);
  ASSERT_EQ(f.run(f.eng.remove(d, f.t, key(0))), rc::ok);
  // Deleted and re-inserted within one transaction.
  ASSERT_EQ(f.run(f.eng.insert(d, f.t, key(0), "back")), rc::ok);
  EXPECT_EQ(*f.run(f.eng.read(d, f.t, key(0))), "back");
  f.eng.commit(d);
  EXPECT_EQ(*f.get(0), "back");
  ASSERT_TRUE(f.put(0, "x"));
  auto& d2 = f.eng.begin(0, 0);
  ASSERT_EQ(f.run(f.eng.remove(d2, f.t, key(0))), rc::ok);
  f.eng.commit(d2);
  auto& i2 = f.eng.begin(0, 0);
  ASSERT_EQ(f.run(f.eng.insert(i2, f.t, key(0), "again")), rc::ok);
  f.eng.commit(i2);
  EXPECT_EQ(*f.get(0), "again");
}

TEST(Txn, UpdateMissingOrDeletedIsNotFound) {
  fixture f;
  f.load(1);
  auto& a = f.eng.begin(0, 0);
  EXPECT_EQ(f.run(f.eng.update(a, f.t, key(9), "x")), rc::not_found);
  auto& d = f.eng.begin(0, 0);
  ASSERT_EQ(f.run(f.eng.remove(d, f.t, key(0))), rc::ok);
  f.eng.commit(d);
  auto& u = f.eng.begin(0, 0);
  EXPECT_EQ(f.run(f.eng.update(u, f.t, key(0), "x")), rc::not_found);
}

TEST(Txn, SameBatchWritersConflictInEitherOrder) {
  for (bool remove : {false, true}) {
    for (int first : {0, 1}) {
      fixture f;
      f.load(1);
      transaction* tx[2] = {&f.eng.begin(0, 0), &f.eng.begin(0, 1)};
      auto op = [&](transaction& t) {
        return f.run(remove ? f.eng.remove(t, f.t, key(0)) : f.eng.update(t, f.t, key(0), "w"));
      };
      EXPECT_EQ(op(*tx[first]), rc::ok);
      EXPECT_EQ(op(*tx[1 - first]), rc::conflict);
      EXPECT_TRUE(f.eng.commit(*tx[first]).has_value());
      // Head is still owned by the winner until commit, then committed.
      EXPECT_FALSE(f.t.head(corodb::rid{0})->stamp().is_owner());
    }
  }
}

TEST(Txn, CommitStampsAllWritesIdentically) {
  fixture f;
  f.load(3);
  auto& tx = f.eng.begin(0, 0);
  for (std::uint64_t k = 0; k < 3; ++k) ASSERT_EQ(f.run(f.eng.update(tx, f.t, key(k), "u")), rc::ok);
  auto c = f.eng.commit(tx);
  ASSERT_TRUE(c);
  EXPECT_GT(*c, tx.begin_ts());
  for (std::uint64_t k = 0; k < 3; ++k) {
    auto s = f.t.head(corodb::rid{k})->stamp();
    EXPECT_FALSE(s.is_owner());
    EXPECT_EQ(s.commit_ts(), *c);
  }
  auto before = f.eng.clock();
  auto& ro = f.eng.begin(0, 0);
  f.run(f.eng.read(ro, f.t, key(1)));
  EXPECT_FALSE(f.eng.commit(ro).has_value());
  EXPECT_EQ(f.eng.clock(), before);
  auto c2 = f.put(1, "z");
  EXPECT_GT(*c2, *c);
}

TEST(Txn, AbortRestoresOriginalHead) {
  fixture f;
  f.load(1);
  ASSERT_TRUE(f.put(0, "second"));
  auto* head = f.t.head(corodb::rid{0});
  auto* older = head->next();
  auto& tx = f.eng.begin(0, 0);
  ASSERT_EQ(f.run(f.eng.update(tx, f.t, key(0), "a")), rc::ok);
  ASSERT_EQ(f.run(f.eng.update(tx, f.t, key(0), "b")), rc::ok);
  EXPECT_EQ(tx.write_set().size(), 1u);
  EXPECT_EQ(tx.log().size(), 1u);
  f.eng.abort(tx);
  EXPECT_EQ(f.t.head(corodb::rid{0}), head);
  EXPECT_EQ(head->next(), older);
  EXPECT_EQ(older->next(), nullptr);
  EXPECT_EQ(*f.get(0), "second");
  auto& empty = f.eng.begin(0, 0);
  f.eng.abort(empty);
  EXPECT_EQ(empty.state(), corodb::txn_state::aborted);
}

TEST(Txn, ScanMatchesOracleWithDeletes) {
  for (exec_mode m : {exec_mode::sequential, exec_mode::two_level, exec_mode::fully_nested}) {
    fixture f(m);
    f.load(300);
    std::map<std::string, std::string> model;
    for (std::uint64_t i = 0; i < 300; ++i) model[key(i)] = "v" + std::to_string(i);
    auto& d = f.eng.begin(0, 0);
    for (std::uint64_t i = 0; i < 300; i += 7) {
      ASSERT_EQ(f.run(f.eng.remove(d, f.t, key(i))), rc::ok);
      model.erase(key(i));
    }
    f.eng.commit(d);
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      std::uint64_t start = rng() % 320;
      std::size_t count = 1 + rng() % 40;
      auto& tx = f.eng.begin(0, 1);
      auto rows = f.run(f.eng.scan(tx, f.t, key(start), count));
      auto it = model.lower_bound(key(start));
      std::size_t i = 0;
      for (; i < count && it != model.end(); ++i, ++it) {
        ASSERT_LT(i, rows.size());
        EXPECT_EQ(rows[i].key, it->first);
        EXPECT_EQ(rows[i].value, it->second);
      }
      EXPECT_EQ(rows.size(), i);
      f.eng.commit(tx);
    }
    auto& tx = f.eng.begin(0, 1);
    EXPECT_TRUE(f.run(f.eng.scan(tx, f.t, key(1000), 10)).empty());
    EXPECT_THROW(f.run(f.eng.scan(tx, f.t, key(0), 0)), corodb::usage_error);
  }
}

TEST(Txn, MultiGetMatchesReadsWithoutYielding) {
  for (exec_mode m : {exec_mode::two_level, exec_mode::fully_nested}) {
    fixture f(m);
    f.load(50);
    std::vector<std::string> keys;
    for (std::uint64_t i = 0; i < 10; ++i) keys.push_back(key(i * 3));
    keys.push_back(key(999));
    auto& tx = f.eng.begin(0, 0);
    auto mg = f.eng.multi_get(tx, f.t, keys);
    int resumes = 0;
    {
      corodb::coro::context_scope scope(f.ctx);
      while (!mg.done()) {
        mg.resume();
        ++resumes;
      }
    }
    EXPECT_EQ(resumes, 1);
    auto got = mg.result();
    ASSERT_EQ(got.size(), keys.size());
    for (std::size_t i = 0; i < 10; ++i) {
      auto single = f.run(f.eng.read(tx, f.t, keys[i]));
      ASSERT_TRUE(got[i] && single);
      EXPECT_EQ(*got[i], *single);
    }
    EXPECT_FALSE(got.back().has_value());
    EXPECT_GT(f.ctx.counters.suspensions, 0u);
  }
}

// Runs two transaction bodies on one worker, resuming them in the order given by
// `schedule` (0 or 1 per step; a finished task's turn is skipped).
struct duel {
  fixture f;
  std::vector<task<void>> tasks;
  explicit duel(exec_mode m) : f(m) {}

  // Drives all tasks following `prefix`, then returns which tasks are still
  // runnable.
  std::vector<int> follow(const std::vector<int>& prefix) {
    corodb::coro::context_scope scope(f.ctx);
    for (int who : prefix) {
      if (tasks[who].done()) throw std::logic_error("schedule resumes a finished task");
      tasks[who].resume();
    }
    std::vector<int> live;
    for (int i = 0; i < static_cast<int>(tasks.size()); ++i) {
      if (!tasks[i].done()) live.push_back(i);
    }
    return live;
  }
};

// Enumerates every interleaving of the two bodies over their suspension points.
template <typename Setup, typename Check>
std::uint64_t enumerate(exec_mode m, Setup setup, Check check) {
  std::uint64_t schedules = 0;
  std::vector<std::vector<int>> stack{{}};
  while (!stack.empty()) {
    auto prefix = std::move(stack.back());
    stack.pop_back();
    duel d(m);
    setup(d);
    auto live = d.follow(prefix);
    if (live.empty()) {
      check(d);
      ++schedules;
      continue;
    }
    for (int who : live) {
      auto next = prefix;
      next.push_back(who);
      stack.push_back(std::move(next));
    }
  }
  return schedules;
}

task<void> rmw_body(engine& eng, table& t, unsigned slot, int& outcome) {
  auto& tx = eng.begin(0, slot);
  auto v = co_await eng.read(tx, t, key(0));
  int n = std::stoi(std::string(*v));
  rc r = co_await eng.update(tx, t, key(0), std::to_string(n + 1));
  if (r == rc::ok) {
    eng.commit(tx);
    outcome = 1;
  } else {
    outcome = 0;
  }
}

TEST(Txn, LostUpdateImpossibleUnderEverySchedule) {
  for (exec_mode m : {exec_mode::two_level, exec_mode::fully_nested}) {
    int outcomes[2];
    std::uint64_t serial_like = 0;
    auto n = enumerate(
        m,
        [&](duel& d) {
          auto& tx = d.f.eng.begin(0, 0);
          ASSERT_EQ(run_sync(d.f.eng.insert(tx, d.f.t, key(0), "0"), d.f.ctx), rc::ok);
          d.f.eng.commit(tx);
          d.tasks.push_back(rmw_body(d.f.eng, d.f.t, 0, outcomes[0]));
          d.tasks.push_back(rmw_body(d.f.eng, d.f.t, 1, outcomes[1]));
        },
        [&](duel& d) {
          for (auto& t : d.tasks) t.result();
          // Every commit must be reflected in the counter.
          int committed = outcomes[0] + outcomes[1];
          EXPECT_EQ(*d.f.get(0, 2), std::to_string(committed));
          serial_like += committed == 2;
        });
    EXPECT_GT(n, 100u);
    // Only the two fully serial orders let both commit.
    EXPECT_EQ(serial_like, 2u);
  }
}

task<void> skew_body(engine& eng, table& t, unsigned slot, std::uint64_t write_key, bool& committed) {
  auto& tx = eng.begin(0, slot);
  auto x = co_await eng.read(tx, t, key(0));
  auto y = co_await eng.read(tx, t, key(1));
  if (std::stoi(std::string(*x)) + std::stoi(std::string(*y)) >= 2) {
    if (co_await eng.update(tx, t, key(write_key), "0") == rc::ok) committed = eng.commit(tx).has_value();
  }
}

TEST(Txn, WriteSkewIsAllowed) {
  fixture f;
  auto& init = f.eng.begin(0, 0);
  f.run(f.eng.insert(init, f.t, key(0), "1"));
  f.run(f.eng.insert(init, f.t, key(1), "1"));
  f.eng.commit(init);
  bool c1 = false, c2 = false;
  std::vector<task<void>> tasks;
  tasks.push_back(skew_body(f.eng, f.t, 0, 0, c1));
  tasks.push_back(skew_body(f.eng, f.t, 1, 1, c2));
  {
    corodb::coro::context_scope scope(f.ctx);
    while (!tasks[0].done() || !tasks[1].done()) {
      for (auto& t : tasks) {
        if (!t.done()) t.resume();
      }
    }
  }
  EXPECT_TRUE(c1);
  EXPECT_TRUE(c2);
  EXPECT_EQ(*f.get(0), "0");
  EXPECT_EQ(*f.get(1), "0");
}

task<void> double_read(engine& eng, table& t, std::string& first, std::string& second) {
  auto& tx = eng.begin(0, 0);
  first = std::string(*co_await eng.read(tx, t, key(0)));
  second = std::string(*co_await eng.read(tx, t, key(0)));
  eng.commit(tx);
}

task<void> writer_body(engine& eng, table& t) {
  auto& tx = eng.begin(0, 1);
  if (co_await eng.update(tx, t, key(0), "new") == rc::ok) eng.commit(tx);
}

TEST(Txn, SnapshotStableUnderEverySchedule) {
  std::string first, second;
  auto n = enumerate(
      exec_mode::two_level,
      [&](duel& d) {
        d.f.load(1);
        d.tasks.push_back(double_read(d.f.eng, d.f.t, first, second));
        d.tasks.push_back(writer_body(d.f.eng, d.f.t));
      },
      [&](duel& d) {
        for (auto& t : d.tasks) t.result();
        EXPECT_EQ(first, second);
        EXPECT_EQ(*d.f.get(0, 2), "new");
      });
  EXPECT_GT(n, 10u);
}

TEST(Txn, ChainsStayMonotonicAfterRandomWorkload) {
  fixture f(exec_mode::sequential);
  constexpr std::uint64_t keys = 200;
  f.load(keys);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 3000; ++i) {
    auto& tx = f.eng.begin(0, static_cast<unsigned>(rng() % 8));
    bool ok = true;
    for (int op = 0; op < 4 && ok; ++op) {
      std::uint64_t k = rng() % (keys + 20);
      rc r;
      switch (rng() % 4) {
        case 0: r = f.run(f.eng.remove(tx, f.t, key(k))); break;
        case 1: r = f.run(f.eng.insert(tx, f.t, key(k), "i")); break;
        default: r = f.run(f.eng.update(tx, f.t, key(k), "u" + std::to_string(i))); break;
      }
      ok = r == rc::ok;
    }
    if (ok) {
      if (rng() % 5 == 0) {
        f.eng.abort(tx);
      } else {
        f.eng.commit(tx);
      }
    }
  }
  for (std::uint64_t r = 0; r < f.t.allocated(); ++r) {
    corodb::timestamp prev = ~corodb::timestamp{0};
    for (auto* v = f.t.head(corodb::rid{r}); v != nullptr; v = v->next()) {
      auto s = v->stamp();
      ASSERT_FALSE(s.is_owner());
      ASSERT_LT(s.commit_ts(), prev);
      prev = s.commit_ts();
    }
  }
}

TEST(Txn, LogHoldsExactlyCommittedWrites) {
  fixture f;
  f.load(10);
  std::size_t expected = 10;
  for (int i = 0; i < 50; ++i) {
    auto& tx = f.eng.begin(0, 0);
    std::size_t n = 1 + i % 3;
    for (std::size_t k = 0; k < n; ++k) ASSERT_EQ(f.run(f.eng.update(tx, f.t, key((i + k) % 10), "x")), rc::ok);
    // A second write to the same record does not add a record.
    ASSERT_EQ(f.run(f.eng.update(tx, f.t, key(i % 10), "y")), rc::ok);
    if (i % 4 == 0) {
      f.eng.abort(tx);
    } else {
      expected += tx.write_set().size();
      f.eng.commit(tx);
    }
  }
  auto recs = corodb::decode_records(f.eng.sink(0).bytes());
  EXPECT_EQ(recs.size(), expected);
  auto& ext = f.eng.sink(0).extents();
  for (std::size_t i = 1; i < ext.size(); ++i) EXPECT_LT(ext[i - 1].commit_ts, ext[i].commit_ts);
}

task<void> transfer_loop(engine& eng, table& t, unsigned worker, std::uint64_t accounts, int rounds,
                         std::atomic<int>& bad_snapshots) {
  std::mt19937_64 rng(worker);
  for (int i = 0; i < rounds; ++i) {
    auto& tx = eng.begin(worker, 0);
    if (rng() % 4 == 0) {
      auto rows = co_await eng.scan(tx, t, key(0), accounts);
      long sum = 0;
      for (auto& r : rows) sum += std::stol(std::string(r.value));
      if (rows.size() != accounts || sum != static_cast<long>(accounts) * 100) bad_snapshots.fetch_add(1);
      eng.commit(tx);
      continue;
    }
    std::uint64_t a = rng() % accounts, b = (a + 1 + rng() % (accounts - 1)) % accounts;
    auto va = co_await eng.read(tx, t, key(a));
    auto vb = co_await eng.read(tx, t, key(b));
    long na = std::stol(std::string(*va)), nb = std::stol(std::string(*vb));
    if (co_await eng.update(tx, t, key(a), std::to_string(na - 1)) != rc::ok) continue;
    if (co_await eng.update(tx, t, key(b), std::to_string(nb + 1)) != rc::ok) continue;
    eng.commit(tx);
  }
}

TEST(Txn, ConcurrentTransfersPreserveTotal) {
  constexpr unsigned workers = 4;
  constexpr std::uint64_t accounts = 16;
  engine eng(config(workers, 1));
  table& t = eng.create_table("acct");
  {
    exec_context ctx;
    auto& tx = eng.begin(0, 0);
    for (std::uint64_t i = 0; i < accounts; ++i) run_sync(eng.insert(tx, t, key(i), "100"), ctx);
    eng.commit(tx);
  }
  std::atomic<int> bad{0};
  std::vector<std::thread> ts;
  for (unsigned w = 0; w < workers; ++w) {
    ts.emplace_back([&, w] {
      exec_context ctx;
      ctx.mode = exec_mode::two_level;
      ctx.worker_id = w;
      run_sync(transfer_loop(eng, t, w, accounts, 3000, bad), ctx);
    });
  }
  for (auto& th : ts) th.join();
  EXPECT_EQ(bad.load(), 0);
  exec_context ctx;
  auto& tx = eng.begin(0, 0);
  long sum = 0;
  for (auto& r : run_sync(eng.scan(tx, t, key(0), accounts), ctx)) sum += std::stol(std::string(r.value));
  EXPECT_EQ(sum, static_cast<long>(accounts) * 100);
}

TEST(Txn, ConcurrentInsertsOfSameKeyHaveOneWinner) {
  engine eng(config(2, 1));
  table& t = eng.create_table("t");
  constexpr std::uint64_t keys = 2000;
  std::vector<int> wins(keys * 2);
  std::vector<std::thread> ts;
  for (unsigned w = 0; w < 2; ++w) {
    ts.emplace_back([&, w] {
      exec_context ctx;
      ctx.mode = w == 0 ? exec_mode::two_level : exec_mode::fully_nested;
      for (std::uint64_t k = 0; k < keys; ++k) {
        auto& tx = eng.begin(w, 0);
        if (run_sync(eng.insert(tx, t, key(k), std::to_string(w)), ctx) == rc::ok) {
          eng.commit(tx);
          wins[k * 2 + w] = 1;
        }
      }
    });
  }
  for (auto& th : ts) th.join();
  exec_context ctx;
  for (std::uint64_t k = 0; k < keys; ++k) {
    ASSERT_EQ(wins[k * 2] + wins[k * 2 + 1], 1) << k;
    auto& tx = eng.begin(0, 0);
    auto v = run_sync(eng.read(tx, t, key(k)), ctx);
    ASSERT_TRUE(v);
    EXPECT_EQ(*v, std::to_string(wins[k * 2] ? 0 : 1));
    eng.commit(tx);
  }
}

}  // namespace
