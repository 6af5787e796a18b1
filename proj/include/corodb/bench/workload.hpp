#pragma once

#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <pthread.h>
#include <unistd.h>

#include "corodb/bench/report.hpp"
#include "corodb/bench/zipf.hpp"
#include "corodb/index/key.hpp"
#include "corodb/sched/scheduler.hpp"

namespace corodb::bench {

enum class op_kind : std::uint8_t { read, update, rmw, scan, insert };

inline constexpr std::array<std::string_view, 5> op_names = {"read", "update", "rmw", "scan", "insert"};

struct op_mix {
  std::array<double, 5> weight{1, 0, 0, 0, 0};

  double operator[](op_kind k) const noexcept { return weight[static_cast<std::size_t>(k)]; }
  bool read_only() const noexcept { return weight[0] == 1.0; }
};

// "read=0.8,rmw=0.2". Unnamed kinds get zero; the total must be 1.
inline op_mix parse_mix(std::string_view s) {
  op_mix m;
  m.weight.fill(0);
  std::array<bool, 5> seen{};
  while (!s.empty()) {
    auto comma = s.find(',');
    auto item = s.substr(0, comma);
    s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    auto eq = item.find('=');
    if (eq == std::string_view::npos) throw usage_error("mix entry '" + std::string(item) + "' needs name=fraction");
    auto name = item.substr(0, eq);
    std::size_t k = 0;
    while (k < op_names.size() && op_names[k] != name) ++k;
    if (k == op_names.size()) throw usage_error("unknown operation '" + std::string(name) + "' in mix");
    if (seen[k]) throw usage_error("operation '" + std::string(name) + "' listed twice in mix");
    seen[k] = true;
    std::string num(item.substr(eq + 1));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != num.size() || num.empty() || !(v >= 0 && v <= 1)) {
      throw usage_error("bad fraction '" + num + "' in mix");
    }
    m.weight[k] = v;
  }
  double sum = 0;
  for (double w : m.weight) sum += w;
  if (std::abs(sum - 1.0) > 1e-9) throw usage_error("mix fractions must sum to 1");
  return m;
}

inline std::string to_string(const op_mix& m) {
  std::string out;
  for (std::size_t k = 0; k < op_names.size(); ++k) {
    if (m.weight[k] == 0) continue;
    if (!out.empty()) out += ',';
    std::ostringstream o;
    o << op_names[k] << '=' << m.weight[k];
    out += o.str();
  }
  return out;
}

// Operations of each kind in one transaction, by largest remainder, ties to
// the earlier kind.
inline std::array<unsigned, 5> apportion(const op_mix& m, unsigned ops) {
  std::array<unsigned, 5> n{};
  std::array<double, 5> rem{};
  unsigned given = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    double exact = m.weight[k] * ops;
    n[k] = static_cast<unsigned>(std::floor(exact + 1e-9));
    rem[k] = exact - n[k];
    given += n[k];
  }
  while (given < ops) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 5; ++k) {
      if (rem[k] > rem[best] + 1e-12) best = k;
    }
    ++n[best];
    rem[best] = -1;
    ++given;
  }
  return n;
}

enum class access_api : std::uint8_t { single, multi_get };

inline std::string_view to_string(access_api a) noexcept { return a == access_api::single ? "single" : "multi-get"; }

inline access_api parse_api(std::string_view s) {
  if (s == "single") return access_api::single;
  if (s == "multi-get") return access_api::multi_get;
  throw usage_error("unknown api '" + std::string(s) + "'");
}

struct workload_spec {
  std::uint64_t records = 10'000'000;
  unsigned key_len = 8;
  unsigned val_len = 8;
  unsigned ops_per_txn = 10;
  op_mix mix;
  unsigned scan_len = 10;
  double theta = 0;
  access_api api = access_api::single;
  double duration = 10;
  // Fixed transaction count per worker; replaces the duration when set.
  std::optional<std::uint64_t> txns;
  unsigned workers = 1;
  coro::exec_mode mode = coro::exec_mode::two_level;
  unsigned batch_size = 8;
  std::uint64_t seed = 1;
  bool verify = false;
  unsigned max_retries = 0;
  bool pin_workers = false;
  std::optional<std::filesystem::path> log_dir;

  void validate() const {
    if (records == 0) throw usage_error("records must be positive");
    if (key_len < 8) throw usage_error("key length must be at least 8 bytes");
    if (ops_per_txn == 0) throw usage_error("ops per transaction must be positive");
    if (mix[op_kind::scan] > 0 && scan_len == 0) throw usage_error("scan length must be positive");
    if (!(theta >= 0 && theta < 1)) throw usage_error("theta must be in [0, 1)");
    if (workers == 0) throw usage_error("workers must be positive");
    if (batch_size == 0 || batch_size > engine::max_batch_size) throw usage_error("batch size out of range");
    if (!txns && !(duration > 0)) throw usage_error("duration must be positive");
    if (txns && *txns == 0) throw usage_error("txns must be positive");
  }
};

struct txn_op {
  op_kind kind;
  std::uint64_t key;
};

// Pre-generated transactions for one worker, ops_per_txn per transaction.
struct plan_set {
  unsigned ops_per_txn = 0;
  std::vector<txn_op> ops;

  std::uint64_t size() const noexcept { return ops_per_txn == 0 ? 0 : ops.size() / ops_per_txn; }
  const txn_op* txn(std::uint64_t i) const noexcept { return ops.data() + i * ops_per_txn; }
};

inline constexpr std::uint64_t plan_ring = 1 << 14;

inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline plan_set make_plans(const workload_spec& spec, const zipfian& z, unsigned worker, std::uint64_t count) {
  plan_set p;
  p.ops_per_txn = spec.ops_per_txn;
  p.ops.reserve(count * spec.ops_per_txn);
  std::mt19937_64 rng(mix64(spec.seed) ^ mix64(worker + 1));
  auto counts = apportion(spec.mix, spec.ops_per_txn);
  std::vector<op_kind> kinds;
  for (std::size_t k = 0; k < 5; ++k) kinds.insert(kinds.end(), counts[k], static_cast<op_kind>(k));
  for (std::uint64_t t = 0; t < count; ++t) {
    std::shuffle(kinds.begin(), kinds.end(), rng);
    for (auto k : kinds) p.ops.push_back({k, k == op_kind::insert ? 0 : z(rng)});
  }
  return p;
}

inline std::string make_key(std::uint64_t i, unsigned len) { return encode_u64_key(i, len); }

inline void fill_value(std::string& out, std::uint64_t seed, unsigned len) {
  out.resize(len);
  std::uint64_t x = seed;
  for (unsigned i = 0; i < len; i += 8) {
    x = mix64(x + 0x9e3779b97f4a7c15ULL);
    for (unsigned j = 0; j < 8 && i + j < len; ++j) out[i + j] = static_cast<char>(x >> (8 * j));
  }
}

struct database {
  std::unique_ptr<engine> eng;
  table* tbl = nullptr;
};

// Rough resident bytes per loaded record: version with payload, slot, and a
// leaf entry at typical fill.
inline std::uint64_t estimate_bytes(const workload_spec& spec) {
  std::uint64_t per = 48 + spec.val_len + 8 + 48 + (spec.key_len > 8 ? spec.key_len : 0);
  return spec.records * per;
}

inline std::uint64_t available_memory() {
  long pages = sysconf(_SC_AVPHYS_PAGES);
  long size = sysconf(_SC_PAGESIZE);
  if (pages <= 0 || size <= 0) return ~std::uint64_t{0};
  return static_cast<std::uint64_t>(pages) * static_cast<std::uint64_t>(size);
}

inline database load_database(const workload_spec& spec) {
  spec.validate();
  std::uint64_t need = estimate_bytes(spec);
  std::uint64_t have = available_memory();
  if (need > have / 10 * 9) {
    throw resource_error("loading " + std::to_string(spec.records) + " records needs about " +
                         std::to_string(need >> 20) + " MB but only " + std::to_string(have >> 20) +
                         " MB is available; lower --records or --val-len");
  }
  engine_config cfg;
  cfg.workers = spec.workers;
  cfg.batch_size = spec.batch_size;
  cfg.log_mode = spec.log_dir ? log_sink::mode::retain : log_sink::mode::count;
  cfg.log_dir = spec.log_dir;
  database db;
  db.eng = std::make_unique<engine>(cfg);
  db.tbl = &db.eng->create_table("usertable");
  coro::exec_context ctx;
  std::string value;
  constexpr std::uint64_t per_txn = 1024;
  for (std::uint64_t base = 0; base < spec.records; base += per_txn) {
    auto& tx = db.eng->begin(0, 0);
    std::uint64_t end = std::min(spec.records, base + per_txn);
    for (std::uint64_t i = base; i < end; ++i) {
      fill_value(value, mix64(spec.seed) ^ i, spec.val_len);
      rc r = coro::run_sync(db.eng->insert(tx, *db.tbl, make_key(i, spec.key_len), value), ctx);
      if (r != rc::ok) throw invariant_error("load insert failed: " + std::string(to_string(r)));
    }
    db.eng->commit(tx);
  }
  if (db.tbl->index().size() != spec.records) throw invariant_error("index size does not match loaded records");
  return db;
}

namespace detail {

inline void fnv(std::uint64_t& h, std::string_view s) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
}

inline void fnv_value(std::uint64_t& h, const std::optional<std::string_view>& v) noexcept {
  fnv(h, v ? std::string_view("+", 1) : std::string_view("-", 1));
  if (v) fnv(h, *v);
  std::uint64_t n = v ? v->size() : 0;
  fnv(h, std::string_view(reinterpret_cast<const char*>(&n), sizeof n));
}

class worker_driver {
 public:
  worker_driver(engine& eng, table& t, const workload_spec& spec, unsigned worker, plan_set plans,
                std::uint64_t limit)
      : eng_(eng), t_(t), spec_(spec), worker_(worker), plans_(std::move(plans)), limit_(limit) {
    if (spec.verify) digests_.reserve(limit == ~std::uint64_t{0} ? plan_ring : limit);
  }

  std::optional<txn_body> next(const std::atomic<bool>& stop) {
    if (next_ == limit_ || stop.load(std::memory_order_relaxed)) return std::nullopt;
    std::uint64_t n = next_++;
    if (spec_.verify && digests_.size() <= n) digests_.resize(n + 1);
    return txn_body([this, n](transaction& tx) { return execute(tx, n); });
  }

  std::uint64_t retries() const noexcept { return retries_; }
  const std::vector<std::uint64_t>& digests() const noexcept { return digests_; }

 private:
  coro::task<void> execute(transaction& tx, std::uint64_t n) {
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    for (unsigned attempt = 0;; ++attempt) {
      digest = 0xcbf29ce484222325ULL;
      bool ok = co_await attempt_once(tx, n, digest);
      if (ok || attempt >= spec_.max_retries) break;
      ++retries_;
      eng_.begin(worker_, tx.slot());
    }
    if (spec_.verify) digests_[n] = digest;
  }

  // False when a write failed and the transaction was rolled back.
  coro::task<bool> attempt_once(transaction& tx, std::uint64_t n, std::uint64_t& digest) {
    const txn_op* ops = plans_.txn(n % plans_.size());
    unsigned count = plans_.ops_per_txn;
    std::string value;
    for (unsigned i = 0; i < count; ++i) {
      const txn_op& op = ops[i];
      switch (op.kind) {
        case op_kind::read: {
          if (spec_.api == access_api::multi_get) {
            std::vector<std::string> keys;
            while (i < count && ops[i].kind == op_kind::read) keys.push_back(make_key(ops[i++].key, spec_.key_len));
            --i;
            auto vals = co_await eng_.multi_get(tx, t_, keys);
            if (spec_.verify) {
              for (auto& v : vals) fnv_value(digest, v);
            }
          } else {
            auto v = co_await eng_.read(tx, t_, make_key(op.key, spec_.key_len));
            if (spec_.verify) fnv_value(digest, v);
          }
          break;
        }
        case op_kind::update: {
          fill_value(value, mix64(n) ^ (std::uint64_t{worker_} << 48) ^ i, spec_.val_len);
          if (co_await eng_.update(tx, t_, make_key(op.key, spec_.key_len), value) != rc::ok) co_return false;
          break;
        }
        case op_kind::rmw: {
          std::string key = make_key(op.key, spec_.key_len);
          auto cur = co_await eng_.read(tx, t_, key);
          if (spec_.verify) fnv_value(digest, cur);
          value.assign(cur ? *cur : std::string_view{});
          if (value.empty()) value.assign(spec_.val_len, '\0');
          value[0] = static_cast<char>(value[0] + 1);
          if (co_await eng_.update(tx, t_, key, value) != rc::ok) co_return false;
          break;
        }
        case op_kind::scan: {
          auto rows = co_await eng_.scan(tx, t_, make_key(op.key, spec_.key_len), spec_.scan_len);
          for (auto& r : rows) {
            if (!spec_.verify) break;
            fnv(digest, r.key);
            fnv(digest, r.value);
          }
          break;
        }
        case op_kind::insert: {
          // above the loaded range, disjoint per worker
          std::uint64_t k = spec_.records + (std::uint64_t{worker_} << 40) + inserted_++;
          fill_value(value, k, spec_.val_len);
          if (co_await eng_.insert(tx, t_, make_key(k, spec_.key_len), value) != rc::ok) co_return false;
          break;
        }
      }
    }
    co_return true;
  }

  engine& eng_;
  table& t_;
  const workload_spec& spec_;
  unsigned worker_;
  plan_set plans_;
  std::uint64_t limit_;
  std::uint64_t next_ = 0;
  std::uint64_t inserted_ = 0;
  std::uint64_t retries_ = 0;
  std::vector<std::uint64_t> digests_;
};

inline void pin_to_cpu(unsigned worker) {
#ifdef __linux__
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) return;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(worker % n, &set);
  pthread_setaffinity_np(pthread_self(), sizeof set, &set);
#else
  (void)worker;
#endif
}

}  // namespace detail

inline run_report run_workload(database& db, const workload_spec& spec) {
  spec.validate();
  engine& eng = *db.eng;
  if (spec.workers > eng.config().workers || spec.batch_size > eng.config().batch_size) {
    throw usage_error("engine has fewer workers or batch slots than the workload asks for");
  }
  zipfian z(spec.records, spec.theta);
  std::uint64_t limit = spec.txns ? *spec.txns : ~std::uint64_t{0};
  std::uint64_t planned = spec.txns ? *spec.txns : plan_ring;

  std::vector<std::unique_ptr<detail::worker_driver>> drivers;
  for (unsigned w = 0; w < spec.workers; ++w) {
    drivers.push_back(
        std::make_unique<detail::worker_driver>(eng, *db.tbl, spec, w, make_plans(spec, z, w, planned), limit));
  }

  auto epoch_before = eng.epochs().stats();
  auto engine_before = eng.counters();
  std::uint64_t log_records_before = 0, log_bytes_before = 0;
  for (unsigned w = 0; w < eng.config().workers; ++w) {
    log_records_before += eng.sink(w).total_records();
    log_bytes_before += eng.sink(w).total_bytes();
  }

  std::atomic<bool> stop{false};
  std::vector<run_stats> stats(spec.workers);
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < spec.workers; ++w) {
    threads.emplace_back([&, w] {
      if (spec.pin_workers) detail::pin_to_cpu(w);
      scheduler_config sc;
      sc.batch_size = spec.batch_size;
      sc.mode = spec.mode;
      scheduler s(eng, w, sc);
      auto* d = drivers[w].get();
      stats[w] = s.run([&, d] { return d->next(stop); });
    });
  }
  if (!spec.txns) {
    std::this_thread::sleep_for(std::chrono::duration<double>(spec.duration));
    stop.store(true, std::memory_order_relaxed);
  }
  for (auto& t : threads) t.join();

  run_stats total;
  for (auto& s : stats) total.merge(s);
  std::uint64_t retries = 0;
  for (auto& d : drivers) retries += d->retries();

  run_report r;
  r.mode = std::string(coro::to_string(spec.mode));
  r.api = std::string(to_string(spec.api));
  r.mix = to_string(spec.mix);
  r.workers = spec.workers;
  r.batch_size = spec.batch_size;
  r.theta = spec.theta;
  r.records = spec.records;
  r.ops_per_txn = spec.ops_per_txn;
  r.committed = total.commits;
  r.aborted = total.aborts + retries;
  r.errors = total.errors;
  r.retries = retries;
  r.attempted = total.admitted + retries;
  r.seconds = total.wall_seconds;
  r.throughput_tps = r.seconds > 0 ? static_cast<double>(r.committed) / r.seconds : 0;
  r.mean_latency_us = total.latency_ns.mean() / 1000.0;
  r.p99_latency_us = static_cast<double>(total.latency_ns.percentile(0.99)) / 1000.0;
  r.abort_rate = r.attempted == 0 ? 0 : static_cast<double>(r.aborted) / static_cast<double>(r.attempted);
  r.batches = total.batches;
  r.resumes = total.resumes;
  r.suspensions = total.suspensions;
  r.hops = total.hops;
  auto ep = eng.epochs().stats();
  r.epoch_advances = ep.advances - epoch_before.advances;
  r.bytes_retired = ep.bytes_retired - epoch_before.bytes_retired;
  r.bytes_reclaimed = ep.bytes_reclaimed - epoch_before.bytes_reclaimed;
  r.max_residency_bytes = ep.max_residency_bytes;
  auto ec = eng.counters();
  r.engine_commits = ec.commits - engine_before.commits;
  r.engine_aborts = ec.aborts - engine_before.aborts;
  for (unsigned w = 0; w < eng.config().workers; ++w) {
    r.log_records += eng.sink(w).total_records();
    r.log_bytes += eng.sink(w).total_bytes();
  }
  r.log_records -= log_records_before;
  r.log_bytes -= log_bytes_before;
  if (spec.verify && !drivers.empty()) r.digests = drivers.front()->digests();
  return r;
}

}  // namespace corodb::bench
