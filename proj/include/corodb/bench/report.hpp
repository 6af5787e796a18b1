#pragma once

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "corodb/common.hpp"

namespace corodb::bench {

struct run_report {
  std::string mode;
  std::string api;
  std::string mix;
  unsigned workers = 0;
  unsigned batch_size = 0;
  double theta = 0;
  std::uint64_t records = 0;
  unsigned ops_per_txn = 0;

  std::uint64_t attempted = 0;
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;
  std::uint64_t errors = 0;
  std::uint64_t retries = 0;
  double seconds = 0;
  double throughput_tps = 0;
  double mean_latency_us = 0;
  double p99_latency_us = 0;
  double abort_rate = 0;

  std::uint64_t batches = 0;
  std::uint64_t resumes = 0;
  std::uint64_t suspensions = 0;
  std::uint64_t hops = 0;

  std::uint64_t epoch_advances = 0;
  std::uint64_t bytes_retired = 0;
  std::uint64_t bytes_reclaimed = 0;
  std::uint64_t max_residency_bytes = 0;

  // Commits and aborts as counted by the engine itself.
  std::uint64_t engine_commits = 0;
  std::uint64_t engine_aborts = 0;

  std::uint64_t log_records = 0;
  std::uint64_t log_bytes = 0;

  // Verify mode: one digest of the observed results per transaction, worker 0.
  std::vector<std::uint64_t> digests;

  bool operator==(const run_report&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(run_report, mode, api, mix, workers, batch_size, theta, records, ops_per_txn,
                                   attempted, committed, aborted, errors, retries, seconds, throughput_tps,
                                   mean_latency_us, p99_latency_us, abort_rate, batches, resumes, suspensions, hops,
                                   epoch_advances, bytes_retired, bytes_reclaimed, max_residency_bytes,
                                   engine_commits, engine_aborts, log_records, log_bytes, digests)

enum class report_format { text, csv, json };

inline report_format parse_format(std::string_view s) {
  if (s == "text") return report_format::text;
  if (s == "csv") return report_format::csv;
  if (s == "json") return report_format::json;
  throw usage_error("unknown report format '" + std::string(s) + "'");
}

inline constexpr std::string_view csv_header =
    "mode,workers,batch_size,theta,records,ops_per_txn,throughput_tps,mean_latency_us,p99_latency_us,abort_rate,"
    "resumes,suspensions";

inline std::string csv_row(const run_report& r) {
  std::ostringstream o;
  o << r.mode << ',' << r.workers << ',' << r.batch_size << ',' << r.theta << ',' << r.records << ','
    << r.ops_per_txn << ',' << std::fixed << std::setprecision(1) << r.throughput_tps << ','
    << std::setprecision(3) << r.mean_latency_us << ',' << r.p99_latency_us << ',' << std::setprecision(6)
    << r.abort_rate << ',' << r.resumes << ',' << r.suspensions;
  return o.str();
}

inline std::string emit_text(const run_report& r) {
  std::ostringstream o;
  o << "mode " << r.mode << "  batch " << r.batch_size << "  workers " << r.workers << "  api " << r.api << '\n';
  o << "records " << r.records << "  ops/txn " << r.ops_per_txn << "  theta " << r.theta << "  mix " << r.mix
    << '\n';
  o << std::fixed << std::setprecision(1);
  o << "throughput " << r.throughput_tps << " txn/s over " << std::setprecision(2) << r.seconds << " s\n";
  o << std::setprecision(3) << "latency mean " << r.mean_latency_us << " us  p99 " << r.p99_latency_us << " us\n";
  o << "committed " << r.committed << "  aborted " << r.aborted << "  errors " << r.errors << "  retries "
    << r.retries << "  abort rate " << std::setprecision(4) << r.abort_rate << '\n';
  o << "batches " << r.batches << "  resumes " << r.resumes << "  suspensions " << r.suspensions << "  hops "
    << r.hops << '\n';
  o << "epoch advances " << r.epoch_advances << "  retired " << r.bytes_retired << " B  reclaimed "
    << r.bytes_reclaimed << " B  peak pending " << r.max_residency_bytes << " B\n";
  o << "log records " << r.log_records << "  log bytes " << r.log_bytes << '\n';
  return o.str();
}

inline std::string emit_report(const run_report& r, report_format f) {
  switch (f) {
    case report_format::text: return emit_text(r);
    case report_format::csv: return std::string(csv_header) + '\n' + csv_row(r) + '\n';
    case report_format::json: return nlohmann::json(r).dump(2) + '\n';
  }
  return {};
}

inline run_report report_from_json(std::string_view s) { return nlohmann::json::parse(s).get<run_report>(); }

}  // namespace corodb::bench
