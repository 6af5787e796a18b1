#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corodb/common.hpp"

namespace corodb {

enum class log_kind : std::uint8_t { insert = 1, update = 2, remove = 3 };

struct log_record {
  log_kind kind = log_kind::insert;
  std::uint64_t table = 0;
  std::uint64_t rid = 0;
  timestamp commit_ts = 0;
  std::string payload;

  friend bool operator==(const log_record&, const log_record&) = default;
};

// Wire format, little-endian:
//   u32 length   bytes that follow this field
//   u8  kind
//   u64 table
//   u64 rid
//   u64 commit_ts
//   payload (length - 25 bytes)
inline constexpr std::size_t log_length_bytes = 4;
inline constexpr std::size_t log_fixed_bytes = 1 + 8 + 8 + 8;

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{static_cast<unsigned char>(p[i])} << (8 * i);
  return static_cast<T>(v);
}

}  // namespace detail

inline void encode_record(log_kind kind, std::uint64_t table, std::uint64_t rid, timestamp ts,
                          std::string_view payload, std::string& out) {
  if (payload.size() > UINT32_MAX - log_fixed_bytes) throw usage_error("log payload too large");
  detail::put_le(out, static_cast<std::uint32_t>(log_fixed_bytes + payload.size()));
  detail::put_le(out, static_cast<std::uint8_t>(kind));
  detail::put_le(out, table);
  detail::put_le(out, rid);
  detail::put_le(out, ts);
  out.append(payload);
}

inline void encode_record(const log_record& r, std::string& out) {
  encode_record(r.kind, r.table, r.rid, r.commit_ts, r.payload, out);
}

inline std::vector<log_record> decode_records(std::string_view bytes) {
  std::vector<log_record> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < log_length_bytes) throw invariant_error("truncated log record length");
    auto len = detail::get_le<std::uint32_t>(bytes.data() + pos);
    pos += log_length_bytes;
    if (len < log_fixed_bytes || bytes.size() - pos < len) throw invariant_error("malformed log record");
    const char* p = bytes.data() + pos;
    auto kind = detail::get_le<std::uint8_t>(p);
    if (kind < 1 || kind > 3) throw invariant_error("unknown log record kind");
    log_record r;
    r.kind = static_cast<log_kind>(kind);
    r.table = detail::get_le<std::uint64_t>(p + 1);
    r.rid = detail::get_le<std::uint64_t>(p + 9);
    r.commit_ts = detail::get_le<std::uint64_t>(p + 17);
    r.payload.assign(p + log_fixed_bytes, len - log_fixed_bytes);
    out.push_back(std::move(r));
    pos += len;
  }
  return out;
}

// Transaction-local write log. Owned by a batch slot and reused across the
// transactions that run in it; the commit timestamp is filled in at seal time.
class log_buffer {
 public:
  struct entry {
    log_kind kind;
    std::uint64_t table;
    std::uint64_t rid;
    std::size_t offset;
    std::uint32_t length;
  };

  // Returns the entry's position, used to rewrite it if the same record is
  // written again by this transaction.
  std::size_t append(log_kind kind, std::uint64_t table, std::uint64_t rid, std::string_view payload) {
    entries_.push_back({kind, table, rid, payloads_.size(), static_cast<std::uint32_t>(payload.size())});
    payloads_.append(payload);
    return entries_.size() - 1;
  }

  void rewrite(std::size_t i, log_kind kind, std::string_view payload) {
    auto& e = entries_.at(i);
    e.kind = kind;
    e.offset = payloads_.size();
    e.length = static_cast<std::uint32_t>(payload.size());
    payloads_.append(payload);
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const entry& at(std::size_t i) const { return entries_.at(i); }
  std::string_view payload(std::size_t i) const {
    auto& e = entries_.at(i);
    return {payloads_.data() + e.offset, e.length};
  }

  std::size_t encoded_bytes() const noexcept {
    std::size_t n = 0;
    for (auto& e : entries_) n += log_length_bytes + log_fixed_bytes + e.length;
    return n;
  }

  void encode(timestamp ts, std::string& out) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& e = entries_[i];
      encode_record(e.kind, e.table, e.rid, ts, payload(i), out);
    }
  }

  // Drop contents, keep capacity.
  void clear() noexcept {
    entries_.clear();
    payloads_.clear();
  }

  const void* storage_id() const noexcept { return entries_.data(); }

 private:
  std::vector<entry> entries_;
  std::string payloads_;
};

struct log_extent {
  std::uint64_t seq;
  timestamp commit_ts;
  std::uint64_t offset;
  std::uint64_t length;
  std::uint32_t records;
};

// Per-worker destination for sealed buffers. Sealing never waits for the file.
class log_sink {
 public:
  enum class mode {
    retain,  // keep every byte and extent in memory, for audits
    count,   // keep totals only
  };

  explicit log_sink(unsigned worker, mode m = mode::count, const std::optional<std::filesystem::path>& dir = {})
      : worker_(worker), mode_(m) {
    if (dir) {
      path_ = *dir / ("log-worker-" + std::to_string(worker) + ".bin");
      file_.open(path_, std::ios::binary | std::ios::trunc);
      if (!file_) throw resource_error("cannot open log file " + path_.string());
    }
  }

  log_extent seal(const log_buffer& buf, timestamp ts) {
    if (seq_ > 0 && ts <= last_ts_) throw invariant_error("log sealed out of commit order");
    scratch_.clear();
    buf.encode(ts, scratch_);
    log_extent ext{seq_++, ts, total_bytes_, scratch_.size(), static_cast<std::uint32_t>(buf.size())};
    if (mode_ == mode::retain) {
      bytes_.append(scratch_);
      extents_.push_back(ext);
    }
    if (file_.is_open()) file_.write(scratch_.data(), static_cast<std::streamsize>(scratch_.size()));
    total_bytes_ += scratch_.size();
    total_records_ += buf.size();
    last_ts_ = ts;
    return ext;
  }

  void flush() {
    if (file_.is_open()) file_.flush();
  }

  unsigned worker() const noexcept { return worker_; }
  std::uint64_t sealed() const noexcept { return seq_; }
  std::uint64_t total_bytes() const noexcept { return total_bytes_; }
  std::uint64_t total_records() const noexcept { return total_records_; }
  const std::string& bytes() const noexcept { return bytes_; }
  const std::vector<log_extent>& extents() const noexcept { return extents_; }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  unsigned worker_;
  mode mode_;
  std::uint64_t seq_ = 0;
  timestamp last_ts_ = 0;
  std::uint64_t total_bytes_ = 0;
  std::uint64_t total_records_ = 0;
  std::string bytes_;
  std::string scratch_;
  std::vector<log_extent> extents_;
  std::filesystem::path path_;
  std::ofstream file_;
};

}  // namespace corodb
