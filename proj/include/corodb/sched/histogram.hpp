#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <limits>

namespace corodb {

// Log-linear histogram of non-negative integers (nanoseconds, usually).
// Each power of two is split into 64 linear sub-buckets, so a reported
// percentile is within 1/64 of the true value. Mean, min and max are exact.
class histogram {
 public:
  static constexpr unsigned sub_bits = 6;
  static constexpr unsigned sub_count = 1u << sub_bits;

  void record(std::uint64_t v) noexcept {
    ++counts_[bucket_of(v)];
    ++count_;
    sum_ += static_cast<double>(v);
    min_ = std::min(min_, v);
    max_ = std::max(max_, v);
  }

  void merge(const histogram& o) noexcept {
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
    count_ += o.count_;
    sum_ += o.sum_;
    min_ = std::min(min_, o.min_);
    max_ = std::max(max_, o.max_);
  }

  std::uint64_t count() const noexcept { return count_; }
  double mean() const noexcept { return count_ == 0 ? 0.0 : sum_ / static_cast<double>(count_); }
  std::uint64_t min() const noexcept { return count_ == 0 ? 0 : min_; }
  std::uint64_t max() const noexcept { return max_; }

  // Smallest recorded-bucket upper bound covering fraction `q` of samples,
  // clamped to the exact maximum.
  std::uint64_t percentile(double q) const noexcept {
    if (count_ == 0) return 0;
    auto rank = static_cast<std::uint64_t>(q * static_cast<double>(count_));
    if (rank >= count_) rank = count_ - 1;
    std::uint64_t seen = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      seen += counts_[i];
      if (seen > rank) return std::min(upper_of(i), max_);
    }
    return max_;
  }

  static std::size_t bucket_of(std::uint64_t v) noexcept {
    if (v < sub_count) return static_cast<std::size_t>(v);
    unsigned msb = 63u - static_cast<unsigned>(std::countl_zero(v));
    unsigned shift = msb - sub_bits;
    std::uint64_t sub = (v >> shift) & (sub_count - 1);
    return (std::size_t{shift} + 1) * sub_count + sub;
  }

  // Largest value mapping to bucket `i`.
  static std::uint64_t upper_of(std::size_t i) noexcept {
    if (i < sub_count) return i;
    std::size_t shift = i / sub_count - 1;
    std::uint64_t sub = i % sub_count;
    std::uint64_t base = (sub_count + sub) << shift;
    return base + ((std::uint64_t{1} << shift) - 1);
  }

 private:
  std::array<std::uint64_t, (64 - sub_bits + 1) * sub_count> counts_{};
  std::uint64_t count_ = 0;
  double sum_ = 0;
  std::uint64_t min_ = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t max_ = 0;
};

}  // namespace corodb
