#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "corodb/common.hpp"

namespace corodb::bench {

// Uniform double in [0, 1) from the top 53 bits of a 64-bit engine.
template <typename Rng>
double unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1p-53;
}

// Bounded Zipfian over [0, n): item i has weight 1 / (i + 1)^theta.
// Up to `exact_limit` items it inverts the exact CDF from a precomputed
// table; larger key spaces use the Gray et al. closed form, whose first two
// items are still exact.
class zipfian {
 public:
  static constexpr std::uint64_t default_exact_limit = 10'000'000;

  zipfian(std::uint64_t n, double theta, std::uint64_t exact_limit = default_exact_limit) : n_(n), theta_(theta) {
    if (n == 0) throw usage_error("zipfian needs at least one item");
    if (!(theta >= 0.0 && theta < 1.0)) throw usage_error("zipfian theta must be in [0, 1)");
    if (theta == 0.0) return;
    if (n <= exact_limit) {
      auto cdf = std::make_shared<std::vector<double>>(n);
      double sum = 0;
      for (std::uint64_t i = 0; i < n; ++i) {
        sum += weight(i);
        (*cdf)[i] = sum;
      }
      zetan_ = sum;
      cdf_ = std::move(cdf);
      return;
    }
    zetan_ = zeta(n, theta);
    double zeta2 = zeta(2, theta);
    alpha_ = 1.0 / (1.0 - theta);
    eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n), 1.0 - theta)) / (1.0 - zeta2 / zetan_);
  }

  std::uint64_t size() const noexcept { return n_; }
  double theta() const noexcept { return theta_; }
  bool exact() const noexcept { return theta_ == 0.0 || cdf_ != nullptr; }

  double weight(std::uint64_t i) const noexcept { return 1.0 / std::pow(static_cast<double>(i + 1), theta_); }

  // Exact probability of item `i`.
  double probability(std::uint64_t i) const noexcept {
    if (theta_ == 0.0) return 1.0 / static_cast<double>(n_);
    return weight(i) / zetan_;
  }

  template <typename Rng>
  std::uint64_t operator()(Rng& rng) const {
    double u = unit(rng);
    if (theta_ == 0.0) return std::min(n_ - 1, static_cast<std::uint64_t>(u * static_cast<double>(n_)));
    if (cdf_ != nullptr) {
      double target = u * zetan_;
      auto it = std::upper_bound(cdf_->begin(), cdf_->end(), target);
      return it == cdf_->end() ? n_ - 1 : static_cast<std::uint64_t>(it - cdf_->begin());
    }
    double uz = u * zetan_;
    if (uz < 1.0) return 0;
    if (uz < 1.0 + std::pow(0.5, theta_)) return 1;
    auto v = static_cast<std::uint64_t>(static_cast<double>(n_) * std::pow(eta_ * u - eta_ + 1.0, alpha_));
    return std::min(v, n_ - 1);
  }

  static double zeta(std::uint64_t n, double theta) {
    double sum = 0;
    for (std::uint64_t i = 1; i <= n; ++i) sum += 1.0 / std::pow(static_cast<double>(i), theta);
    return sum;
  }

 private:
  std::uint64_t n_;
  double theta_;
  double zetan_ = 0;
  double alpha_ = 0;
  double eta_ = 0;
  // shared so copies for each worker don't duplicate the table
  std::shared_ptr<const std::vector<double>> cdf_;
};

}  // namespace corodb::bench
