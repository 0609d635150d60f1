// random.hpp
// Seeded random streams shared by the simulation modules.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace mcfqkd {

using Rng = std::mt19937_64;

// 53-bit uniform in [0, 1).
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double gaussian(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline std::int64_t poisson_count(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

// Derives an independent stream for a sub-component from a session seed.
inline Rng substream(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32)};
  return Rng(seq);
}

// Inverse-CDF Poisson sampler with a precomputed table; the tail past the
// table is resolved by continuing the recurrence.
class PoissonTable {
public:
  explicit PoissonTable(double mean, int max_tabulated = 24) : mean_(mean) {
    double p = std::exp(-mean);
    double cdf = 0.0;
    for (int n = 0; n <= max_tabulated; ++n) {
      cdf += p;
      cdf_.push_back(cdf);
      p *= mean / (n + 1);
    }
  }

  int sample(double u) const {
    if (u < cdf_[0]) return 0;
    for (std::size_t n = 1; n < cdf_.size(); ++n)
      if (u < cdf_[n]) return static_cast<int>(n);
    return static_cast<int>(cdf_.size());
  }

  double mean() const { return mean_; }

private:
  double mean_;
  std::vector<double> cdf_;
};

}  // namespace mcfqkd
