// fringes.hpp
// Stabilization-channel counts while the reference interferometer phase
// sweeps slowly, first with the encoding modulator running and then idle.
// With the reference polarized along the modulator axis the symbol-rate
// phase flips average the interference away; on the orthogonal axis the
// fringes stay visible.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "channel.hpp"
#include "prbs.hpp"
#include "random.hpp"
#include "stabilizer.hpp"

namespace mcfqkd {

struct FringeOptions {
  double segment_duration = 10.0;  // s with the modulator on, then the same off
  double bin = 0.02;               // s per count sample
  double fringe_frequency = 0.5;   // Hz, slow reference phase sweep
  double extinction = 0.02;        // modulator response on the orthogonal axis
  int prbs_order = 12;

  void validate() const {
    if (!(segment_duration > 0.0) || !(bin > 0.0) || bin > segment_duration)
      throw std::invalid_argument("fringes: need 0 < bin <= segment_duration");
    if (!(fringe_frequency > 0.0)) throw std::invalid_argument("fringes: fringe_frequency must be > 0");
  }
};

struct FringeSample {
  double time;
  bool modulator_on;
  std::int64_t counts;
};

struct FringeTrace {
  PolarizationMode mode = PolarizationMode::orthogonal;
  std::vector<FringeSample> samples;
  double visibility_on = 0.0;
  double visibility_off = 0.0;
};

// (max - min) / (max + min) of the count samples.
inline double fringe_visibility(const std::vector<std::int64_t>& counts) {
  if (counts.empty()) throw std::invalid_argument("fringe_visibility: no samples");
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  const double sum = static_cast<double>(*hi + *lo);
  return sum > 0.0 ? static_cast<double>(*hi - *lo) / sum : 0.0;
}

// The detector dead time (microseconds) spans thousands of symbols, so the
// incident rate is averaged over the modulation pattern before the dead-time
// correction is applied.
inline FringeTrace simulate_fringes(PolarizationMode mode, const PllConfig& pll,
                                    std::uint64_t seed, FringeOptions options = {}) {
  pll.validate();
  options.validate();

  // Symbol phase statistics of the modulation pattern (one PRBS period).
  Prbs prbs(options.prbs_order, 1);
  std::int64_t ones = 0;
  const auto period = static_cast<std::int64_t>(prbs.period());
  for (std::int64_t i = 0; i < period; ++i) ones += prbs.next_bit();
  const double p_flip = static_cast<double>(ones) / static_cast<double>(period);
  const double applied = pml_phase(std::numbers::pi, mode, options.extinction);

  auto incident = [&](double theta) {
    const double c = std::cos(theta / 2.0);
    return pll.max_fringe_rate * c * c + pll.background_rate;
  };

  FringeTrace trace;
  trace.mode = mode;
  Rng rng = substream(seed, 0xf1);
  const auto bins = static_cast<std::int64_t>(std::llround(options.segment_duration / options.bin));
  std::vector<std::int64_t> on, off;
  for (int segment = 0; segment < 2; ++segment) {
    const bool modulator_on = segment == 0;
    for (std::int64_t i = 0; i < bins; ++i) {
      const double t = (static_cast<double>(segment * bins + i) + 0.5) * options.bin;
      const double theta = 2.0 * std::numbers::pi * options.fringe_frequency * t;
      const double r_in = modulator_on
                              ? (1.0 - p_flip) * incident(theta) + p_flip * incident(theta + applied)
                              : incident(theta);
      const double r_obs = r_in / (1.0 + r_in * pll.dead_time);
      const std::int64_t counts = pll.shot_noise
                                      ? poisson_count(rng, r_obs * options.bin)
                                      : static_cast<std::int64_t>(std::llround(r_obs * options.bin));
      trace.samples.push_back({t, modulator_on, counts});
      (modulator_on ? on : off).push_back(counts);
    }
  }
  trace.visibility_on = fringe_visibility(on);
  trace.visibility_off = fringe_visibility(off);
  return trace;
}

}  // namespace mcfqkd
