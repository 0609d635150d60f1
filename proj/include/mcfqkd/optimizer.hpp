// optimizer.hpp
// Source-parameter search maximizing the secret key rate: a coarse grid
// followed by a compass pattern search. The objective is clamped at zero, so
// the search stays derivative-free.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "keyrate.hpp"

namespace mcfqkd {

// (mu1, mu2, p_mu1, p_z)
using SourceParams = std::array<double, 4>;

struct SearchBounds {
  double mu_min = 0.01;
  double mu_max = 0.9;
  double p_min = 0.5;
  double p_max = 0.99;
  std::array<double, 4> grid_step{0.05, 0.02, 0.04, 0.03};
  double min_step = 1e-4;
  int threads = 1;

  void validate() const {
    if (!(mu_min > 0.0 && mu_min < mu_max && mu_max < 1.0))
      throw std::invalid_argument("search bounds: need 0 < mu_min < mu_max < 1");
    if (!(p_min > 0.0 && p_min < p_max && p_max < 1.0))
      throw std::invalid_argument("search bounds: need 0 < p_min < p_max < 1");
    for (double s : grid_step)
      if (!(s > 0.0)) throw std::invalid_argument("search bounds: grid steps must be > 0");
    if (!(min_step > 0.0)) throw std::invalid_argument("search bounds: min_step must be > 0");
    if (threads < 1) throw std::invalid_argument("search bounds: threads must be >= 1");
  }

  bool feasible(const SourceParams& x) const {
    return x[0] >= mu_min && x[0] <= mu_max && x[1] >= mu_min && x[1] < x[0] && x[2] >= p_min &&
           x[2] <= p_max && x[3] >= p_min && x[3] <= p_max;
  }
};

struct OptimizeResult {
  bool has_key = false;
  SourceParams params{};
  KeyRateResult key;
  std::array<double, 4> final_step{};  // per-axis step at which no neighbor improved
  std::int64_t evaluations = 0;
};

inline LinkConfig with_source_params(LinkConfig config, const SourceParams& x) {
  config.source.mu1 = x[0];
  config.source.mu2 = x[1];
  config.source.p_mu1 = x[2];
  config.source.p_z_alice = x[3];
  config.source.p_z_bob = x[3];
  return config;
}

// Secret key rate at a parameter tuple; 0 outside the search box.
inline double key_rate_objective(const LinkConfig& base, const SecurityParams& security,
                                 const SearchBounds& bounds, const SourceParams& x) {
  if (!bounds.feasible(x)) return 0.0;
  return evaluate_key_rate(with_source_params(base, x), security).r_sk;
}

namespace detail {

struct Candidate {
  double value = -1.0;
  SourceParams x{};
};

// Higher rate wins; equal rates go to the lexicographically smallest tuple.
inline bool better(const Candidate& a, const Candidate& b) {
  if (a.value != b.value) return a.value > b.value;
  return a.x < b.x;
}

inline std::vector<double> axis(double lo, double hi, double step) {
  std::vector<double> v;
  for (int i = 0;; ++i) {
    const double x = lo + i * step;
    if (x > hi + 1e-12) break;
    v.push_back(x);
  }
  return v;
}

}  // namespace detail

inline OptimizeResult optimize_params(const LinkConfig& base, const SecurityParams& security,
                                      const SearchBounds& bounds = {}) {
  base.validate();
  security.validate();
  bounds.validate();

  const auto mu_axis = detail::axis(bounds.mu_min, bounds.mu_max, bounds.grid_step[0]);
  const auto mu2_axis = detail::axis(bounds.mu_min, bounds.mu_max, bounds.grid_step[1]);
  const auto pmu_axis = detail::axis(bounds.p_min, bounds.p_max, bounds.grid_step[2]);
  const auto pz_axis = detail::axis(bounds.p_min, bounds.p_max, bounds.grid_step[3]);

  std::vector<SourceParams> grid;
  for (double m1 : mu_axis)
    for (double m2 : mu2_axis) {
      if (m2 >= m1) break;
      for (double p1 : pmu_axis)
        for (double pz : pz_axis) grid.push_back({m1, m2, p1, pz});
    }

  // Each worker scans a contiguous slice; slices are reduced in order.
  const auto workers = static_cast<std::size_t>(bounds.threads);
  std::vector<detail::Candidate> slice_best(workers);
  auto scan = [&](std::size_t w) {
    const std::size_t lo = grid.size() * w / workers, hi = grid.size() * (w + 1) / workers;
    detail::Candidate best;
    for (std::size_t i = lo; i < hi; ++i) {
      const detail::Candidate c{key_rate_objective(base, security, bounds, grid[i]), grid[i]};
      if (detail::better(c, best)) best = c;
    }
    slice_best[w] = best;
  };
  if (workers == 1) {
    scan(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(scan, w);
  }

  OptimizeResult result;
  result.evaluations = static_cast<std::int64_t>(grid.size());
  detail::Candidate best;
  for (const auto& c : slice_best)
    if (detail::better(c, best)) best = c;

  if (!(best.value > 0.0)) {
    result.params = best.x;
    return result;
  }

  // Compass search: try +-step along every axis, move to the best improving
  // neighbor, halve the steps when none improves.
  std::array<double, 4> step = bounds.grid_step;
  for (auto& s : step) s /= 2.0;
  while (*std::max_element(step.begin(), step.end()) >= bounds.min_step) {
    detail::Candidate next = best;
    for (std::size_t axis = 0; axis < 4; ++axis)
      for (double dir : {-1.0, 1.0}) {
        SourceParams x = best.x;
        x[axis] += dir * step[axis];
        const detail::Candidate c{key_rate_objective(base, security, bounds, x), x};
        ++result.evaluations;
        if (detail::better(c, next)) next = c;
      }
    if (next.x == best.x) {
      for (auto& s : step) s /= 2.0;
    } else {
      best = next;
    }
  }

  result.has_key = true;
  result.params = best.x;
  for (std::size_t i = 0; i < 4; ++i) result.final_step[i] = step[i] * 2.0;
  result.key = evaluate_key_rate(with_source_params(base, best.x), security);
  return result;
}

}  // namespace mcfqkd
