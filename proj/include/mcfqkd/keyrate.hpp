// keyrate.hpp
// Finite-key secret key length for d-dimensional BB84 with one decoy
// intensity (two intensities in total).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "linksim.hpp"

namespace mcfqkd {

enum class QberCombination { detection_weighted, worst_case };

struct SecurityParams {
  double n_z_block = 1e9;  // sifted Z bits per privacy-amplification block
  double eps_sec = 1e-15;
  double eps_cor = 1e-15;
  double f_ec = 1.15;
  int d = 4;
  // Drops every statistical deviation term; for testing the decoy algebra.
  bool asymptotic = false;
  QberCombination qber_combination = QberCombination::detection_weighted;

  void validate() const {
    if (!(eps_sec > 0.0 && eps_sec < 1.0) || !(eps_cor > 0.0 && eps_cor < 1.0))
      throw std::invalid_argument("security eps_sec and eps_cor must be in (0, 1)");
    if (!(n_z_block >= 1e4)) throw std::invalid_argument("security n_z_block must be >= 1e4");
    if (!(f_ec >= 1.0)) throw std::invalid_argument("security f_ec must be >= 1");
    if (d != 2 && d != 4) throw std::invalid_argument("security d must be 2 or 4");
  }
};

// Probability that a pulse carries n photons, averaged over both intensities.
inline double tau_n(int n, double mu1, double mu2, double p_mu1) {
  if (n < 0) throw std::invalid_argument("tau_n: n must be >= 0");
  auto term = [n](double k) {
    if (k == 0.0) return n == 0 ? 1.0 : 0.0;
    return std::exp(-k + n * std::log(k) - std::lgamma(n + 1.0));
  };
  return p_mu1 * term(mu1) + (1.0 - p_mu1) * term(mu2);
}

// H_d(x) = -x log2(x/(d-1)) - (1-x) log2(1-x), defined on [0, 1 - 1/d].
inline double entropy_hd(double x, int d) {
  if (d < 2) throw std::invalid_argument("entropy_hd: d must be >= 2");
  const double upper = 1.0 - 1.0 / d;
  if (!(x >= -1e-12 && x <= upper + 1e-12))
    throw std::invalid_argument("entropy_hd: x outside [0, 1 - 1/d]");
  x = std::clamp(x, 0.0, upper);
  if (x == 0.0) return 0.0;
  if (x == upper) return std::log2(static_cast<double>(d));
  return -x * std::log2(x / (d - 1)) - (1.0 - x) * std::log2(1.0 - x);
}

// Hoeffding deviation sqrt(n/2 ln(19/eps)).
inline double hoeffding_deviation(double n_total, double eps_sec) {
  return std::sqrt(0.5 * n_total * std::log(19.0 / eps_sec));
}

struct CountBounds {
  double lower = 0.0;
  double upper = 0.0;
};

// Intensity-k counts rescaled by e^k/p_k, shifted by the Hoeffding deviation.
inline CountBounds finite_size_counts(double n_observed, double k, double p_k, double n_total,
                                      double eps_sec, bool asymptotic = false) {
  if (n_observed < 0.0) throw std::invalid_argument("finite_size_counts: negative count");
  const double scale = std::exp(k) / p_k;
  const double dev = asymptotic ? 0.0 : hoeffding_deviation(n_total, eps_sec);
  return {std::max(0.0, scale * (n_observed - dev)), scale * (n_observed + dev)};
}

// Detection and error counts per basis and intensity; the input of the decoy
// analysis. Counts are real-valued so expected statistics can be used.
struct DecoyStatistics {
  std::array<std::array<double, 2>, 2> n{};  // [basis][intensity]
  std::array<std::array<double, 2>, 2> m{};

  double& detections(Basis b, Intensity k) {
    return n[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  double detections(Basis b, Intensity k) const {
    return n[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  double& errors(Basis b, Intensity k) {
    return m[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  double errors(Basis b, Intensity k) const {
    return m[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  double detections(Basis b) const {
    return detections(b, Intensity::mu1) + detections(b, Intensity::mu2);
  }
  double errors(Basis b) const { return errors(b, Intensity::mu1) + errors(b, Intensity::mu2); }

  static DecoyStatistics from_tally(const Tally& tally) {
    DecoyStatistics s;
    for (Basis b : all_bases)
      for (Intensity k : all_intensities) {
        s.detections(b, k) = static_cast<double>(tally.cell(b, k).n_detected);
        s.errors(b, k) = static_cast<double>(tally.cell(b, k).m_errors);
      }
    return s;
  }
};

struct DecoyBounds {
  double d0_z = 0.0;    // vacuum events in Z, lower bound
  double d1_z = 0.0;    // single-photon events in Z, lower bound
  double phi_z = 0.0;   // phase error rate of the Z single-photon events, upper bound
  double tau0 = 0.0;
  double tau1 = 0.0;
  double s0_z_upper = 0.0;
  double s1_x = 0.0;    // single-photon events in X, lower bound
  double v1_x = 0.0;    // single-photon errors in X, upper bound
  double gamma = 0.0;   // sampling correction added to v1_x / s1_x
  bool clamped = false;  // some bound had to be clipped into its valid range
};

// Finite-size correction for estimating the Z phase error from X statistics.
inline double phase_error_fluctuation(double eps_sec, double ratio, double s_z, double s_x) {
  if (s_z <= 0.0 || s_x <= 0.0 || ratio <= 0.0 || ratio >= 1.0) return 0.0;
  const double b = ratio * (1.0 - ratio);
  const double q = 19.0 / eps_sec;
  const double inner = (s_z + s_x) / (s_z * s_x * b) * q * q;
  return std::sqrt((s_z + s_x) * b / (s_z * s_x * std::log(2.0)) * std::log2(inner));
}

namespace detail {

struct ScaledCounts {
  CountBounds mu1;
  CountBounds mu2;
};

inline ScaledCounts scaled(double c1, double c2, double total, const SourceConfig& src,
                           const SecurityParams& params) {
  return {finite_size_counts(c1, src.mu1, src.p_mu1, total, params.eps_sec, params.asymptotic),
          finite_size_counts(c2, src.mu2, 1.0 - src.p_mu1, total, params.eps_sec,
                             params.asymptotic)};
}

// Vacuum upper bound from the decoy error counts: vacuum clicks are wrong at
// least half the time for any d >= 2.
inline double vacuum_upper(double m_mu2, double m_total, double tau0, const SourceConfig& src,
                           const SecurityParams& params) {
  const double dev = params.asymptotic ? 0.0 : hoeffding_deviation(m_total, params.eps_sec);
  return 2.0 * (tau0 * std::exp(src.mu2) / (1.0 - src.p_mu1) * m_mu2 + dev);
}

inline double single_photon_lower(const ScaledCounts& n, double s0_upper, double tau0,
                                  double tau1, double mu1, double mu2) {
  const double r = (mu2 * mu2) / (mu1 * mu1);
  const double v = (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1);
  return tau1 * mu1 * (n.mu2.lower - r * n.mu1.upper - v * s0_upper / tau0) /
         (mu2 * (mu1 - mu2));
}

}  // namespace detail

inline DecoyBounds decoy_bounds(const DecoyStatistics& stats, const SecurityParams& params,
                                const SourceConfig& source) {
  params.validate();
  const double mu1 = source.mu1, mu2 = source.mu2;
  if (!(mu1 > mu2)) throw std::invalid_argument("decoy_bounds: requires mu1 > mu2");
  if (!(source.p_mu1 > 0.0 && source.p_mu1 < 1.0))
    throw std::invalid_argument("decoy_bounds: p_mu1 must be in (0, 1)");

  DecoyBounds out;
  out.tau0 = tau_n(0, mu1, mu2, source.p_mu1);
  out.tau1 = tau_n(1, mu1, mu2, source.p_mu1);

  const double nz = stats.detections(Basis::Z), nx = stats.detections(Basis::X);
  const double mz = stats.errors(Basis::Z), mx = stats.errors(Basis::X);
  const auto nz_k = detail::scaled(stats.detections(Basis::Z, Intensity::mu1),
                                   stats.detections(Basis::Z, Intensity::mu2), nz, source, params);
  const auto nx_k = detail::scaled(stats.detections(Basis::X, Intensity::mu1),
                                   stats.detections(Basis::X, Intensity::mu2), nx, source, params);
  const auto mx_k = detail::scaled(stats.errors(Basis::X, Intensity::mu1),
                                   stats.errors(Basis::X, Intensity::mu2), mx, source, params);

  const double d0 = out.tau0 * (mu1 * nz_k.mu2.lower - mu2 * nz_k.mu1.upper) / (mu1 - mu2);
  out.d0_z = std::max(0.0, d0);
  out.clamped |= d0 < 0.0;

  out.s0_z_upper = detail::vacuum_upper(stats.errors(Basis::Z, Intensity::mu2), mz, out.tau0,
                                        source, params);
  const double d1 =
      detail::single_photon_lower(nz_k, out.s0_z_upper, out.tau0, out.tau1, mu1, mu2);
  out.d1_z = std::max(0.0, d1);
  out.clamped |= d1 < 0.0;

  const double s0_x_upper = detail::vacuum_upper(stats.errors(Basis::X, Intensity::mu2), mx,
                                                 out.tau0, source, params);
  const double s1x = detail::single_photon_lower(nx_k, s0_x_upper, out.tau0, out.tau1, mu1, mu2);
  out.s1_x = std::max(0.0, s1x);
  out.clamped |= s1x < 0.0;

  const double v1 = out.tau1 * (mx_k.mu1.upper - mx_k.mu2.lower) / (mu1 - mu2);
  out.v1_x = std::max(0.0, v1);
  out.clamped |= v1 < 0.0;

  const double phi_max = 1.0 - 1.0 / params.d;
  if (out.s1_x <= 0.0 || out.d1_z <= 0.0) {
    out.phi_z = phi_max;
    out.clamped = true;
    return out;
  }
  const double ratio = out.v1_x / out.s1_x;
  if (ratio >= phi_max) {
    out.phi_z = phi_max;
    out.clamped = true;
    return out;
  }
  out.gamma = params.asymptotic
                  ? 0.0
                  : phase_error_fluctuation(params.eps_sec, ratio, out.d1_z, out.s1_x);
  out.phi_z = std::min(ratio + out.gamma, phi_max);
  out.clamped |= ratio + out.gamma > phi_max;
  return out;
}

struct KeyRateResult {
  double ell = 0.0;          // secret bits per block, clamped at 0
  double ell_unclamped = 0.0;
  double r_sk = 0.0;         // bits/s
  double lambda_ec = 0.0;    // bits
  double block_time = 0.0;   // s
  double n_z = 0.0;          // sifted Z bits in the block
  double qber_z = 0.0;
  DecoyBounds bounds;
};

// Privacy-amplification penalty 6 log2(19/eps_sec) + log2(2/eps_cor).
inline double epsilon_penalty(const SecurityParams& params) {
  return 6.0 * std::log2(19.0 / params.eps_sec) + std::log2(2.0 / params.eps_cor);
}

inline KeyRateResult secret_key_length(const DecoyBounds& bounds, double qber_z,
                                       const SecurityParams& params, double n_z,
                                       double block_time) {
  params.validate();
  const double log_d = std::log2(static_cast<double>(params.d));
  if (!(qber_z >= 0.0 && qber_z <= 1.0 - 1.0 / params.d))
    throw std::invalid_argument("secret_key_length: qber_z outside [0, 1 - 1/d], got " +
                                std::to_string(qber_z));
  if (!(block_time > 0.0)) throw std::invalid_argument("secret_key_length: block_time must be > 0");
  KeyRateResult r;
  r.bounds = bounds;
  r.qber_z = qber_z;
  r.n_z = n_z;
  r.block_time = block_time;
  r.lambda_ec = params.f_ec * n_z * entropy_hd(qber_z, params.d);
  r.ell_unclamped = log_d * bounds.d0_z + bounds.d1_z * (log_d - entropy_hd(bounds.phi_z, params.d)) -
                    r.lambda_ec - epsilon_penalty(params);
  r.ell = std::max(0.0, r.ell_unclamped);
  r.r_sk = r.ell / block_time;
  return r;
}

// QBER entering the error-correction cost.
inline double combined_qber_z(const DecoyStatistics& stats, QberCombination mode) {
  if (mode == QberCombination::worst_case) {
    double worst = 0.0;
    for (Intensity k : all_intensities) {
      const double n = stats.detections(Basis::Z, k);
      if (n > 0.0) worst = std::max(worst, stats.errors(Basis::Z, k) / n);
    }
    return worst;
  }
  const double n = stats.detections(Basis::Z);
  return n > 0.0 ? stats.errors(Basis::Z) / n : 0.0;
}

// Key rate of a recorded session; the tally itself is the block.
inline KeyRateResult key_rate_from_tally(const Tally& tally, const SecurityParams& params,
                                         const SourceConfig& source) {
  const auto stats = DecoyStatistics::from_tally(tally);
  const auto bounds = decoy_bounds(stats, params, source);
  const double q = std::min(combined_qber_z(stats, params.qber_combination), 1.0 - 1.0 / params.d);
  return secret_key_length(bounds, q, params, stats.detections(Basis::Z), tally.elapsed);
}

// Per-cell QBER override, e.g. measured values replacing the model ones.
struct QberOverride {
  std::array<std::array<double, 2>, 2> qber{};  // [basis][intensity]
  double at(Basis b, Intensity k) const {
    return qber[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
};

// Expected statistics of one privacy-amplification block: the block closes
// once n_z_block sifted Z detections have accumulated.
inline DecoyStatistics block_statistics(const ExpectedRates& rates, const SecurityParams& params,
                                        double* block_time,
                                        const std::optional<QberOverride>& qber = std::nullopt) {
  const double rate_z = rates.sifted_rate(Basis::Z);
  if (!(rate_z > 0.0)) throw std::invalid_argument("block_statistics: no sifted Z detections");
  const double t = params.n_z_block / rate_z;
  if (block_time) *block_time = t;
  DecoyStatistics s;
  for (Basis b : all_bases)
    for (Intensity k : all_intensities) {
      const auto& cell = rates.cell(b, k);
      s.detections(b, k) = cell.sifted_rate * t;
      s.errors(b, k) = s.detections(b, k) * (qber ? qber->at(b, k) : cell.qber);
    }
  return s;
}

// Rate model -> decoy bounds -> key length for one configuration.
inline KeyRateResult evaluate_key_rate(const LinkConfig& config, const SecurityParams& params,
                                       const std::optional<QberOverride>& qber = std::nullopt,
                                       std::optional<PhaseStatistics> phase = std::nullopt) {
  const auto rates = expected_rates(config, phase);
  double block_time = 0.0;
  const auto stats = block_statistics(rates, params, &block_time, qber);
  const auto bounds = decoy_bounds(stats, params, config.source);
  const double q = std::min(combined_qber_z(stats, params.qber_combination), 1.0 - 1.0 / params.d);
  return secret_key_length(bounds, q, params, stats.detections(Basis::Z), block_time);
}

}  // namespace mcfqkd
