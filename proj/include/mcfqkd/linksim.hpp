// linksim.hpp
// End-to-end QKD session simulation: weak coherent source, fiber channel,
// phase stabilization, single-photon detectors and basis sifting. Sessions
// run either pulse by pulse (Monte Carlo) or as closed-form expectations.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "channel.hpp"
#include "prbs.hpp"
#include "random.hpp"
#include "stabilizer.hpp"
#include "states.hpp"

namespace mcfqkd {

enum class Intensity { mu1 = 0, mu2 = 1 };

inline const char* to_string(Intensity k) { return k == Intensity::mu1 ? "mu1" : "mu2"; }

inline constexpr std::array<Basis, 2> all_bases{Basis::Z, Basis::X};
inline constexpr std::array<Intensity, 2> all_intensities{Intensity::mu1, Intensity::mu2};

struct SourceConfig {
  double rep_rate = 5.95e8;  // Hz
  double mu1 = 0.19;         // signal, photons/pulse
  double mu2 = 0.15;         // decoy, photons/pulse
  double p_mu1 = 0.62;
  double p_z_alice = 0.90;
  double p_z_bob = 0.90;
  double switch_error = 0.021;
  int prbs_order = 12;

  void validate() const {
    if (!(rep_rate > 0.0)) throw std::invalid_argument("source rep_rate must be > 0");
    if (!(mu2 > 0.0 && mu2 < mu1)) throw std::invalid_argument("source requires 0 < mu2 < mu1");
    auto prob = [](double p, const char* name) {
      if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument(std::string("source ") + name + " must be in (0, 1)");
    };
    prob(p_mu1, "p_mu1");
    prob(p_z_alice, "p_z_alice");
    prob(p_z_bob, "p_z_bob");
    if (!(switch_error >= 0.0 && switch_error < 0.5))
      throw std::invalid_argument("source switch_error must be in [0, 0.5)");
    if (prbs_order < 2 || prbs_order > Prbs::max_order)
      throw std::invalid_argument("source prbs_order out of range");
  }

  double mu(Intensity k) const { return k == Intensity::mu1 ? mu1 : mu2; }
  double p(Intensity k) const { return k == Intensity::mu1 ? p_mu1 : 1.0 - p_mu1; }
  double p_alice(Basis b) const { return b == Basis::Z ? p_z_alice : 1.0 - p_z_alice; }
  double p_bob(Basis b) const { return b == Basis::Z ? p_z_bob : 1.0 - p_z_bob; }
  double sift_fraction() const {
    return p_z_alice * p_z_bob + (1.0 - p_z_alice) * (1.0 - p_z_bob);
  }
};

struct DetectorBank {
  double efficiency = 0.85;
  double dark_rate = 100.0;     // counts/s per detector
  double leakage_rate = 3.5e4;  // counts/s, all detectors together
  // Fraction of uncorrelated noise that survives the time-of-arrival
  // acceptance window around each pulse slot.
  double gate_fraction = 0.21;

  void validate() const {
    if (!(efficiency > 0.0 && efficiency <= 1.0))
      throw std::invalid_argument("detectors efficiency must be in (0, 1]");
    if (!(dark_rate >= 0.0) || !(leakage_rate >= 0.0))
      throw std::invalid_argument("detectors rates must be >= 0");
    if (!(gate_fraction > 0.0 && gate_fraction <= 1.0))
      throw std::invalid_argument("detectors gate_fraction must be in (0, 1]");
  }

  double gated_noise_rate(int active_detectors) const {
    return gate_fraction * (active_detectors * dark_rate + leakage_rate);
  }
};

struct LinkConfig {
  ChannelConfig channel;
  SourceConfig source;
  DetectorBank detectors;
  PllConfig pll;
  int dimension = 4;

  void validate() const {
    channel.validate();
    source.validate();
    detectors.validate();
    pll.validate();
    if (dimension != 2 && dimension != 4) throw std::invalid_argument("dimension must be 2 or 4");
  }

  // Photon survival from the source to a click.
  double eta() const { return transmittance(channel) * detectors.efficiency; }
  double noise_probability_per_slot() const {
    return detectors.gated_noise_rate(dimension) / source.rep_rate;
  }
  // The two-dimensional variant keeps one core pair per basis, so the
  // optical switch stays idle.
  double effective_switch_error() const { return dimension == 4 ? source.switch_error : 0.0; }
};

struct TallyCell {
  std::int64_t n_sent = 0;
  std::int64_t n_matched = 0;   // receiver chose the same basis
  std::int64_t n_detected = 0;  // sifted single clicks
  std::int64_t m_errors = 0;
  std::int64_t n_double = 0;    // discarded multi-click slots
  std::int64_t n_vacuum_tagged = 0;  // detections from pulses with zero emitted photons
  std::int64_t n_single_tagged = 0;  // detections from single-photon pulses
};

struct Tally {
  std::array<std::array<TallyCell, 2>, 2> cells{};
  double elapsed = 0.0;

  TallyCell& cell(Basis b, Intensity k) {
    return cells[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  const TallyCell& cell(Basis b, Intensity k) const {
    return cells[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }

  double qber(Basis b, Intensity k) const {
    const auto& c = cell(b, k);
    return c.n_detected > 0 ? static_cast<double>(c.m_errors) / static_cast<double>(c.n_detected)
                            : 0.0;
  }
  std::int64_t detected(Basis b) const {
    return cell(b, Intensity::mu1).n_detected + cell(b, Intensity::mu2).n_detected;
  }
  std::int64_t errors(Basis b) const {
    return cell(b, Intensity::mu1).m_errors + cell(b, Intensity::mu2).m_errors;
  }
  double qber(Basis b) const {
    const auto n = detected(b);
    return n > 0 ? static_cast<double>(errors(b)) / static_cast<double>(n) : 0.0;
  }
  std::int64_t total_sent() const {
    std::int64_t n = 0;
    for (const auto& row : cells)
      for (const auto& c : row) n += c.n_sent;
    return n;
  }
  bool consistent() const {
    for (const auto& row : cells)
      for (const auto& c : row)
        if (c.m_errors < 0 || c.m_errors > c.n_detected || c.n_detected > c.n_matched ||
            c.n_matched > c.n_sent)
          return false;
    return true;
  }

  friend bool operator==(const Tally& a, const Tally& b) {
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const auto& x = a.cells[i][j];
        const auto& y = b.cells[i][j];
        if (x.n_sent != y.n_sent || x.n_matched != y.n_matched || x.n_detected != y.n_detected ||
            x.m_errors != y.m_errors || x.n_double != y.n_double ||
            x.n_vacuum_tagged != y.n_vacuum_tagged || x.n_single_tagged != y.n_single_tagged)
          return false;
      }
    return a.elapsed == b.elapsed;
  }
};

// Mean sin^2(delta/2) of the receiver interferometers used by each basis.
struct PhaseStatistics {
  double z = 0.0;
  double x = 0.0;
  double of(Basis b) const { return b == Basis::Z ? z : x; }
};

inline PhaseStatistics steady_state_phase_statistics(const LinkConfig& config) {
  const double p = steady_state_phase_error(config.pll, config.channel);
  return {p, p};
}

struct ClickProbabilities {
  double detection = 0.0;  // exactly one detector fired
  double error = 0.0;      // ... and it was a wrong one
};

// Single-click probabilities for a basis-matched pulse of mean photon number
// `mean_photons`. Photons reaching each detector are independent Poisson
// streams; uncorrelated noise adds at most one click per slot on a uniformly
// chosen detector; multi-click slots are discarded.
inline ClickProbabilities matched_clicks(double mean_photons, double eta, double phase_error,
                                         double switch_error, double leak, double p_noise,
                                         int detectors) {
  const double lambda = mean_photons * eta;
  const double p_none = std::exp(-lambda);
  const double per_detector_noise = p_noise / detectors;

  auto component = [&](double q_correct, double q_partner) {
    ClickProbabilities out;
    for (int j = 0; j < detectors; ++j) {
      double r = j == 0 ? q_correct : (j == 1 ? q_partner : 0.0);
      r = (1.0 - leak) * r + leak / detectors;
      const double only_j = -std::expm1(-lambda * r) * std::exp(-lambda * (1.0 - r));
      const double valid = only_j * (1.0 - p_noise + per_detector_noise) + p_none * per_detector_noise;
      out.detection += valid;
      if (j != 0) out.error += valid;
    }
    return out;
  };
  const auto straight = component(1.0 - phase_error, phase_error);
  const auto flipped = component(phase_error, 1.0 - phase_error);
  return {(1.0 - switch_error) * straight.detection + switch_error * flipped.detection,
          (1.0 - switch_error) * straight.error + switch_error * flipped.error};
}

struct ExpectedCell {
  double detection_probability = 0.0;  // per basis-matched pulse
  double qber = 0.0;
  double sifted_rate = 0.0;            // sifted detections per second
};

struct ExpectedRates {
  std::array<std::array<ExpectedCell, 2>, 2> cells{};
  double pulse_rate = 0.0;
  PhaseStatistics phase;

  const ExpectedCell& cell(Basis b, Intensity k) const {
    return cells[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  ExpectedCell& cell(Basis b, Intensity k) {
    return cells[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
  }
  double sifted_rate(Basis b) const {
    return cell(b, Intensity::mu1).sifted_rate + cell(b, Intensity::mu2).sifted_rate;
  }
  // Detection-weighted over both intensities.
  double qber(Basis b) const {
    const auto& a = cell(b, Intensity::mu1);
    const auto& c = cell(b, Intensity::mu2);
    const double n = a.sifted_rate + c.sifted_rate;
    return n > 0.0 ? (a.qber * a.sifted_rate + c.qber * c.sifted_rate) / n : 0.0;
  }
};

inline ExpectedRates expected_rates(const LinkConfig& config,
                                    std::optional<PhaseStatistics> phase = std::nullopt) {
  config.validate();
  ExpectedRates out;
  out.pulse_rate = config.source.rep_rate;
  out.phase = phase.value_or(steady_state_phase_statistics(config));
  const double eta = config.eta();
  const double leak = crosstalk_leak_probability(config.channel);
  const double p_noise = config.noise_probability_per_slot();
  const auto& src = config.source;
  for (Basis b : all_bases) {
    for (Intensity k : all_intensities) {
      const auto clicks = matched_clicks(src.mu(k), eta, out.phase.of(b),
                                         config.effective_switch_error(), leak, p_noise,
                                         config.dimension);
      auto& cell = out.cell(b, k);
      cell.detection_probability = clicks.detection;
      cell.qber = clicks.detection > 0.0 ? clicks.error / clicks.detection : 0.0;
      cell.sifted_rate = src.rep_rate * src.p_alice(b) * src.p_bob(b) * src.p(k) * clicks.detection;
    }
  }
  return out;
}

struct SessionOptions {
  bool record_telemetry = false;
  bool stabilize = true;  // false runs the fiber open loop
};

struct SessionResult {
  Tally tally;
  PhaseStatistics phase;  // realized over the session
  std::vector<PllTelemetry> telemetry;
  std::int64_t pulses = 0;
};

namespace detail {

// Per (basis, state, switch flip) cumulative destination distribution of a
// detected photon over the active detectors.
struct DestinationTable {
  std::array<std::array<std::array<std::array<double, 4>, 2>, 4>, 2> cdf{};

  void rebuild(const PhaseError& err, double leak, int detectors) {
    for (Basis b : all_bases) {
      for (int i = 0; i < detectors; ++i) {
        const auto q = detection_distribution(state_vector(b, i), b, err);
        for (int flip = 0; flip < 2; ++flip) {
          double acc = 0.0;
          auto& row = cdf[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]
                         [static_cast<std::size_t>(flip)];
          for (int j = 0; j < detectors; ++j) {
            const int src = flip ? (j ^ 1) : j;
            acc += (1.0 - leak) * q[static_cast<std::size_t>(src)] + leak / detectors;
            row[static_cast<std::size_t>(j)] = acc;
          }
          row[static_cast<std::size_t>(detectors - 1)] = 1.0;
        }
      }
    }
  }

  int sample(Basis b, int state, bool flip, int detectors, double u) const {
    const auto& row = cdf[static_cast<std::size_t>(b)][static_cast<std::size_t>(state)]
                         [flip ? 1u : 0u];
    for (int j = 0; j < detectors - 1; ++j)
      if (u < row[static_cast<std::size_t>(j)]) return j;
    return detectors - 1;
  }
};

inline std::uint64_t threshold21(double p) {
  return static_cast<std::uint64_t>(std::llround(p * static_cast<double>(1u << 21)));
}

inline std::int64_t geometric_gap(Rng& rng, double p) {
  if (p <= 0.0) return std::numeric_limits<std::int64_t>::max() / 4;
  if (p >= 1.0) return 1;
  const double u = 1.0 - uniform01(rng);  // (0, 1]
  return 1 + static_cast<std::int64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace detail

// Pulse-by-pulse session. Random choices: Alice's basis, the intensity and
// Bob's basis come from disjoint 21-bit fields of one 64-bit draw; the state
// index within the basis is taken from the PRBS that drives the switch and
// phase modulators. The stabilization loop advances every update interval.
inline SessionResult run_session_pulses(const LinkConfig& config, std::int64_t pulses,
                                        std::uint64_t seed, SessionOptions options = {}) {
  config.validate();
  if (pulses <= 0) throw std::invalid_argument("run_session: pulse budget must be > 0");

  const auto& src = config.source;
  const int detectors = config.dimension;
  const int state_bits = detectors == 4 ? 2 : 1;
  const double eta = config.eta();
  const double leak = crosstalk_leak_probability(config.channel);
  const double p_noise = config.noise_probability_per_slot();
  const double switch_error = config.effective_switch_error();

  Rng choices = substream(seed, 1);
  Rng photons = substream(seed, 2);
  Rng noise = substream(seed, 3);
  Prbs prbs(src.prbs_order, 1 + seed % ((1ull << src.prbs_order) - 1));
  StabilizationLoop loop(config.channel, config.pll, seed, options.stabilize);

  const std::array<PoissonTable, 2> photon_number{PoissonTable(src.mu1), PoissonTable(src.mu2)};
  const std::uint64_t thr_alice = detail::threshold21(src.p_z_alice);
  const std::uint64_t thr_mu1 = detail::threshold21(src.p_mu1);
  const std::uint64_t thr_bob = detail::threshold21(src.p_z_bob);
  constexpr std::uint64_t field = (1u << 21) - 1;

  const auto slots_per_update = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(config.pll.update_interval * src.rep_rate)));

  SessionResult result;
  result.pulses = pulses;
  Tally& tally = result.tally;
  detail::DestinationTable table;
  double phase_weight_z = 0.0, phase_weight_x = 0.0;

  std::int64_t next_noise = detail::geometric_gap(noise, p_noise) - 1;
  std::int64_t slot = 0;
  while (slot < pulses) {
    const std::int64_t chunk_end = std::min(pulses, slot + slots_per_update);
    const PhaseError err = loop.phase_error();
    table.rebuild(err, leak, detectors);
    {
      const double w = static_cast<double>(chunk_end - slot);
      const int pairs_used = detectors == 4 ? 2 : 1;
      for (Basis b : all_bases) {
        double s = 0.0;
        for (int p = 0; p < pairs_used; ++p) {
          const double h = std::sin(err.pair(b, static_cast<std::size_t>(p)) / 2.0);
          s += h * h;
        }
        (b == Basis::Z ? phase_weight_z : phase_weight_x) += w * s / pairs_used;
      }
    }

    for (; slot < chunk_end; ++slot) {
      const std::uint64_t r = choices();
      const Basis alice = (r & field) < thr_alice ? Basis::Z : Basis::X;
      const Intensity k = ((r >> 21) & field) < thr_mu1 ? Intensity::mu1 : Intensity::mu2;
      const Basis bob = ((r >> 42) & field) < thr_bob ? Basis::Z : Basis::X;
      const int state = static_cast<int>(prbs.next_bits(state_bits));

      int noise_detector = -1;
      if (slot == next_noise) {
        noise_detector = static_cast<int>(noise() % static_cast<std::uint64_t>(detectors));
        next_noise += detail::geometric_gap(noise, p_noise);
      }

      TallyCell& cell = tally.cell(alice, k);
      ++cell.n_sent;
      if (alice != bob) continue;
      ++cell.n_matched;

      const int emitted = photon_number[static_cast<std::size_t>(k)].sample(uniform01(photons));
      unsigned clicks = 0;
      if (emitted > 0) {
        const bool flip = switch_error > 0.0 && uniform01(photons) < switch_error;
        for (int n = 0; n < emitted; ++n) {
          const double u = uniform01(photons);
          if (u < eta) clicks |= 1u << table.sample(alice, state, flip, detectors, u / eta);
        }
      }
      if (noise_detector >= 0) clicks |= 1u << noise_detector;
      if (clicks == 0) continue;
      if (std::popcount(clicks) > 1) {
        ++cell.n_double;
        continue;
      }
      const int outcome = std::countr_zero(clicks);
      ++cell.n_detected;
      if (outcome != state) ++cell.m_errors;
      if (emitted == 0) ++cell.n_vacuum_tagged;
      if (emitted == 1) ++cell.n_single_tagged;
    }

    if (chunk_end % slots_per_update == 0)
      loop.step(options.record_telemetry ? &result.telemetry : nullptr);
  }

  tally.elapsed = static_cast<double>(pulses) / src.rep_rate;
  result.phase = {phase_weight_z / static_cast<double>(pulses),
                  phase_weight_x / static_cast<double>(pulses)};
  return result;
}

inline SessionResult run_session(const LinkConfig& config, double duration, std::uint64_t seed,
                                 SessionOptions options = {}) {
  if (!(duration > 0.0)) throw std::invalid_argument("run_session: duration must be > 0");
  const auto pulses = static_cast<std::int64_t>(std::llround(duration * config.source.rep_rate));
  return run_session_pulses(config, std::max<std::int64_t>(pulses, 1), seed, options);
}

struct StabilityOptions {
  double window = 1.0;      // s
  double nu = 0.24;         // photons/pulse during the trace
  Basis basis = Basis::X;   // the trace runs with both parties fixed to one basis
};

struct StabilityWindow {
  double t_start = 0.0;
  double qber = 0.0;
  double phase_contribution = 0.0;
  double switch_contribution = 0.0;
  double locked_fraction = 1.0;
  std::int64_t lock_losses = 0;
};

struct StabilityTrace {
  std::vector<StabilityWindow> windows;
  double mean_qber = 0.0;
  double mean_phase_contribution = 0.0;
  double mean_switch_contribution = 0.0;
  std::int64_t lock_losses = 0;
  std::int64_t disturbances = 0;
  std::vector<double> recovery_times;
  bool all_recovered = true;
};

// Long free-running acquisition in one basis configuration. Each window
// reports the realized phase contribution of the two receiver pairs, the
// switch contribution and the total QBER including detector noise, with the
// binomial scatter of the window's detection count.
inline StabilityTrace stability_trace(double duration, const LinkConfig& config,
                                      std::uint64_t seed, StabilityOptions options = {},
                                      std::vector<PllTelemetry>* telemetry = nullptr) {
  config.validate();
  if (!(duration >= 60.0)) throw std::invalid_argument("stability_trace: duration must be >= 60 s");
  if (!(options.window > 0.0)) throw std::invalid_argument("stability_trace: window must be > 0");
  if (!(options.nu > 0.0)) throw std::invalid_argument("stability_trace: nu must be > 0");

  StabilityTrace trace;
  StabilizationLoop loop(config.channel, config.pll, seed);
  Rng sampling = substream(seed, 4);

  const double dt = config.pll.update_interval;
  const auto steps_per_window = std::max<std::int64_t>(1, std::llround(options.window / dt));
  const auto windows = static_cast<std::int64_t>(std::floor(duration / options.window + 1e-9));
  const double eta = config.eta();
  const double leak = crosstalk_leak_probability(config.channel);
  const double p_noise = config.noise_probability_per_slot();
  const double switch_error = config.effective_switch_error();
  const int pairs_used = config.dimension == 4 ? 2 : 1;

  std::int64_t losses_before = 0;
  for (std::int64_t w = 0; w < windows; ++w) {
    StabilityWindow win;
    win.t_start = static_cast<double>(w) * options.window;
    double phase_sum = 0.0;
    std::int64_t locked_samples = 0, samples = 0;
    for (std::int64_t s = 0; s < steps_per_window; ++s) {
      for (int p = 0; p < pairs_used; ++p) {
        const double h = std::sin(loop.residual(options.basis, p) / 2.0);
        phase_sum += h * h;
        locked_samples += loop.controller(options.basis, p).locked ? 1 : 0;
        ++samples;
      }
      loop.step(telemetry);
    }
    win.phase_contribution = phase_sum / static_cast<double>(samples);
    win.switch_contribution = switch_error;
    win.locked_fraction = static_cast<double>(locked_samples) / static_cast<double>(samples);
    const std::int64_t losses_now = loop.lock_losses();
    win.lock_losses = losses_now - losses_before;
    losses_before = losses_now;

    const auto clicks = matched_clicks(options.nu, eta, win.phase_contribution, switch_error, leak,
                                       p_noise, config.dimension);
    const double expected_qber = clicks.error / clicks.detection;
    const double n = clicks.detection * config.source.rep_rate * options.window;
    const double sd = std::sqrt(expected_qber * (1.0 - expected_qber) / n);
    win.qber = std::clamp(gaussian(sampling, expected_qber, sd), 0.0, 1.0);
    trace.windows.push_back(win);
  }

  double q = 0.0, ph = 0.0, sw = 0.0;
  for (const auto& win : trace.windows) {
    q += win.qber;
    ph += win.phase_contribution;
    sw += win.switch_contribution;
  }
  const auto count = static_cast<double>(trace.windows.size());
  trace.mean_qber = q / count;
  trace.mean_phase_contribution = ph / count;
  trace.mean_switch_contribution = sw / count;
  trace.lock_losses = loop.lock_losses();
  trace.disturbances = loop.disturbances();
  trace.recovery_times = loop.recovery_times();
  for (double t : trace.recovery_times)
    if (t > config.pll.reacquire_timeout) trace.all_recovered = false;
  if (loop.any_overdue()) trace.all_recovered = false;
  return trace;
}

}  // namespace mcfqkd
