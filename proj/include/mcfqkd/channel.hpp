// channel.hpp
// Seven-core fiber link: loss budget, inter-core cross-talk, per-core random
// phase drift and the polarization-selective phase modulation loop.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "random.hpp"
#include "states.hpp"

namespace mcfqkd {

struct ChannelConfig {
  double core_loss_db = 5.8;          // includes fan-in/fan-out
  double crosstalk_db = -46.0;        // -inf disables
  double extra_attenuation_db = 0.0;  // variable attenuator
  double drift_rate = 0.05;           // rad^2/s per core
  double receiver_loss_db = 2.4;

  void validate() const {
    if (!(core_loss_db >= 0.0) || !(extra_attenuation_db >= 0.0) || !(receiver_loss_db >= 0.0))
      throw std::invalid_argument("channel losses must be >= 0 dB");
    if (!(crosstalk_db <= -40.0))
      throw std::invalid_argument("channel crosstalk_db must be <= -40 dB");
    if (!(drift_rate >= 0.0) || !std::isfinite(drift_rate))
      throw std::invalid_argument("channel drift_rate must be finite and >= 0");
  }

  double total_loss_db() const { return core_loss_db + extra_attenuation_db + receiver_loss_db; }
};

struct ChannelState {
  std::array<double, 4> phases{};  // by core slot, unwrapped
  double time = 0.0;

  double phase(CoreIndex c) const { return wrap_phase(phases[c.slot()]); }

  // Phase of the second core relative to the first.
  double pair_phase(const CorePair& p) const {
    return phases[p.second.slot()] - phases[p.first.slot()];
  }
};

enum class PolarizationMode { aligned, orthogonal };

inline const char* to_string(PolarizationMode m) {
  return m == PolarizationMode::aligned ? "aligned" : "orthogonal";
}

// Independent Wiener increment of variance drift_rate*dt on every core.
inline ChannelState advance(const ChannelState& state, double dt, double drift_rate, Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("advance: dt must be > 0");
  ChannelState next = state;
  next.time += dt;
  if (drift_rate > 0.0) {
    const double sd = std::sqrt(drift_rate * dt);
    for (auto& phi : next.phases) phi += gaussian(rng, 0.0, sd);
  }
  return next;
}

inline double db_to_transmittance(double loss_db) { return std::pow(10.0, -loss_db / 10.0); }

inline double transmittance(const ChannelConfig& config) {
  return db_to_transmittance(config.total_loss_db());
}

// The modulator only acts on light polarized along its slow axis; light on
// the orthogonal axis sees a residual fraction `extinction` of the drive.
inline double pml_phase(double command_phase, PolarizationMode pol, double extinction = 0.02) {
  if (!(extinction >= 0.0 && extinction <= 1.0))
    throw std::invalid_argument("pml_phase: extinction must be in [0, 1]");
  return pol == PolarizationMode::aligned ? command_phase : extinction * command_phase;
}

// Probability that a transmitted photon shows up in a non-addressed core.
inline double crosstalk_leak_probability(const ChannelConfig& config) {
  if (std::isinf(config.crosstalk_db) && config.crosstalk_db < 0) return 0.0;
  return std::pow(10.0, config.crosstalk_db / 10.0);
}

}  // namespace mcfqkd
