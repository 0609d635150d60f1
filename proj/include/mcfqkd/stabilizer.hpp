// stabilizer.hpp
// Phase-locked loop that keeps each receiver interferometer pair at its
// operating point using fringe counts of a co-propagating reference signal.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "channel.hpp"
#include "random.hpp"
#include "states.hpp"

namespace mcfqkd {

struct PllConfig {
  double max_fringe_rate = 1.8e5;  // counts/s at constructive interference, before dead time
  double background_rate = 0.0;    // counts/s
  double update_interval = 0.01;   // s
  double gain = 0.3;
  double setpoint = 0.5;            // normalized fringe level to lock on
  double lock_threshold = 0.4;      // |normalized error| that declares loss of lock
  double detector_efficiency = 0.15;
  double dead_time = 5e-6;          // s, non-paralyzable
  bool shot_noise = true;
  double scan_step = 0.2;           // rad per update while reacquiring
  double reacquire_timeout = 2.0;   // s
  double disturbance_rate = 2.0 / 3600.0;  // phase-jump events per second
  double disturbance_jump = std::numbers::pi;
  // Static phase offset between the reference lock point and the quantum
  // channel (modulator drive and lock-point calibration error).
  double static_phase_error = 0.31;

  void validate() const {
    if (!(max_fringe_rate >= 0.0) || !(background_rate >= 0.0))
      throw std::invalid_argument("pll rates must be >= 0");
    if (!(update_interval > 0.0)) throw std::invalid_argument("pll update_interval must be > 0");
    if (!(gain > 0.0)) throw std::invalid_argument("pll gain must be > 0");
    if (!(setpoint > 0.0 && setpoint < 1.0))
      throw std::invalid_argument("pll setpoint must be strictly inside (0, 1)");
    if (!(lock_threshold > 0.0)) throw std::invalid_argument("pll lock_threshold must be > 0");
    if (!(dead_time >= 0.0)) throw std::invalid_argument("pll dead_time must be >= 0");
    if (!(disturbance_rate >= 0.0)) throw std::invalid_argument("pll disturbance_rate must be >= 0");
    if (!(scan_step > 0.0)) throw std::invalid_argument("pll scan_step must be > 0");
  }

  // Reference phase at which the fringe sits at the setpoint, on the falling
  // slope.
  double setpoint_phase() const { return 2.0 * std::acos(std::sqrt(setpoint)); }
};

struct PllState {
  double actuator_phase = 0.0;
  bool locked = true;
  double last_error = 0.0;
  std::int64_t lock_loss_count = 0;
  double scan_previous_error = 0.0;
};

// Observed reference count rate; r/(1 + r*dead_time) is the non-paralyzable
// dead-time correction.
inline double fringe_rate(double pair_phase, const PllConfig& config) {
  const double c = std::cos(pair_phase / 2.0);
  const double incident = config.max_fringe_rate * c * c + config.background_rate;
  return incident / (1.0 + incident * config.dead_time);
}

// d(observed rate)/d(phase), used for the feedback sign and loop gain.
inline double fringe_slope(double pair_phase, const PllConfig& config) {
  const double c = std::cos(pair_phase / 2.0);
  const double incident = config.max_fringe_rate * c * c + config.background_rate;
  const double d_incident = -0.5 * config.max_fringe_rate * std::sin(pair_phase);
  const double denom = 1.0 + incident * config.dead_time;
  return d_incident / (denom * denom);
}

inline double expected_setpoint_counts(const PllConfig& config) {
  return fringe_rate(config.setpoint_phase(), config) * config.update_interval;
}

// One controller update from the counts of the last interval. While locked
// the actuator moves against the normalized error; once the error leaves the
// lock window the loop scans the actuator upward until the counts cross the
// setpoint on the correct slope.
inline PllState pll_step(const PllState& state, std::int64_t observed_counts,
                         const PllConfig& config) {
  if (observed_counts < 0) throw std::invalid_argument("pll_step: observed_counts must be >= 0");
  const double expected = expected_setpoint_counts(config);
  const double error =
      expected > 0.0 ? (static_cast<double>(observed_counts) - expected) / expected : 0.0;
  const double slope_sign = fringe_slope(config.setpoint_phase(), config) < 0.0 ? -1.0 : 1.0;

  PllState next = state;
  next.last_error = error;
  if (state.locked) {
    if (std::abs(error) > config.lock_threshold) {
      next.locked = false;
      ++next.lock_loss_count;
      next.actuator_phase += config.scan_step;
      next.scan_previous_error = error;
    } else {
      next.actuator_phase -= config.gain * error * slope_sign;
    }
    return next;
  }

  // Scanning upward in phase: on a falling slope the error goes from
  // positive to non-positive when the setpoint is crossed.
  const bool crossed = slope_sign < 0.0 ? (state.scan_previous_error > 0.0 && error <= 0.0)
                                        : (state.scan_previous_error < 0.0 && error >= 0.0);
  if (crossed && std::abs(error) <= config.lock_threshold) {
    next.locked = true;
    next.actuator_phase -= config.gain * error * slope_sign;
  } else {
    next.actuator_phase += config.scan_step;
  }
  next.scan_previous_error = error;
  return next;
}

inline double residual_qber_contribution(std::span<const double> residual_phase_trace) {
  if (residual_phase_trace.empty())
    throw std::invalid_argument("residual_qber_contribution: empty trace");
  double sum = 0.0;
  for (double d : residual_phase_trace) {
    const double s = std::sin(d / 2.0);
    sum += s * s;
  }
  return sum / static_cast<double>(residual_phase_trace.size());
}

// Linearized closed loop: x' = (1 - g*k)(x + w) - g*eps with k the relative
// fringe slope, eps the shot noise of the normalized error and w the pair
// drift over one interval. Returns the time-averaged residual variance: the
// post-update variance plus the mean drift accumulated inside an interval.
inline double closed_loop_residual_variance(const PllConfig& pll, double pair_drift_rate) {
  const double theta = pll.setpoint_phase();
  const double rate = fringe_rate(theta, pll);
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  const double k = std::abs(fringe_slope(theta, pll)) / rate;
  const double counts = rate * pll.update_interval;
  const double eps_var = pll.shot_noise ? 1.0 / counts : 0.0;
  const double drift_var = pair_drift_rate * pll.update_interval;
  const double a = 1.0 - pll.gain * k;
  const double denom = 1.0 - a * a;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  const double sampled = (a * a * drift_var + pll.gain * pll.gain * eps_var) / denom;
  return sampled + 0.5 * drift_var;
}

// Mean sin^2(delta/2) for a Gaussian residual around the static offset.
inline double steady_state_phase_error(const PllConfig& pll, const ChannelConfig& channel) {
  const double var = closed_loop_residual_variance(pll, 2.0 * channel.drift_rate);
  if (!std::isfinite(var)) return 0.5;
  return 0.5 * (1.0 - std::cos(pll.static_phase_error) * std::exp(-0.5 * var));
}

struct PllTelemetry {
  double time;
  Basis basis;
  int pair;
  double residual;
  bool locked;
  std::int64_t counts;
};

// Co-simulates the fiber phase drift, injected disturbances and the four pair
// controllers (two per basis configuration).
class StabilizationLoop {
public:
  StabilizationLoop(const ChannelConfig& channel, const PllConfig& pll, std::uint64_t seed,
                    bool closed_loop = true)
      : channel_(channel), pll_(pll), rng_(substream(seed, 0x5717)), closed_loop_(closed_loop) {
    pll_.validate();
  }

  // Advances one update interval.
  void step(std::vector<PllTelemetry>* telemetry = nullptr) {
    const double dt = pll_.update_interval;
    state_ = advance(state_, dt, channel_.drift_rate, rng_);
    if (pll_.disturbance_rate > 0.0 &&
        uniform01(rng_) < -std::expm1(-pll_.disturbance_rate * dt)) {
      const auto core = static_cast<std::size_t>(rng_() % 4);
      const double sign = uniform01(rng_) < 0.5 ? -1.0 : 1.0;
      state_.phases[core] += sign * pll_.disturbance_jump;
      ++disturbances_;
    }
    const double theta_set = pll_.setpoint_phase();
    for (Basis b : {Basis::Z, Basis::X}) {
      for (int p = 0; p < 2; ++p) {
        PllState& ctl = controller(b, p);
        const double theta = reference_phase(b, p) + theta_set;
        const double mean = fringe_rate(theta, pll_) * dt;
        const std::int64_t counts =
            pll_.shot_noise ? poisson_count(rng_, mean) : static_cast<std::int64_t>(std::llround(mean));
        if (closed_loop_) {
          const bool was_locked = ctl.locked;
          ctl = pll_step(ctl, counts, pll_);
          if (was_locked && !ctl.locked) unlock_time(b, p) = state_.time;
          if (!was_locked && ctl.locked)
            recovery_times_.push_back(state_.time - unlock_time(b, p));
        }
        if (telemetry)
          telemetry->push_back({state_.time, b, p, residual(b, p), ctl.locked, counts});
      }
    }
  }

  // Quantum-channel residual of a pair: zero when perfectly compensated.
  double residual(Basis b, int p) const {
    return wrap_phase(reference_phase(b, p) + pll_.static_phase_error);
  }

  PhaseError phase_error() const {
    return PhaseError(residual(Basis::Z, 0), residual(Basis::Z, 1), residual(Basis::X, 0),
                      residual(Basis::X, 1));
  }

  // Controllers still unlocked for longer than the timeout.
  bool any_overdue() const {
    for (Basis b : {Basis::Z, Basis::X})
      for (int p = 0; p < 2; ++p)
        if (!controller(b, p).locked &&
            state_.time - unlock_time(b, p) > pll_.reacquire_timeout)
          return true;
    return false;
  }

  bool all_locked() const {
    for (const auto& c : controllers_)
      if (!c.locked) return false;
    return true;
  }

  // Applies a phase jump on one core (used by tests and scripted scenarios).
  void inject_jump(CoreIndex core, double jump) { state_.phases[core.slot()] += jump; }

  PllState& controller(Basis b, int p) { return controllers_.at(index(b, p)); }
  const PllState& controller(Basis b, int p) const { return controllers_.at(index(b, p)); }
  const ChannelState& channel_state() const { return state_; }
  double time() const { return state_.time; }
  std::int64_t disturbances() const { return disturbances_; }
  const std::vector<double>& recovery_times() const { return recovery_times_; }
  std::int64_t lock_losses() const {
    std::int64_t n = 0;
    for (const auto& c : controllers_) n += c.lock_loss_count;
    return n;
  }
  const PllConfig& config() const { return pll_; }

private:
  static std::size_t index(Basis b, int p) {
    return (b == Basis::Z ? 0u : 2u) + static_cast<std::size_t>(p);
  }
  double& unlock_time(Basis b, int p) { return unlock_times_.at(index(b, p)); }
  double unlock_time(Basis b, int p) const { return unlock_times_.at(index(b, p)); }

  // Pair phase seen by the reference minus the lock operating point.
  double reference_phase(Basis b, int p) const {
    const CorePair& pair = pairs_of(b)[static_cast<std::size_t>(p)];
    return state_.pair_phase(pair) + controller(b, p).actuator_phase;
  }

  ChannelConfig channel_;
  PllConfig pll_;
  Rng rng_;
  bool closed_loop_;
  ChannelState state_{};
  std::array<PllState, 4> controllers_{};
  std::array<double, 4> unlock_times_{};
  std::vector<double> recovery_times_;
  std::int64_t disturbances_ = 0;
};

}  // namespace mcfqkd
