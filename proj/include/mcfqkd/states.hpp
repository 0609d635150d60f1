// states.hpp
// Path-encoded ququart states over four cores of a multicore fiber and the
// interferometric measurement that reads them out.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mcfqkd {

using complex = std::complex<double>;

enum class Basis { Z, X };

inline const char* to_string(Basis b) { return b == Basis::Z ? "Z" : "X"; }

inline Basis other(Basis b) { return b == Basis::Z ? Basis::X : Basis::Z; }

// Only the four low-loss, low-crosstalk cores of the seven-core fiber carry
// signal. Internally each core is addressed by a slot 0..3 in label order.
class CoreIndex {
public:
  static constexpr std::array<int, 4> labels{1, 2, 5, 7};

  constexpr explicit CoreIndex(int label) : slot_(slot_of(label)) {}

  static constexpr CoreIndex from_slot(std::size_t slot) {
    return CoreIndex(labels.at(slot));
  }

  constexpr int label() const { return labels[slot_]; }
  constexpr std::size_t slot() const { return slot_; }

  friend constexpr bool operator==(CoreIndex, CoreIndex) = default;

private:
  static constexpr std::size_t slot_of(int label) {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return i;
    throw std::invalid_argument("core label must be one of 1, 2, 5, 7");
  }

  std::size_t slot_;
};

// Two cores combined on one beam splitter at the receiver. The residual
// phase of a pair is applied to the second core before interference.
struct CorePair {
  CoreIndex first;
  CoreIndex second;
};

// Pairs follow the row order of the two bases: rows 0/1 share pair 0 and
// rows 2/3 share pair 1.
inline constexpr std::array<CorePair, 2> z_pairs{
    CorePair{CoreIndex(1), CoreIndex(5)}, CorePair{CoreIndex(7), CoreIndex(2)}};
inline constexpr std::array<CorePair, 2> x_pairs{
    CorePair{CoreIndex(1), CoreIndex(7)}, CorePair{CoreIndex(5), CoreIndex(2)}};

inline constexpr const std::array<CorePair, 2>& pairs_of(Basis b) {
  return b == Basis::Z ? z_pairs : x_pairs;
}

inline double wrap_phase(double phi) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(phi, two_pi);  // [-pi, pi]
  if (w <= -std::numbers::pi) w += two_pi;
  return w;
}

struct QuditState {
  Basis basis = Basis::Z;
  int index = 0;
  std::array<complex, 4> amplitudes{};  // by core slot

  complex amplitude(CoreIndex c) const { return amplitudes[c.slot()]; }
};

// Residual interferometer phase for each of the four receiver pairs, wrapped
// to (-pi, pi].
class PhaseError {
public:
  PhaseError() = default;
  PhaseError(double z0, double z1, double x0, double x1)
      : z_{wrap_phase(z0), wrap_phase(z1)}, x_{wrap_phase(x0), wrap_phase(x1)} {}

  static PhaseError uniform(double delta) {
    return PhaseError(delta, delta, delta, delta);
  }

  double pair(Basis b, std::size_t p) const {
    return b == Basis::Z ? z_.at(p) : x_.at(p);
  }
  void set_pair(Basis b, std::size_t p, double delta) {
    (b == Basis::Z ? z_ : x_).at(p) = wrap_phase(delta);
  }

private:
  std::array<double, 2> z_{};
  std::array<double, 2> x_{};
};

// Returns row `index` of the requested basis with the amplitude on the
// lowest populated core label made real and positive.
inline QuditState state_vector(Basis basis, int index) {
  if (index < 0 || index > 3)
    throw std::invalid_argument("state index must be in 0..3, got " +
                                std::to_string(index));
  const CorePair& pair = pairs_of(basis)[static_cast<std::size_t>(index / 2)];
  const double a = 1.0 / std::numbers::sqrt2;
  const double sign = (index % 2 == 0) ? 1.0 : -1.0;

  QuditState s;
  s.basis = basis;
  s.index = index;
  s.amplitudes[pair.first.slot()] = a;
  s.amplitudes[pair.second.slot()] = sign * a;

  const CoreIndex lowest =
      pair.first.label() < pair.second.label() ? pair.first : pair.second;
  if (s.amplitudes[lowest.slot()].real() < 0.0)
    for (auto& amp : s.amplitudes) amp = -amp;
  return s;
}

// <a|b>
inline complex overlap(const QuditState& a, const QuditState& b) {
  complex sum{};
  for (std::size_t i = 0; i < 4; ++i) sum += std::conj(a.amplitudes[i]) * b.amplitudes[i];
  return sum;
}

// Outcome probabilities of the receiver configured for `measured`. Outcome
// 2p is the constructive port of pair p and 2p+1 the destructive port, so a
// perfectly transmitted row i lands on outcome i.
inline std::array<double, 4> detection_distribution(const QuditState& state,
                                                    Basis measured,
                                                    const PhaseError& err) {
  std::array<double, 4> probs{};
  const auto& pairs = pairs_of(measured);
  for (std::size_t p = 0; p < 2; ++p) {
    const complex in0 = state.amplitude(pairs[p].first);
    const complex in1 = state.amplitude(pairs[p].second) *
                        std::polar(1.0, err.pair(measured, p));
    const complex plus = (in0 + in1) / std::numbers::sqrt2;
    const complex minus = (in0 - in1) / std::numbers::sqrt2;
    probs[2 * p] = std::norm(plus);
    probs[2 * p + 1] = std::norm(minus);
  }
  return probs;
}

}  // namespace mcfqkd
