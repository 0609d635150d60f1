#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mcfqkd/keyrate.hpp"
#include "mcfqkd/reference_points.hpp"

using namespace mcfqkd;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// Direct Poisson-mixture sum, independent of the lgamma path.
double tau_oracle(int n, double m1, double m2, double p1) {
  return p1 * std::exp(-m1) * std::pow(m1, n) / factorial(n) +
         (1.0 - p1) * std::exp(-m2) * std::pow(m2, n) / factorial(n);
}

DecoyBounds bounds_with(double d0, double d1, double phi) {
  DecoyBounds b;
  b.d0_z = d0;
  b.d1_z = d1;
  b.phi_z = phi;
  return b;
}

}  // namespace

TEST(KeyRate, TauVacuumWeight) {
  const double t0 = tau_n(0, 0.19, 0.15, 0.62);
  EXPECT_NEAR(t0, 0.62 * std::exp(-0.19) + 0.38 * std::exp(-0.15), 1e-15);
  EXPECT_NEAR(t0, 0.8398, 1e-4);
}

TEST(KeyRate, TauMatchesDirectSum) {
  for (int n = 0; n < 12; ++n)
    EXPECT_NEAR(tau_n(n, 0.4, 0.1, 0.7), tau_oracle(n, 0.4, 0.1, 0.7), 1e-15);
  EXPECT_THROW(tau_n(-1, 0.2, 0.1, 0.5), std::invalid_argument);
}

TEST(KeyRate, TauVacuumSource) {
  EXPECT_DOUBLE_EQ(tau_n(0, 0.0, 0.0, 1.0), 1.0);
  for (int n = 1; n < 5; ++n) EXPECT_DOUBLE_EQ(tau_n(n, 0.0, 0.0, 1.0), 0.0);
}

TEST(KeyRate, TauNormalization) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mu(0.01, 0.9), p(0.01, 0.99);
  for (int trial = 0; trial < 200; ++trial) {
    const double m1 = mu(rng), m2 = mu(rng), p1 = p(rng);
    double sum = 0.0;
    for (int n = 0; n <= 50; ++n) sum += tau_n(n, m1, m2, p1);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(KeyRate, EntropyValues) {
  EXPECT_EQ(entropy_hd(0.0, 4), 0.0);
  EXPECT_EQ(entropy_hd(0.75, 4), 2.0);
  EXPECT_EQ(entropy_hd(0.5, 2), 1.0);
  EXPECT_NEAR(entropy_hd(0.11, 2), -0.11 * std::log2(0.11) - 0.89 * std::log2(0.89), 1e-15);
  EXPECT_THROW(entropy_hd(0.8, 4), std::invalid_argument);
  EXPECT_THROW(entropy_hd(-0.1, 4), std::invalid_argument);
  EXPECT_THROW(entropy_hd(0.6, 2), std::invalid_argument);
}

TEST(KeyRate, EntropyIsConcave) {
  for (int d : {2, 4}) {
    const double hi = 1.0 - 1.0 / d;
    const int n = 400;
    const double h = hi / n;
    for (int i = 1; i < n; ++i) {
      const double x = i * h;
      const double second = entropy_hd(x - h, d) - 2.0 * entropy_hd(x, d) + entropy_hd(x + h, d);
      EXPECT_LT(second, 0.0) << "d=" << d << " x=" << x;
    }
  }
}

TEST(KeyRate, HoeffdingDeviation) {
  EXPECT_NEAR(hoeffding_deviation(1e9, 1e-15), std::sqrt(5e8 * std::log(1.9e16)), 1e-6);
  EXPECT_NEAR(hoeffding_deviation(1e9, 1e-15), 1.37e5, 0.005e5);
}

TEST(KeyRate, FiniteSizeCounts) {
  const auto a = finite_size_counts(1000.0, 0.2, 0.5, 1e6, 1e-15, true);
  EXPECT_NEAR(a.lower, std::exp(0.2) / 0.5 * 1000.0, 1e-9);
  EXPECT_NEAR(a.upper, a.lower, 1e-9);
  const auto z = finite_size_counts(0.0, 0.2, 0.5, 1e6, 1e-15);
  EXPECT_EQ(z.lower, 0.0);
  EXPECT_GT(z.upper, 0.0);
  EXPECT_THROW(finite_size_counts(-1.0, 0.2, 0.5, 1e6, 1e-15), std::invalid_argument);
}

TEST(KeyRate, EpsilonPenalty) {
  const SecurityParams p;
  EXPECT_NEAR(epsilon_penalty(p), 6.0 * std::log2(19e15) + std::log2(2e15), 1e-9);
  // 30-digit evaluation of 6 log2(1.9e16) + log2(2e15).
  EXPECT_NEAR(epsilon_penalty(p), 375.290015043834559, 1e-9);
}

TEST(KeyRate, MaximalPhaseErrorKillsKey) {
  const SecurityParams p;
  const auto r = secret_key_length(bounds_with(0.0, 5e8, 0.75), 0.0, p, 1e9, 100.0);
  EXPECT_LE(r.ell_unclamped, 0.0);
  EXPECT_EQ(r.ell, 0.0);
  EXPECT_EQ(r.r_sk, 0.0);
}

TEST(KeyRate, LengthFormula) {
  const SecurityParams p;
  const double q = 0.04, phi = 0.1, d0 = 1e6, d1 = 6e8;
  const auto r = secret_key_length(bounds_with(d0, d1, phi), q, p, 1e9, 90.0);
  const double hq = -q * std::log2(q / 3.0) - (1 - q) * std::log2(1 - q);
  const double hphi = -phi * std::log2(phi / 3.0) - (1 - phi) * std::log2(1 - phi);
  const double expected = 2.0 * d0 + d1 * (2.0 - hphi) - 1.15 * 1e9 * hq - 375.290015043834559;
  EXPECT_NEAR(r.ell, expected, 0.1);
  EXPECT_NEAR(r.r_sk, r.ell / 90.0, 1e-6);
  EXPECT_THROW(secret_key_length(bounds_with(d0, d1, phi), 0.8, p, 1e9, 90.0),
               std::invalid_argument);
}

TEST(KeyRate, LengthMonotonicity) {
  const SecurityParams p;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 30; ++i) {
    const double ell = secret_key_length(bounds_with(0, 6e8, 0.1), 0.005 * i, p, 1e9, 1).ell;
    EXPECT_LE(ell, prev);
    prev = ell;
  }
  prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 30; ++i) {
    const double ell = secret_key_length(bounds_with(0, 6e8, 0.025 * i), 0.04, p, 1e9, 1).ell;
    EXPECT_LE(ell, prev);
    prev = ell;
  }
  prev = -1.0;
  for (int i = 0; i <= 30; ++i) {
    const double ell = secret_key_length(bounds_with(0, 3e7 * i, 0.1), 0.04, p, 1e9, 1).ell;
    EXPECT_GE(ell, prev);
    prev = ell;
  }
}

TEST(KeyRate, DecoyBoundsRejectInvertedIntensities) {
  SourceConfig s;
  s.mu2 = 0.3;
  DecoyStatistics st;
  EXPECT_THROW(decoy_bounds(st, SecurityParams{}, s), std::invalid_argument);
}

TEST(KeyRate, NoiseOnlyDetectionsGiveNoSinglePhotonBound) {
  // Detections proportional to the intensity probability only: no photon
  // number dependence, as for a source too weak to register.
  SourceConfig s;
  DecoyStatistics st;
  const double n = 1e7;
  for (Basis b : all_bases)
    for (Intensity k : all_intensities) {
      st.detections(b, k) = n * s.p(k);
      st.errors(b, k) = 0.75 * st.detections(b, k);
    }
  SecurityParams p;
  p.asymptotic = true;
  const auto bnd = decoy_bounds(st, p, s);
  EXPECT_EQ(bnd.d1_z, 0.0);
  EXPECT_TRUE(bnd.clamped);
  EXPECT_DOUBLE_EQ(bnd.phi_z, 0.75);
}

TEST(KeyRate, BoundsAreSoundOnTaggedSessions) {
  const LinkConfig cfg;
  int violations = 0, informative = 0;
  for (int s = 0; s < 40; ++s) {
    const auto r = run_session_pulses(cfg, 1'000'000, 500 + s);
    const auto b = decoy_bounds(DecoyStatistics::from_tally(r.tally), SecurityParams{}, cfg.source);
    std::int64_t singles = 0, vacuum = 0;
    for (Intensity k : all_intensities) {
      singles += r.tally.cell(Basis::Z, k).n_single_tagged;
      vacuum += r.tally.cell(Basis::Z, k).n_vacuum_tagged;
    }
    if (b.d1_z > singles || b.d0_z > vacuum) ++violations;
    if (b.d1_z > 0.0) ++informative;
  }
  EXPECT_EQ(violations, 0);
  EXPECT_GT(informative, 0);
}

TEST(KeyRate, AsymptoticBoundsTrackExpectedSingles) {
  // Exact expectations: the single-photon lower bound must not exceed the
  // expected single-photon detections, and should not be far below them.
  LinkConfig cfg;
  SecurityParams p;
  p.asymptotic = true;
  const auto rates = expected_rates(cfg);
  double t = 0.0;
  const auto st = block_statistics(rates, p, &t);
  const auto b = decoy_bounds(st, p, cfg.source);
  // Expected single-photon sifted Z detections: the photon survives, or it
  // is lost and a noise click fires; a noise click on another detector voids
  // the slot.
  const auto& src = cfg.source;
  const double eta = cfg.eta(), pn = cfg.noise_probability_per_slot();
  const double click = eta * (1.0 - pn + pn / cfg.dimension) + (1.0 - eta) * pn;
  double singles = 0.0;
  for (Intensity k : all_intensities) {
    const double pulses = src.rep_rate * t * src.p_z_alice * src.p_z_bob * src.p(k);
    singles += pulses * src.mu(k) * std::exp(-src.mu(k)) * click;
  }
  EXPECT_LE(b.d1_z, singles * 1.001);
  EXPECT_GT(b.d1_z, 0.8 * singles);
}

TEST(KeyRate, BlockTimeAtLowestLoss) {
  const auto cfg = apply_operating_point(LinkConfig{}, reference_points[0]);
  const auto r = evaluate_key_rate(cfg, SecurityParams{});
  EXPECT_NEAR(r.block_time, 93.0, 0.15 * 93.0);
  EXPECT_GT(r.r_sk, 0.0);
  EXPECT_NEAR(r.n_z, 1e9, 1.0);
}

TEST(KeyRate, WorstCaseQberIsMoreConservative) {
  const auto cfg = apply_operating_point(LinkConfig{}, reference_points[5]);
  SecurityParams weighted, worst;
  worst.qber_combination = QberCombination::worst_case;
  EXPECT_LE(evaluate_key_rate(cfg, worst).r_sk, evaluate_key_rate(cfg, weighted).r_sk);
}

TEST(KeyRate, KeyFromTallyUsesElapsedTime) {
  const LinkConfig cfg;
  const auto r = run_session_pulses(cfg, 2'000'000, 77);
  SecurityParams p;
  p.asymptotic = true;
  const auto k = key_rate_from_tally(r.tally, p, cfg.source);
  EXPECT_DOUBLE_EQ(k.block_time, r.tally.elapsed);
  EXPECT_DOUBLE_EQ(k.n_z, static_cast<double>(r.tally.detected(Basis::Z)));
  EXPECT_NEAR(k.qber_z, r.tally.qber(Basis::Z), 1e-15);
}
