#include <gtest/gtest.h>

#include "mcfqkd/fringes.hpp"

using namespace mcfqkd;

TEST(Fringes, OrthogonalPolarizationKeepsFringes) {
  const auto t = simulate_fringes(PolarizationMode::orthogonal, PllConfig{}, 1);
  EXPECT_GT(t.visibility_on, 0.9);
  EXPECT_GT(t.visibility_off, 0.95);
}

TEST(Fringes, AlignedPolarizationWashesFringesOut) {
  const auto t = simulate_fringes(PolarizationMode::aligned, PllConfig{}, 1);
  EXPECT_LT(t.visibility_on, 0.2);
  EXPECT_GT(t.visibility_off, 0.95);
}

TEST(Fringes, FullExtinctionLeavesModulationInvisible) {
  FringeOptions o;
  o.extinction = 0.0;
  PllConfig p;
  p.shot_noise = false;
  const auto t = simulate_fringes(PolarizationMode::orthogonal, p, 1, o);
  std::vector<std::int64_t> on, off;
  for (const auto& s : t.samples) (s.modulator_on ? on : off).push_back(s.counts);
  // Same sweep phase in both segments when the segment spans whole periods.
  ASSERT_EQ(on.size(), off.size());
  for (std::size_t i = 0; i < on.size(); ++i) EXPECT_EQ(on[i], off[i]);
}

TEST(Fringes, Deterministic) {
  const auto a = simulate_fringes(PolarizationMode::aligned, PllConfig{}, 9);
  const auto b = simulate_fringes(PolarizationMode::aligned, PllConfig{}, 9);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].counts, b.samples[i].counts);
}

TEST(Fringes, Visibility) {
  EXPECT_DOUBLE_EQ(fringe_visibility({10, 0, 5}), 1.0);
  EXPECT_DOUBLE_EQ(fringe_visibility({3, 1}), 0.5);
  EXPECT_THROW(fringe_visibility({}), std::invalid_argument);
}
