// reference_points.hpp
// Published operating points of the four-core link: settings, measured QBER
// per basis and intensity, and the resulting secret key rate.

#pragma once

#include <array>

#include "linksim.hpp"

namespace mcfqkd {

struct OperatingPoint {
  double loss_db;  // fiber plus fan-in/fan-out, before the receiver
  double mu1;
  double mu2;
  double p_mu1;
  double p_z;
  double qber_z_mu1;
  double qber_z_mu2;
  double qber_x_mu1;
  double qber_x_mu2;
  double r_sk_kbps;

  double qber(Basis b, Intensity k) const {
    if (b == Basis::Z) return k == Intensity::mu1 ? qber_z_mu1 : qber_z_mu2;
    return k == Intensity::mu1 ? qber_x_mu1 : qber_x_mu2;
  }
};

inline constexpr std::array<OperatingPoint, 6> reference_points{{
    {5.8, 0.19, 0.15, 0.62, 0.90, 0.0432, 0.0410, 0.0473, 0.0466, 6308.0},
    {9.8, 0.20, 0.16, 0.63, 0.90, 0.0466, 0.0481, 0.0446, 0.0483, 2585.0},
    {13.8, 0.22, 0.17, 0.63, 0.90, 0.0467, 0.0462, 0.0499, 0.0499, 796.0},
    {17.8, 0.23, 0.18, 0.63, 0.90, 0.0510, 0.0508, 0.0509, 0.0516, 258.0},
    {21.8, 0.23, 0.18, 0.63, 0.90, 0.0584, 0.0572, 0.0594, 0.0628, 116.0},
    {25.8, 0.22, 0.18, 0.64, 0.86, 0.0698, 0.0758, 0.0748, 0.0828, 22.0},
}};

// Link configuration at an operating point; the loss is applied to the core.
inline LinkConfig apply_operating_point(LinkConfig config, const OperatingPoint& point) {
  config.channel.core_loss_db = point.loss_db;
  config.channel.extra_attenuation_db = 0.0;
  config.source.mu1 = point.mu1;
  config.source.mu2 = point.mu2;
  config.source.p_mu1 = point.p_mu1;
  config.source.p_z_alice = point.p_z;
  config.source.p_z_bob = point.p_z;
  return config;
}

}  // namespace mcfqkd
