// SPDX-License-Identifier: Apache-2.0
//
// Noise schedule, forward noising, clean-point estimation and DDIM stepping.

#pragma once

#include "dmgd/numerics.hpp"

#include <vector>

namespace dmgd {

/// Cumulative signal coefficients alpha_bar_1..alpha_bar_T plus the DDIM
/// stochasticity eta. alpha_bar(0) is 1 by convention.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> alpha_bar, double eta = 0.0);

  int steps() const { return static_cast<int>(alpha_bar_.size()); }
  double eta() const { return eta_; }
  /// t in [0, T].
  double alpha_bar(int t) const;
  const std::vector<double>& values() const { return alpha_bar_; }

  NoiseSchedule with_eta(double eta) const { return NoiseSchedule(alpha_bar_, eta); }

 private:
  std::vector<double> alpha_bar_;
  double eta_;
};

/// Improved-DDPM cosine schedule over T direct sampling steps. Per-step betas
/// are clipped at 0.999 so the last value stays strictly positive.
NoiseSchedule make_cosine_schedule(int steps, double offset = 0.008, double eta = 0.0);

/// sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
Point forward_noise(const NoiseSchedule& sched, const Point& x0, int t, const Point& eps);

/// (z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)
Point estimate_x0(const NoiseSchedule& sched, const Point& z_t, int t, const Point& eps_hat);

struct DdimCoefficients {
  double signal = 0.0;  // multiplies z_{0|t}
  double eps = 0.0;     // multiplies eps_hat
  double noise = 0.0;   // multiplies fresh noise
};

/// Throws NumericalError when 1 - ab_{t-1} - eta^2 (1 - ab_t) is negative.
DdimCoefficients ddim_coefficients(const NoiseSchedule& sched, int t);

/// One reverse step z_t -> z_{t-1}. At t = 1 the clean estimate z_{0|1} is
/// returned directly. With eta = 0 `noise` is ignored.
Point ddim_step(const NoiseSchedule& sched, const Point& z_t, int t, const Point& eps_hat,
                const Point& noise);

/// ddim_step(...) - rho_t * grad
Point guided_step(const NoiseSchedule& sched, const Point& z_t, int t, const Point& eps_hat,
                  const Point& noise, const Point& grad, double rho_t);

}  // namespace dmgd
