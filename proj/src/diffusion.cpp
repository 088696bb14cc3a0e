// SPDX-License-Identifier: Apache-2.0

#include "dmgd/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dmgd {

namespace {

void check_step(const NoiseSchedule& sched, int t) {
  if (t < 1 || t > sched.steps()) {
    throw std::invalid_argument("timestep " + std::to_string(t) + " outside [1, " +
                                std::to_string(sched.steps()) + "]");
  }
}

void check_same_dim(const Point& a, const Point& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar, double eta)
    : alpha_bar_(std::move(alpha_bar)), eta_(eta) {
  if (alpha_bar_.size() < 2) throw std::invalid_argument("NoiseSchedule: need at least 2 steps");
  if (!(eta_ >= 0.0 && eta_ <= 1.0)) throw std::invalid_argument("NoiseSchedule: eta must lie in [0, 1]");
  double prev = 1.0;
  for (double a : alpha_bar_) {
    if (!(a > 0.0 && a < prev)) {
      throw std::invalid_argument("NoiseSchedule: alpha_bar must be strictly decreasing in (0, 1)");
    }
    prev = a;
  }
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > steps()) throw std::invalid_argument("NoiseSchedule: timestep out of range");
  return alpha_bar_[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_cosine_schedule(int steps, double offset, double eta) {
  if (steps < 2) throw std::invalid_argument("make_cosine_schedule: T must be >= 2");
  if (!(offset > 0.0)) throw std::invalid_argument("make_cosine_schedule: offset must be > 0");
  auto f = [&](double t) {
    const double c = std::cos((t / steps + offset) / (1.0 + offset) * std::numbers::pi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  constexpr double kMaxBeta = 0.999;
  std::vector<double> ab;
  ab.reserve(static_cast<std::size_t>(steps));
  double prev = 1.0;
  for (int t = 1; t <= steps; ++t) {
    double a = f(t) / f0;
    if (a < prev * (1.0 - kMaxBeta)) a = prev * (1.0 - kMaxBeta);
    ab.push_back(a);
    prev = a;
  }
  return NoiseSchedule(std::move(ab), eta);
}

Point forward_noise(const NoiseSchedule& sched, const Point& x0, int t, const Point& eps) {
  check_step(sched, t);
  check_same_dim(x0, eps);
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Point estimate_x0(const NoiseSchedule& sched, const Point& z_t, int t, const Point& eps_hat) {
  check_step(sched, t);
  check_same_dim(z_t, eps_hat);
  const double ab = sched.alpha_bar(t);
  return (z_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

DdimCoefficients ddim_coefficients(const NoiseSchedule& sched, int t) {
  check_step(sched, t);
  const double ab_t = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double eta = sched.eta();
  double radicand = 1.0 - ab_prev - eta * eta * (1.0 - ab_t);
  if (radicand < 0.0) {
    if (radicand > -1e-15) {
      radicand = 0.0;
    } else {
      throw NumericalError("ddim_step: negative radicand at t=" + std::to_string(t) +
                           " (eta too large for this schedule)");
    }
  }
  return {std::sqrt(ab_prev), std::sqrt(radicand), eta * std::sqrt(1.0 - ab_prev)};
}

Point ddim_step(const NoiseSchedule& sched, const Point& z_t, int t, const Point& eps_hat,
                const Point& noise) {
  Point z0 = estimate_x0(sched, z_t, t, eps_hat);
  if (t == 1) return z0;
  const auto c = ddim_coefficients(sched, t);
  Point out = c.signal * z0 + c.eps * eps_hat;
  if (c.noise != 0.0) {
    check_same_dim(z_t, noise);
    out += c.noise * noise;
  }
  return out;
}

Point guided_step(const NoiseSchedule& sched, const Point& z_t, int t, const Point& eps_hat,
                  const Point& noise, const Point& grad, double rho_t) {
  check_same_dim(z_t, grad);
  if (!grad.allFinite()) throw NumericalError("guided_step: non-finite guidance gradient");
  Point out = ddim_step(sched, z_t, t, eps_hat, noise);
  if (rho_t != 0.0) out -= rho_t * grad;
  return out;
}

}  // namespace dmgd
