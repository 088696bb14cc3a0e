// SPDX-License-Identifier: Apache-2.0

#include "dmgd/semantic.hpp"

#include <cmath>
#include <string>

namespace dmgd {

void SemanticConfig::validate(int steps) const {
  if (!(t2 >= 1 && t1 > t2 && t1 <= steps + 1)) {
    throw std::invalid_argument("SemanticConfig: need 1 <= t2 < t1 <= T + 1 (t1=" +
                                std::to_string(t1) + ", t2=" + std::to_string(t2) + ")");
  }
  if (!(beta_n >= 0.0 && beta_s >= 0.0)) throw std::invalid_argument("SemanticConfig: betas must be >= 0");
  if (!std::isfinite(omega)) throw std::invalid_argument("SemanticConfig: omega must be finite");
}

LabelStage label_stage(const SemanticConfig& cfg, int t) {
  if (t >= cfg.t1) return LabelStage::chaotic;
  if (t > cfg.t2) return LabelStage::semantic;
  return LabelStage::refinement;
}

double sigma_t(const SemanticConfig& cfg, int t) {
  if (!(t > cfg.t2 && t < cfg.t1)) {
    throw std::invalid_argument("sigma_t: t=" + std::to_string(t) + " outside (t2, t1)");
  }
  return static_cast<double>(cfg.t1 - t) / static_cast<double>(cfg.t1 - cfg.t2);
}

namespace {

struct Moments {
  double mean;
  double stddev;
};

Moments moments(const LabelVector& v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.sum() / n;
  const double var = (v.array() - mean).square().sum() / n;
  return {mean, std::sqrt(var)};
}

}  // namespace

LabelVector rescale_label(const LabelVector& v, const LabelVector& ref, bool* fell_back) {
  if (v.size() != ref.size()) throw std::invalid_argument("rescale_label: length mismatch");
  if (v.size() < 2) throw std::invalid_argument("rescale_label: need at least 2 entries");
  const Moments mv = moments(v);
  const Moments mr = moments(ref);
  if (fell_back) *fell_back = false;
  if (!(mv.stddev > 1e-12)) {
    if (fell_back) *fell_back = true;
    return ref;
  }
  return ((v.array() - mv.mean) / mv.stddev * mr.stddev + mr.mean).matrix();
}

LabelVector dynamic_label(const SemanticConfig& cfg, int t, const LabelVector& y,
                          const LabelVector& y_star, const LabelVector& noise, bool* fell_back) {
  if (y.size() != y_star.size() || y.size() != noise.size()) {
    throw std::invalid_argument("dynamic_label: length mismatch");
  }
  if (y == y_star) throw std::invalid_argument("dynamic_label: y_star must differ from y");
  if (fell_back) *fell_back = false;
  // Without modulation weights there is nothing to explore with; every stage is y.
  if (cfg.beta_n == 0.0 && cfg.beta_s == 0.0) return y;
  switch (label_stage(cfg, t)) {
    case LabelStage::chaotic:
      return rescale_label(noise, y, fell_back);
    case LabelStage::semantic: {
      const double root = std::sqrt(sigma_t(cfg, t));
      const LabelVector mixed = root * y + (1.0 - root) * (cfg.beta_s * y_star + cfg.beta_n * noise);
      return rescale_label(mixed, y, fell_back);
    }
    case LabelStage::refinement:
      break;
  }
  return y;
}

double condition_shift_scale(const NoiseSchedule& sched, int t) {
  if (t < 2) throw std::invalid_argument("condition_shift: t must be >= 2");
  const auto c = ddim_coefficients(sched, t);
  const double ab = sched.alpha_bar(t);
  return c.eps - c.signal * std::sqrt(1.0 - ab) / std::sqrt(ab);
}

Point condition_shift(const AnalyticDenoiser& den, const Point& z_t, int t, const LabelVector& y,
                      const LabelVector& delta, double fd_step) {
  const double scale = condition_shift_scale(den.schedule(), t);
  if (y.size() != delta.size() || y.size() != den.num_classes()) {
    throw std::invalid_argument("condition_shift: label length mismatch");
  }
  Point jd = Point::Zero(z_t.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    if (delta[k] == 0.0) continue;
    LabelVector up = y;
    LabelVector down = y;
    up[k] += fd_step;
    down[k] -= fd_step;
    const Point col = (den.eps(z_t, t, up) - den.eps(z_t, t, down)) / (2.0 * fd_step);
    jd += delta[k] * col;
  }
  return scale * jd;
}

Point conditional_ddim_step(const AnalyticDenoiser& den, const Point& z_t, int t,
                            const LabelVector& y) {
  const Point eps = den.eps(z_t, t, y);
  return ddim_step(den.schedule(), z_t, t, eps, Point::Zero(z_t.size()));
}

}  // namespace dmgd
