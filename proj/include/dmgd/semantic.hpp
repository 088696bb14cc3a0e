// SPDX-License-Identifier: Apache-2.0
//
// Three-stage dynamic soft labels for semantic matching.
//
//   t >= t1       chaotic:     pure noise (rescaled to one-hot statistics)
//   t2 < t < t1   semantic:    sqrt(s) y + (1 - sqrt(s)) (beta_s y* + beta_n n),  s = (t1 - t)/(t1 - t2)
//   t <= t2       refinement:  y
//
// Setting t2 = T and t1 = T + 1, or beta_n = beta_s = 0, disables the dynamic
// schedule entirely (the label is y at every step).

#pragma once

#include "dmgd/denoiser.hpp"

namespace dmgd {

struct SemanticConfig {
  int t1 = 45;
  int t2 = 25;
  double beta_n = 0.06;
  double beta_s = 0.01;
  double omega = 3.0;  // CFG scale 1 + omega = 4

  /// Requires 1 <= t2 < t1 <= steps + 1 and nonnegative betas.
  void validate(int steps) const;
};

enum class LabelStage { chaotic, semantic, refinement };

LabelStage label_stage(const SemanticConfig& cfg, int t);

/// (t1 - t) / (t1 - t2) on the open interval t2 < t < t1.
double sigma_t(const SemanticConfig& cfg, int t);

/// Shifts and scales v so its entrywise mean and population standard
/// deviation match ref's. A constant v carries no direction; ref is returned
/// and `fell_back` is set.
LabelVector rescale_label(const LabelVector& v, const LabelVector& ref, bool* fell_back = nullptr);

/// The staged label for step t. `noise` has one entry per class.
LabelVector dynamic_label(const SemanticConfig& cfg, int t, const LabelVector& y,
                          const LabelVector& y_star, const LabelVector& noise,
                          bool* fell_back = nullptr);

/// c_t = d z_{t-1} / d eps for the DDIM step; at eta = 0 this is
/// sqrt(1 - ab_{t-1}) - sqrt(ab_{t-1}) sqrt(1 - ab_t) / sqrt(ab_t).
double condition_shift_scale(const NoiseSchedule& sched, int t);

/// First-order change of a conditional DDIM step when the label moves from y
/// to y + delta: c_t (d eps / d y) delta, with the Jacobian taken by central
/// differences over the label entries.
Point condition_shift(const AnalyticDenoiser& den, const Point& z_t, int t, const LabelVector& y,
                      const LabelVector& delta, double fd_step = 1e-4);

/// Deterministic conditional DDIM step (no CFG) under label vector y.
Point conditional_ddim_step(const AnalyticDenoiser& den, const Point& z_t, int t,
                            const LabelVector& y);

}  // namespace dmgd
