// SPDX-License-Identifier: Apache-2.0
//
// Exact noise predictor for a noised labeled Gaussian mixture. Because every
// component stays Gaussian under the forward process, the optimal eps
// prediction is available in closed form from the mixture score:
//
//   eps(z_t, t, w) = -sqrt(1 - ab_t) * grad log p_t(z_t | w)
//
// where p_t(. | w) mixes the noised class conditionals with weights derived
// from the label vector w (negatives clamped, then renormalized) and the null
// condition uses the class priors.

#pragma once

#include "dmgd/diffusion.hpp"
#include "dmgd/numerics.hpp"

#include <optional>
#include <vector>

namespace dmgd {

/// One entry per class. Not required to be a probability vector.
using LabelVector = Eigen::VectorXd;

/// One-hot encoding of class c among C classes.
LabelVector encode_label(int c, int num_classes);

struct ClassWeights {
  std::vector<double> weights;
  bool fell_back = false;  // all entries were nonpositive; uniform used instead
};

/// Clamps negatives to zero and renormalizes; uniform when nothing positive remains.
ClassWeights label_to_class_weights(const LabelVector& w);

/// The forward-noised counterpart of a mixture at signal level ab.
LabeledMixture noise_mixture(const LabeledMixture& m, double alpha_bar);

class AnalyticDenoiser {
 public:
  AnalyticDenoiser(LabeledMixture target, NoiseSchedule sched);

  const LabeledMixture& target() const { return target_; }
  const NoiseSchedule& schedule() const { return sched_; }
  int num_classes() const { return target_.num_classes(); }
  int dim() const { return target_.dim(); }

  /// Noised labeled mixture at step t (cached per step).
  const LabeledMixture& noised_target(int t) const;

  /// Class weights used for condition w; empty means the null condition.
  ClassWeights condition_weights(const std::optional<LabelVector>& w) const;

  Point eps(const Point& z_t, int t, const std::optional<LabelVector>& w) const;

 private:
  LabeledMixture target_;
  NoiseSchedule sched_;
  std::vector<LabeledMixture> noised_;
};

/// The density of z_t under condition w, flattened into a single mixture.
GaussianMixture noised_mixture(const AnalyticDenoiser& den, const std::optional<LabelVector>& w,
                               int t);

Point eps_pred(const AnalyticDenoiser& den, const Point& z_t, int t,
               const std::optional<LabelVector>& w);

/// (1 + omega) eps_cond - omega eps_uncond
Point cfg_combine(const Point& eps_cond, const Point& eps_uncond, double omega);

/// (eps_null - eps_c) / sqrt(1 - ab_t), which equals grad log p(c | z_t)
/// exactly under the analytic denoiser.
Point posterior_grad_via_cfg(const AnalyticDenoiser& den, const Point& z_t, int t, int c);

}  // namespace dmgd
