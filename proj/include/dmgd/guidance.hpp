// SPDX-License-Identifier: Apache-2.0
//
// Distribution-matching guidance. Each new sample is steered by the gradient
// of the entropic OT cost between (frozen memory set + its current clean
// estimate) and the quantized class target; only the new sample's row of the
// plan contributes. The semantic side (dynamic soft labels + CFG) and the OT
// side are combined into a single reverse step here.

#pragma once

#include "dmgd/denoiser.hpp"
#include "dmgd/diffusion.hpp"
#include "dmgd/semantic.hpp"
#include "dmgd/transport.hpp"

#include <vector>

namespace dmgd {

struct DistMatchConfig {
  double rho = 0.05;
  int window_lo = 30;
  int window_hi = 45;
  CostMetric metric = CostMetric::euclidean;
  double epsilon = 0.1;
  int iters = 5;
  bool project_sphere = false;
  bool log_domain = false;

  void validate(int steps) const;
  CostSpec cost_spec() const { return {metric, project_sphere}; }
  bool in_window(int t) const { return t >= window_lo && t <= window_hi; }
};

/// Finalized samples of one class. Append-only during a class run.
class MemorySet {
 public:
  explicit MemorySet(int label) : label_(label) {}

  int label() const { return label_; }
  const std::vector<Point>& frozen() const { return frozen_; }
  std::size_t size() const { return frozen_.size(); }
  void append(Point p);

 private:
  int label_;
  std::vector<Point> frozen_;
};

/// rho * sqrt(1 - ab_t) inside the window, 0 outside.
double rho_schedule(const DistMatchConfig& cfg, const NoiseSchedule& sched, int t);

struct OtGuidanceResult {
  Point grad;
  double ot_value = 0.0;  // <gamma, C> for the surrogate-vs-target plan
};

/// Surrogate = memory + {z0_est} with uniform masses; Sinkhorn against the
/// quantized target; gradient of the new sample's row with gamma frozen.
OtGuidanceResult ot_guidance_detail(const DistMatchConfig& cfg, const MemorySet& mem,
                                    const Point& z0_est, const DiscreteDistribution& target);

Point ot_guidance(const DistMatchConfig& cfg, const MemorySet& mem, const Point& z0_est,
                  const DiscreteDistribution& target);

/// Per-sample label choice: the class being distilled and the fixed y*.
struct LabelState {
  int label = 0;
  int y_star = 1;
  int num_classes = 2;
};

/// Picks y* uniformly among the other classes.
LabelState make_label_state(int label, int num_classes, Rng& rng);

struct StepRecord {
  int label = 0;
  int sample = 0;
  int t = 0;
  double rho_t = 0.0;
  double ot_value = 0.0;
  double grad_norm = 0.0;
  bool label_fallback = false;
};

/// One DMGD reverse step: dynamic label -> CFG eps -> z_{0|t} -> OT gradient
/// (inside the window) -> guided DDIM update.
Point guided_sample_step(const AnalyticDenoiser& den, const SemanticConfig& sem,
                         const DistMatchConfig& dm, const MemorySet& mem,
                         const DiscreteDistribution& target, const Point& z_t, int t,
                         const LabelState& labels, Rng& rng, StepRecord* record = nullptr);

}  // namespace dmgd
