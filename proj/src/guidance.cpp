// SPDX-License-Identifier: Apache-2.0

#include "dmgd/guidance.hpp"

#include <cmath>
#include <string>

namespace dmgd {

void DistMatchConfig::validate(int steps) const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("DistMatchConfig: rho must be >= 0");
  if (!(window_lo >= 1 && window_lo <= window_hi && window_hi <= steps)) {
    throw std::invalid_argument("DistMatchConfig: need 1 <= window_lo <= window_hi <= T");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("DistMatchConfig: epsilon must be > 0");
  if (iters < 1) throw std::invalid_argument("DistMatchConfig: iters must be >= 1");
}

void MemorySet::append(Point p) {
  if (!frozen_.empty() && p.size() != frozen_.front().size()) {
    throw std::invalid_argument("MemorySet: dimension mismatch");
  }
  frozen_.push_back(std::move(p));
}

double rho_schedule(const DistMatchConfig& cfg, const NoiseSchedule& sched, int t) {
  if (!cfg.in_window(t)) return 0.0;
  return cfg.rho * std::sqrt(1.0 - sched.alpha_bar(t));
}

OtGuidanceResult ot_guidance_detail(const DistMatchConfig& cfg, const MemorySet& mem,
                                    const Point& z0_est, const DiscreteDistribution& target) {
  if (target.size() < 1) throw std::invalid_argument("ot_guidance: empty target");
  if (z0_est.size() != target.dim()) throw std::invalid_argument("ot_guidance: dimension mismatch");
  std::vector<Point> pts = mem.frozen();
  pts.push_back(z0_est);
  const auto surrogate = DiscreteDistribution::uniform(std::move(pts));
  const Matrix cost = cost_matrix(surrogate, target, cfg.cost_spec());
  TransportPlan plan;
  try {
    plan = sinkhorn(surrogate, target, cost, cfg.epsilon, cfg.iters, cfg.log_domain);
  } catch (const SinkhornUnderflow&) {
    // Same fixed point; the log domain only avoids the underflow.
    plan = sinkhorn(surrogate, target, cost, cfg.epsilon, cfg.iters, true);
  }
  OtGuidanceResult out;
  out.grad = ot_grad_row(plan, surrogate, target, surrogate.size() - 1, cfg.cost_spec());
  out.ot_value = plan.value;
  return out;
}

Point ot_guidance(const DistMatchConfig& cfg, const MemorySet& mem, const Point& z0_est,
                  const DiscreteDistribution& target) {
  return ot_guidance_detail(cfg, mem, z0_est, target).grad;
}

LabelState make_label_state(int label, int num_classes, Rng& rng) {
  if (num_classes < 2) throw std::invalid_argument("make_label_state: need at least 2 classes");
  if (label < 0 || label >= num_classes) throw std::invalid_argument("make_label_state: label out of range");
  int other = static_cast<int>(rng.index(static_cast<std::size_t>(num_classes - 1)));
  if (other >= label) ++other;
  return {label, other, num_classes};
}

Point guided_sample_step(const AnalyticDenoiser& den, const SemanticConfig& sem,
                         const DistMatchConfig& dm, const MemorySet& mem,
                         const DiscreteDistribution& target, const Point& z_t, int t,
                         const LabelState& labels, Rng& rng, StepRecord* record) {
  const auto& sched = den.schedule();
  const LabelVector y = encode_label(labels.label, labels.num_classes);

  LabelVector label = y;
  bool rescale_fallback = false;
  const bool modulated = sem.beta_n != 0.0 || sem.beta_s != 0.0;
  if (modulated && label_stage(sem, t) != LabelStage::refinement) {
    const LabelVector noise = rng.normal_vector(labels.num_classes);
    label = dynamic_label(sem, t, y, encode_label(labels.y_star, labels.num_classes), noise,
                          &rescale_fallback);
  }

  const Point eps_cond = den.eps(z_t, t, label);
  const Point eps_null = den.eps(z_t, t, std::nullopt);
  const Point eps_hat = cfg_combine(eps_cond, eps_null, sem.omega);

  const double rho_t = rho_schedule(dm, sched, t);
  Point grad = Point::Zero(z_t.size());
  double ot_value = 0.0;
  if (rho_t > 0.0) {
    const Point z0 = estimate_x0(sched, z_t, t, eps_hat);
    auto g = ot_guidance_detail(dm, mem, z0, target);
    grad = std::move(g.grad);
    ot_value = g.ot_value;
  }

  Point noise = Point::Zero(z_t.size());
  if (sched.eta() > 0.0 && t > 1) noise = rng.normal_vector(static_cast<int>(z_t.size()));

  Point next = guided_step(sched, z_t, t, eps_hat, noise, grad, rho_t);
  if (record) {
    record->label = labels.label;
    record->t = t;
    record->rho_t = rho_t;
    record->ot_value = ot_value;
    record->grad_norm = grad.norm();
    record->label_fallback = rescale_fallback || den.condition_weights(label).fell_back;
  }
  return next;
}

}  // namespace dmgd
