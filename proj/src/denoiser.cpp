// SPDX-License-Identifier: Apache-2.0

#include "dmgd/denoiser.hpp"

#include <cmath>
#include <string>

namespace dmgd {

LabelVector encode_label(int c, int num_classes) {
  if (num_classes < 1 || c < 0 || c >= num_classes) {
    throw std::invalid_argument("encode_label: class " + std::to_string(c) + " out of range for " +
                                std::to_string(num_classes) + " classes");
  }
  LabelVector v = LabelVector::Zero(num_classes);
  v[c] = 1.0;
  return v;
}

ClassWeights label_to_class_weights(const LabelVector& w) {
  if (w.size() < 1) throw std::invalid_argument("label vector is empty");
  if (!w.allFinite()) throw NumericalError("label vector has non-finite entries");
  ClassWeights out;
  out.weights.resize(static_cast<std::size_t>(w.size()));
  double total = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double v = w[i] > 0.0 ? w[i] : 0.0;
    out.weights[static_cast<std::size_t>(i)] = v;
    total += v;
  }
  if (!(total > 0.0)) {
    out.fell_back = true;
    for (double& v : out.weights) v = 1.0 / static_cast<double>(w.size());
    return out;
  }
  for (double& v : out.weights) v /= total;
  return out;
}

LabeledMixture noise_mixture(const LabeledMixture& m, double alpha_bar) {
  const double signal = std::sqrt(alpha_bar);
  const Matrix eye = Matrix::Identity(m.dim(), m.dim());
  std::vector<ClassConditional> classes;
  classes.reserve(m.classes().size());
  for (const auto& cls : m.classes()) {
    std::vector<GaussianComponent> comps;
    comps.reserve(cls.mixture.components().size());
    for (const auto& comp : cls.mixture.components()) {
      Matrix cov = alpha_bar * comp.covariance() + (1.0 - alpha_bar) * eye;
      cov = 0.5 * (cov + cov.transpose());
      comps.emplace_back(signal * comp.mean(), std::move(cov), comp.weight());
    }
    classes.push_back({cls.label, GaussianMixture(std::move(comps)), cls.prior});
  }
  return LabeledMixture(std::move(classes));
}

AnalyticDenoiser::AnalyticDenoiser(LabeledMixture target, NoiseSchedule sched)
    : target_(std::move(target)), sched_(std::move(sched)) {
  noised_.reserve(static_cast<std::size_t>(sched_.steps()));
  for (int t = 1; t <= sched_.steps(); ++t) noised_.push_back(noise_mixture(target_, sched_.alpha_bar(t)));
}

const LabeledMixture& AnalyticDenoiser::noised_target(int t) const {
  if (t < 1 || t > sched_.steps()) {
    throw std::invalid_argument("timestep " + std::to_string(t) + " out of range");
  }
  return noised_[static_cast<std::size_t>(t - 1)];
}

ClassWeights AnalyticDenoiser::condition_weights(const std::optional<LabelVector>& w) const {
  if (!w) return {target_.priors(), false};
  if (w->size() != num_classes()) {
    throw std::invalid_argument("label vector length does not match class count");
  }
  return label_to_class_weights(*w);
}

Point AnalyticDenoiser::eps(const Point& z_t, int t, const std::optional<LabelVector>& w) const {
  const auto& noised = noised_target(t);
  const auto weights = condition_weights(w);
  const auto ls = noised.weighted_log_pdf_and_score(weights.weights, z_t);
  return -std::sqrt(1.0 - sched_.alpha_bar(t)) * ls.score;
}

GaussianMixture noised_mixture(const AnalyticDenoiser& den, const std::optional<LabelVector>& w,
                               int t) {
  const auto& noised = den.noised_target(t);
  const auto weights = den.condition_weights(w);
  std::vector<GaussianComponent> comps;
  for (const auto& cls : noised.classes()) {
    const double wc = weights.weights[static_cast<std::size_t>(cls.label)];
    if (!(wc > 0.0)) continue;
    for (const auto& comp : cls.mixture.components()) {
      comps.emplace_back(comp.mean(), comp.covariance(), wc * comp.weight());
    }
  }
  return GaussianMixture(std::move(comps));
}

Point eps_pred(const AnalyticDenoiser& den, const Point& z_t, int t,
               const std::optional<LabelVector>& w) {
  return den.eps(z_t, t, w);
}

Point cfg_combine(const Point& eps_cond, const Point& eps_uncond, double omega) {
  if (eps_cond.size() != eps_uncond.size()) throw std::invalid_argument("cfg_combine: dimension mismatch");
  return (1.0 + omega) * eps_cond - omega * eps_uncond;
}

Point posterior_grad_via_cfg(const AnalyticDenoiser& den, const Point& z_t, int t, int c) {
  const Point eps_c = den.eps(z_t, t, encode_label(c, den.num_classes()));
  const Point eps_null = den.eps(z_t, t, std::nullopt);
  return (eps_null - eps_c) / std::sqrt(1.0 - den.schedule().alpha_bar(t));
}

}  // namespace dmgd
