// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "dmgd/semantic.hpp"

#include <cmath>

using namespace dmgd;

namespace {

Point p2(double x, double y) {
  Point p(2);
  p << x, y;
  return p;
}

GaussianMixture blob(const Point& mu, double var) {
  return GaussianMixture({GaussianComponent(mu, var * Matrix::Identity(2, 2), 1.0)});
}

AnalyticDenoiser small_denoiser() {
  LabeledMixture m({{0, blob(p2(0.0, 1.5), 0.4), 0.4}, {1, blob(p2(-1.5, -1.0), 0.4), 0.3},
                    {2, blob(p2(1.5, -1.0), 0.4), 0.3}});
  return AnalyticDenoiser(std::move(m), make_cosine_schedule(50));
}

double mean_of(const LabelVector& v) { return v.mean(); }

double pop_std(const LabelVector& v) {
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("stage boundaries") {
  const SemanticConfig cfg;
  CHECK(label_stage(cfg, 50) == LabelStage::chaotic);
  CHECK(label_stage(cfg, 45) == LabelStage::chaotic);
  CHECK(label_stage(cfg, 44) == LabelStage::semantic);
  CHECK(label_stage(cfg, 26) == LabelStage::semantic);
  CHECK(label_stage(cfg, 25) == LabelStage::refinement);
  CHECK(label_stage(cfg, 1) == LabelStage::refinement);
}

TEST_CASE("sigma_t") {
  const SemanticConfig cfg;
  CHECK(sigma_t(cfg, 35) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sigma_t(cfg, 44) == doctest::Approx(0.05));
  CHECK_THROWS_AS(sigma_t(cfg, 45), std::invalid_argument);
  CHECK_THROWS_AS(sigma_t(cfg, 25), std::invalid_argument);
}

TEST_CASE("config validation") {
  SemanticConfig cfg;
  CHECK_NOTHROW(cfg.validate(50));
  cfg.t1 = 51;
  cfg.t2 = 50;
  CHECK_NOTHROW(cfg.validate(50));
  cfg.t1 = 52;
  CHECK_THROWS_AS(cfg.validate(50), std::invalid_argument);
  cfg = SemanticConfig{};
  cfg.t2 = 45;
  CHECK_THROWS_AS(cfg.validate(50), std::invalid_argument);
  cfg = SemanticConfig{};
  cfg.beta_n = -0.1;
  CHECK_THROWS_AS(cfg.validate(50), std::invalid_argument);
}

TEST_CASE("rescaling restores one-hot statistics") {
  Rng rng(1);
  const LabelVector y = encode_label(3, 10);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelVector v = rng.normal_vector(10);
    const LabelVector r = rescale_label(v, y);
    CHECK(std::abs(mean_of(r) - 0.1) < 1e-10);
    CHECK(std::abs(pop_std(r) - 0.3) < 1e-10);
  }
  CHECK((rescale_label(y, y) - y).norm() < 1e-15);
  const LabelVector shifted = (2.0 * y.array() - 0.7).matrix();
  CHECK((rescale_label(shifted, y) - y).norm() < 1e-14);
}

TEST_CASE("constant vector falls back to the reference") {
  const LabelVector y = encode_label(0, 4);
  bool fell_back = false;
  const LabelVector r = rescale_label(LabelVector::Constant(4, 0.3), y, &fell_back);
  CHECK(fell_back);
  CHECK(r == y);
  CHECK_THROWS_AS(rescale_label(LabelVector::Zero(3), y), std::invalid_argument);
}

TEST_CASE("dynamic label by stage") {
  const SemanticConfig cfg;
  const LabelVector y = encode_label(1, 5);
  const LabelVector ys = encode_label(4, 5);
  Rng rng(2);
  const LabelVector n = rng.normal_vector(5);
  CHECK(dynamic_label(cfg, 10, y, ys, n) == y);
  CHECK(dynamic_label(cfg, 25, y, ys, n) == y);
  CHECK((dynamic_label(cfg, 47, y, ys, n) - rescale_label(n, y)).norm() < 1e-15);
  const double root = std::sqrt(sigma_t(cfg, 30));
  const LabelVector mixed = root * y + (1 - root) * (cfg.beta_s * ys + cfg.beta_n * n);
  CHECK((dynamic_label(cfg, 30, y, ys, n) - rescale_label(mixed, y)).norm() < 1e-15);
  CHECK_THROWS_AS(dynamic_label(cfg, 30, y, y, n), std::invalid_argument);
  CHECK_THROWS_AS(dynamic_label(cfg, 30, y, ys, rng.normal_vector(4)), std::invalid_argument);
}

TEST_CASE("zero modulation reduces to the target label") {
  SemanticConfig cfg;
  cfg.beta_n = 0.0;
  cfg.beta_s = 0.0;
  const LabelVector y = encode_label(2, 4);
  const LabelVector ys = encode_label(0, 4);
  Rng rng(3);
  for (int t = 1; t <= 50; ++t) CHECK(dynamic_label(cfg, t, y, ys, rng.normal_vector(4)) == y);
  // The shrunken one-hot of the semantic window rescales back to y.
  CHECK((rescale_label(std::sqrt(sigma_t(cfg, 30)) * y, y) - y).norm() < 1e-14);
}

TEST_CASE("condition shift scale at eta = 0") {
  const auto s = make_cosine_schedule(50);
  for (int t = 2; t <= 50; ++t) {
    const double a = s.alpha_bar(t), ap = s.alpha_bar(t - 1);
    CHECK(std::abs(condition_shift_scale(s, t) - (std::sqrt(1 - ap) - std::sqrt(ap) * std::sqrt(1 - a) / std::sqrt(a))) <
          1e-12);
  }
  CHECK_THROWS_AS(condition_shift_scale(s, 1), std::invalid_argument);
}

TEST_CASE("condition shift is linear and vanishes at zero") {
  const auto den = small_denoiser();
  Rng rng(4);
  LabelVector y(3);
  y << 0.6, 0.3, 0.1;
  for (int trial = 0; trial < 20; ++trial) {
    const int t = 2 + static_cast<int>(rng.index(49));
    const Point z = rng.normal_vector(2);
    const LabelVector d = 0.01 * rng.normal_vector(3);
    CHECK(condition_shift(den, z, t, y, LabelVector::Zero(3)).norm() == 0.0);
    const Point one = condition_shift(den, z, t, y, d);
    const Point two = condition_shift(den, z, t, y, 2.0 * d);
    CHECK((two - 2.0 * one).norm() < 1e-8);
  }
  CHECK_THROWS_AS(condition_shift(den, p2(0, 0), 1, y, y), std::invalid_argument);
}

TEST_CASE("first-order label shift has a second-order residual") {
  const auto den = small_denoiser();
  Rng rng(5);
  int checked = 0;
  while (checked < 20) {
    const int t = 10 + static_cast<int>(rng.index(35));
    const Point z = rng.normal_vector(2);
    const auto post = class_posterior(den.noised_target(t), z);
    if (*std::max_element(post.begin(), post.end()) > 0.99) continue;
    LabelVector y(3);
    for (int k = 0; k < 3; ++k) y[k] = 0.2 + rng.uniform();
    y /= y.sum();
    LabelVector dir = rng.normal_vector(3);
    dir /= dir.norm();
    auto residual = [&](double size) {
      const LabelVector d = size * dir;
      return (conditional_ddim_step(den, z, t, y + d) - conditional_ddim_step(den, z, t, y) -
              condition_shift(den, z, t, y, d))
          .norm();
    };
    const double r1 = residual(1e-2), r2 = residual(5e-3);
    if (r1 < 1e-11) continue;
    const double ratio = r1 / r2;
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);
    ++checked;
  }
}
