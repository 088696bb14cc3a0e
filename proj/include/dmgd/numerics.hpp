// SPDX-License-Identifier: Apache-2.0
//
// Dense vector types, Gaussian mixtures with closed-form scores and class
// posteriors, and the seeded random stream used throughout the library.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmgd {

using Point = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised when an operation produces or would produce non-finite state.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when input data is inconsistent (dimensions, labels, provenance).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool all_finite(const Point& p);

/// Numerically stable log(sum(exp(v))). Returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> v);

/// One weighted multivariate normal. The covariance is factored once at
/// construction; covariances with min eigenvalue below 1e-10 are rejected.
class GaussianComponent {
 public:
  GaussianComponent(Point mean, Matrix covariance, double weight);

  const Point& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  double weight() const { return weight_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  /// log N(x; mean, covariance), without the mixture weight.
  double log_density(const Point& x) const;
  /// covariance^{-1} (mean - x)
  Point score(const Point& x) const;
  /// mean + L z for the Cholesky factor L.
  Point transform_standard(const Point& z) const;

 private:
  Point mean_;
  Matrix covariance_;
  double weight_;
  Eigen::LLT<Matrix> chol_;
  double log_norm_ = 0.0;
};

struct LogDensityAndScore {
  double log_density = 0.0;
  Point score;
};

/// Finite mixture of Gaussian components whose weights sum to one.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  const std::vector<GaussianComponent>& components() const { return components_; }
  int dim() const { return dim_; }

  double log_pdf(const Point& x) const;
  Point score(const Point& x) const;
  LogDensityAndScore log_pdf_and_score(const Point& x) const;

 private:
  std::vector<GaussianComponent> components_;
  int dim_ = 0;
};

struct ClassConditional {
  int label = 0;
  GaussianMixture mixture;
  double prior = 0.0;
};

/// Per-class Gaussian mixtures with class priors. Labels are the class
/// positions 0..C-1.
class LabeledMixture {
 public:
  explicit LabeledMixture(std::vector<ClassConditional> classes);

  int dim() const { return dim_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<ClassConditional>& classes() const { return classes_; }
  const ClassConditional& at(int label) const;
  std::vector<double> priors() const;

  /// log sum_c w_c p(x|c) and its gradient. Weights must be nonnegative and
  /// sum to one; zero-weight classes are skipped.
  LogDensityAndScore weighted_log_pdf_and_score(std::span<const double> class_weights,
                                                const Point& x) const;

 private:
  std::vector<ClassConditional> classes_;
  int dim_ = 0;
};

/// log p(x|label), or the prior-weighted marginal when label is empty.
double mixture_logpdf(const LabeledMixture& m, std::optional<int> label, const Point& x);

/// grad_x log p(x|label), or of the marginal when label is empty.
Point mixture_score(const LabeledMixture& m, std::optional<int> label, const Point& x);

/// p(y|x) for every class y.
std::vector<double> class_posterior(const LabeledMixture& m, const Point& x);

/// Seeded pseudo-random stream. Not shared across tasks; copy or derive a
/// fresh stream per task instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  Point normal_vector(int d);
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

Rng seeded_rng(std::uint64_t seed);

/// Mixes (seed, stream) into an independent seed with splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Draws one point from class `label` of the mixture.
Point sample_class(const LabeledMixture& m, int label, Rng& rng);

}  // namespace dmgd
