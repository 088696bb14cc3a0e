// SPDX-License-Identifier: Apache-2.0

#include "dmgd/numerics.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dmgd {

namespace {

constexpr double kMinEigenvalue = 1e-10;
constexpr double kWeightSumTol = 1e-9;

void check_dim(int expected, const Point& x) {
  if (x.size() != expected) {
    throw std::invalid_argument("dimension mismatch: expected " + std::to_string(expected) +
                                ", got " + std::to_string(x.size()));
  }
}

}  // namespace

bool all_finite(const Point& p) { return p.allFinite(); }

double log_sum_exp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : v) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

GaussianComponent::GaussianComponent(Point mean, Matrix covariance, double weight)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), weight_(weight) {
  const auto d = mean_.size();
  if (d < 1) throw std::invalid_argument("GaussianComponent: dimension must be >= 1");
  if (covariance_.rows() != d || covariance_.cols() != d) {
    throw std::invalid_argument("GaussianComponent: covariance shape does not match mean");
  }
  if (!mean_.allFinite() || !covariance_.allFinite()) {
    throw std::invalid_argument("GaussianComponent: non-finite parameters");
  }
  if (!(weight_ > 0.0 && weight_ <= 1.0)) {
    throw std::invalid_argument("GaussianComponent: weight must lie in (0, 1]");
  }
  if ((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("GaussianComponent: covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < kMinEigenvalue) {
    throw std::invalid_argument("GaussianComponent: covariance is degenerate");
  }
  chol_.compute(covariance_);
  const Matrix& l = chol_.matrixLLT();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
  log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
}

double GaussianComponent::log_density(const Point& x) const {
  const Point diff = x - mean_;
  const Point w = chol_.matrixL().solve(diff);
  return log_norm_ - 0.5 * w.squaredNorm();
}

Point GaussianComponent::score(const Point& x) const { return chol_.solve(mean_ - x); }

Point GaussianComponent::transform_standard(const Point& z) const {
  return mean_ + chol_.matrixL() * z;
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("GaussianMixture: no components");
  dim_ = components_.front().dim();
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.dim() != dim_) throw std::invalid_argument("GaussianMixture: inconsistent dimensions");
    total += c.weight();
  }
  if (std::abs(total - 1.0) > kWeightSumTol) {
    throw std::invalid_argument("GaussianMixture: component weights must sum to 1");
  }
}

double GaussianMixture::log_pdf(const Point& x) const {
  check_dim(dim_, x);
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) terms.push_back(std::log(c.weight()) + c.log_density(x));
  return log_sum_exp(terms);
}

Point GaussianMixture::score(const Point& x) const { return log_pdf_and_score(x).score; }

LogDensityAndScore GaussianMixture::log_pdf_and_score(const Point& x) const {
  check_dim(dim_, x);
  std::vector<double> terms;
  terms.reserve(components_.size());
  for (const auto& c : components_) terms.push_back(std::log(c.weight()) + c.log_density(x));
  const double lse = log_sum_exp(terms);
  Point s = Point::Zero(dim_);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const double r = std::exp(terms[k] - lse);
    if (r > 0.0) s += r * components_[k].score(x);
  }
  return {lse, std::move(s)};
}

LabeledMixture::LabeledMixture(std::vector<ClassConditional> classes)
    : classes_(std::move(classes)) {
  if (classes_.empty()) throw std::invalid_argument("LabeledMixture: no classes");
  dim_ = classes_.front().mixture.dim();
  double total = 0.0;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    if (c.label != static_cast<int>(i)) {
      throw std::invalid_argument("LabeledMixture: labels must be 0..C-1 in order");
    }
    if (c.mixture.dim() != dim_) throw std::invalid_argument("LabeledMixture: inconsistent dimensions");
    if (!(c.prior > 0.0)) throw std::invalid_argument("LabeledMixture: class priors must be positive");
    total += c.prior;
  }
  if (std::abs(total - 1.0) > kWeightSumTol) {
    throw std::invalid_argument("LabeledMixture: class priors must sum to 1");
  }
}

const ClassConditional& LabeledMixture::at(int label) const {
  if (label < 0 || label >= num_classes()) {
    throw std::invalid_argument("unknown class label " + std::to_string(label));
  }
  return classes_[static_cast<std::size_t>(label)];
}

std::vector<double> LabeledMixture::priors() const {
  std::vector<double> p;
  p.reserve(classes_.size());
  for (const auto& c : classes_) p.push_back(c.prior);
  return p;
}

LogDensityAndScore LabeledMixture::weighted_log_pdf_and_score(std::span<const double> class_weights,
                                                              const Point& x) const {
  check_dim(dim_, x);
  if (class_weights.size() != classes_.size()) {
    throw std::invalid_argument("class weight vector length does not match class count");
  }
  std::vector<double> terms(classes_.size(), -std::numeric_limits<double>::infinity());
  std::vector<Point> scores(classes_.size());
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    if (!(class_weights[c] > 0.0)) continue;
    auto ls = classes_[c].mixture.log_pdf_and_score(x);
    terms[c] = std::log(class_weights[c]) + ls.log_density;
    scores[c] = std::move(ls.score);
  }
  const double lse = log_sum_exp(terms);
  Point s = Point::Zero(dim_);
  for (std::size_t c = 0; c < classes_.size(); ++c) {
    if (!std::isfinite(terms[c])) continue;
    const double r = std::exp(terms[c] - lse);
    if (r > 0.0) s += r * scores[c];
  }
  return {lse, std::move(s)};
}

double mixture_logpdf(const LabeledMixture& m, std::optional<int> label, const Point& x) {
  check_dim(m.dim(), x);
  if (label) return m.at(*label).mixture.log_pdf(x);
  const auto priors = m.priors();
  return m.weighted_log_pdf_and_score(priors, x).log_density;
}

Point mixture_score(const LabeledMixture& m, std::optional<int> label, const Point& x) {
  check_dim(m.dim(), x);
  if (label) return m.at(*label).mixture.score(x);
  const auto priors = m.priors();
  return m.weighted_log_pdf_and_score(priors, x).score;
}

std::vector<double> class_posterior(const LabeledMixture& m, const Point& x) {
  check_dim(m.dim(), x);
  std::vector<double> logp;
  logp.reserve(static_cast<std::size_t>(m.num_classes()));
  for (const auto& c : m.classes()) logp.push_back(std::log(c.prior) + c.mixture.log_pdf(x));
  const double lse = log_sum_exp(logp);
  std::vector<double> post;
  post.reserve(logp.size());
  double total = 0.0;
  for (double lp : logp) {
    post.push_back(std::exp(lp - lse));
    total += post.back();
  }
  for (double& p : post) p /= total;
  return post;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

Point Rng::normal_vector(int d) {
  Point p(d);
  for (int i = 0; i < d; ++i) p[i] = normal();
  return p;
}

Rng seeded_rng(std::uint64_t seed) { return Rng(seed); }

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

Point sample_class(const LabeledMixture& m, int label, Rng& rng) {
  const auto& comps = m.at(label).mixture.components();
  double u = rng.uniform();
  std::size_t k = 0;
  for (; k + 1 < comps.size(); ++k) {
    if (u < comps[k].weight()) break;
    u -= comps[k].weight();
  }
  return comps[k].transform_standard(rng.normal_vector(m.dim()));
}

}  // namespace dmgd
