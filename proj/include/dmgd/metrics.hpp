// SPDX-License-Identifier: Apache-2.0
//
// Evaluation of a surrogate dataset against the target: OT distance,
// coverage, diversity, semantic alignment and a k-NN downstream proxy.

#pragma once

#include "dmgd/numerics.hpp"
#include "dmgd/pipeline.hpp"
#include "dmgd/transport.hpp"

#include <span>
#include <vector>

namespace dmgd {

struct LabeledSamples {
  std::vector<Point> points;
  std::vector<int> labels;

  std::size_t size() const { return points.size(); }
  static LabeledSamples from_groups(const std::vector<std::vector<Point>>& per_class);
};

struct EvalConfig {
  double epsilon = 0.05;
  int iters = 1000;
  int coverage_knn = 5;
  int knn_k = 1;
};

struct ClassMetrics {
  double ot_distance = 0.0;
  double coverage = 0.0;
  double diversity = 0.0;
  double alignment_rate = 0.0;
  double knn_accuracy = 0.0;
  std::size_t n_surrogate = 0;
  std::size_t n_real = 0;
  std::size_t n_heldout = 0;
};

/// Per-class blocks plus an aggregate. Each aggregate field is the mean of
/// the per-class values weighted by the number of samples it averages over
/// (surrogate count for OT distance, diversity and alignment; real count for
/// coverage; held-out count for k-NN accuracy).
struct MetricReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics aggregate;
};

/// Entropic OT cost (euclidean ground cost) between the two distributions.
/// Uses scaling iterations, falling back to the log domain on underflow.
double ot_dataset_distance(const DiscreteDistribution& surrogate, const DiscreteDistribution& target,
                           double epsilon, int iters);

/// Fraction of real samples whose closed k-NN ball (radius = distance to the
/// k-th nearest other real sample) contains at least one surrogate sample.
double coverage(std::span<const Point> real, std::span<const Point> surrogate, int k_nn);

/// Mean over samples of the distance to the nearest other sample.
double diversity(std::span<const Point> samples);

/// Fraction of surrogate samples whose posterior argmax equals their class.
double alignment_rate(const LabeledMixture& target, const SurrogateDataset& surrogate);

/// k-NN predictions (euclidean, majority vote, ties to the smallest label).
std::vector<int> knn_predict(const LabeledSamples& reference, std::span<const Point> queries, int k);

double knn_downstream(const LabeledSamples& surrogate, const LabeledSamples& heldout, int k);

MetricReport evaluate(const LabeledMixture& target, const SurrogateDataset& surrogate,
                      const std::vector<std::vector<Point>>& real_per_class,
                      const std::vector<std::vector<Point>>& heldout_per_class, const EvalConfig& cfg);

}  // namespace dmgd
