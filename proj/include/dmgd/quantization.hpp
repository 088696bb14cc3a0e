// SPDX-License-Identifier: Apache-2.0
//
// Discrete approximations of a class-conditional sample set: K-means support
// points with cluster-count masses, the single-Dirac mean baseline, and
// density-based random sampling.

#pragma once

#include "dmgd/numerics.hpp"
#include "dmgd/transport.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dmgd {

struct QuantizedTarget {
  DiscreteDistribution dist;
  /// Cluster index of every input sample. Empty for density sampling, whose
  /// masses do not come from a partition.
  std::vector<int> assignment;
  std::vector<int> counts;
  /// Sum of squared distances from samples to their assigned support point.
  double inertia = 0.0;
  /// Fingerprint of the samples the target was built from.
  std::uint64_t provenance = 0;

  int num_support() const { return dist.size(); }
};

enum class QuantizerKind { kmeans, mean, dbs };

const char* to_string(QuantizerKind kind);
QuantizerKind parse_quantizer(const std::string& name);

/// Order-sensitive hash of the sample coordinates.
std::uint64_t sample_fingerprint(std::span<const Point> samples);

/// Lloyd iterations from k-means++ seeds, best of n_init restarts by inertia.
/// Empty clusters are reseeded to the point farthest from its centroid.
/// Support points are returned sorted lexicographically.
QuantizedTarget kmeans_approx(std::span<const Point> samples, int k, int max_iter, int n_init, Rng& rng);

/// A single Dirac at the sample mean.
QuantizedTarget mean_approx(std::span<const Point> samples);

/// Draws k support points without replacement with probability proportional
/// to a k-NN density estimate 1 / r^d; masses are the selected densities
/// renormalized.
QuantizedTarget density_sample_approx(std::span<const Point> samples, int k, int k_nn, Rng& rng);

/// Cost of the feasible plan that sends each sample's 1/N mass to its
/// cluster's support point. Upper-bounds W(samples, qt.dist).
double assignment_plan_cost(std::span<const Point> samples, const QuantizedTarget& qt,
                            CostMetric metric = CostMetric::euclidean);

}  // namespace dmgd
