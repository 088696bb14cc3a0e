// SPDX-License-Identifier: Apache-2.0
//
// End-to-end distillation: per-class quantization of the target samples, then
// a greedy loop that synthesizes one surrogate sample at a time with dual
// (semantic + distribution) guidance, freezing each finished sample into the
// class memory set.

#pragma once

#include "dmgd/denoiser.hpp"
#include "dmgd/guidance.hpp"
#include "dmgd/quantization.hpp"
#include "dmgd/semantic.hpp"

#include <cstdint>
#include <vector>

namespace dmgd {

struct DistillConfig {
  int num_classes = 3;
  int ipc = 10;
  int steps = 50;
  double schedule_offset = 0.008;
  double eta = 0.0;
  std::uint64_t seed = 0;
  SemanticConfig semantic;
  DistMatchConfig dist_match;
  QuantizerKind quantizer = QuantizerKind::kmeans;
  int support_points = 10;
  int kmeans_max_iter = 100;
  int kmeans_n_init = 10;
  int dbs_knn = 5;
  int n_target = 500;

  void validate() const;
};

/// Surrogate samples grouped by class, with the provenance needed to rebuild them.
struct SurrogateDataset {
  int dim = 0;
  std::vector<std::vector<Point>> per_class;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  int num_classes() const { return static_cast<int>(per_class.size()); }
  std::size_t total_size() const;
};

/// Seed of class c's stream. Every random choice for class c derives from it.
std::uint64_t class_seed(std::uint64_t seed, int c);

/// N draws per class from the mixture, each class on its own stream.
std::vector<std::vector<Point>> sample_target(const LabeledMixture& m, int n_per_class, std::uint64_t seed);

QuantizedTarget quantize_class(const DistillConfig& cfg, std::span<const Point> samples,
                               std::uint64_t class_stream_seed);

struct ClassRun {
  std::vector<Point> samples;
  QuantizedTarget target;
  std::vector<StepRecord> log;
};

/// IPC guided reverse-diffusion draws for class c. Sample n starts from its
/// own noise stream so runs that differ only in guidance stay paired.
ClassRun distill_class(const DistillConfig& cfg, const AnalyticDenoiser& den, int c,
                       std::span<const Point> target_samples, std::uint64_t class_stream_seed);

struct DistillResult {
  SurrogateDataset dataset;
  std::vector<QuantizedTarget> targets;
  std::vector<StepRecord> log;  // class order, then sample, then t descending
};

/// All classes. Classes run on up to `jobs` threads; results merge in class order.
DistillResult distill_dataset(const DistillConfig& cfg, const LabeledMixture& target,
                              const std::vector<std::vector<Point>>& target_samples, int jobs = 1);

}  // namespace dmgd
