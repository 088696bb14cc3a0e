// SPDX-License-Identifier: Apache-2.0
//
// Randomized oracle checks (exact LP, quantile coupling, finite differences)
// and the scaled-down distillation experiments. Shared by `dmgd check` and the
// acceptance binary.

#pragma once

#include "dmgd/metrics.hpp"
#include "dmgd/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dmgd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

CheckResult check_sinkhorn_exact(int cases = 200, std::uint64_t seed = 11);
CheckResult check_exact_1d(int cases = 100, std::uint64_t seed = 12);
CheckResult check_lemma1(int cases = 100, std::uint64_t seed = 13);
CheckResult check_prop1(int cases = 50, std::uint64_t seed = 14);
CheckResult check_prop2(int cases = 200, std::uint64_t seed = 15);
CheckResult check_corollary1(int cases = 100, std::uint64_t seed = 16);
CheckResult check_ot_gradient(int cases = 100, std::uint64_t seed = 17);

/// Names accepted by run_suite.
std::vector<std::string> suite_names();
/// Throws std::invalid_argument for an unknown name.
CheckResult run_suite(const std::string& name);

// ---- scaled-down experiments ----

/// 2-D, 3 classes, 4 Gaussian modes per class (same as configs/toy3x4.cfg).
LabeledMixture toy_mixture();

/// CFG conditional DDIM with fixed one-hot labels and no OT term.
DistillConfig unguided_variant(DistillConfig cfg);
/// OT guidance only: fixed labels.
DistillConfig dist_match_variant(DistillConfig cfg);
/// Dynamic labels only: rho = 0.
DistillConfig semantic_variant(DistillConfig cfg);

struct ExperimentData {
  std::vector<std::vector<Point>> target;   // real samples used for quantization and metrics
  std::vector<std::vector<Point>> heldout;  // k-NN evaluation set
};

ExperimentData make_experiment_data(const LabeledMixture& m, int n_target, int n_heldout, std::uint64_t seed);

MetricReport run_and_evaluate(const LabeledMixture& m, const DistillConfig& cfg, const ExperimentData& data,
                              const EvalConfig& eval = {});

CheckResult check_end_to_end(int seeds = 10);
CheckResult check_ablation(int seeds = 10);
CheckResult check_downstream(int seeds = 10);
CheckResult check_determinism();

}  // namespace dmgd
