// SPDX-License-Identifier: Apache-2.0

#include "dmgd/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <string>

namespace dmgd {

namespace {

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double kth_neighbor_distance(std::span<const Point> pts, std::size_t i, int k, std::vector<double>& scratch) {
  scratch.clear();
  for (std::size_t j = 0; j < pts.size(); ++j) {
    if (j != i) scratch.push_back((pts[i] - pts[j]).norm());
  }
  std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
  return scratch[static_cast<std::size_t>(k - 1)];
}

}  // namespace

LabeledSamples LabeledSamples::from_groups(const std::vector<std::vector<Point>>& per_class) {
  LabeledSamples out;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    for (const auto& p : per_class[c]) {
      out.points.push_back(p);
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

double ot_dataset_distance(const DiscreteDistribution& surrogate, const DiscreteDistribution& target,
                           double epsilon, int iters) {
  surrogate.validate();
  target.validate();
  if (surrogate.dim() != target.dim()) throw std::invalid_argument("ot_dataset_distance: dimension mismatch");
  const Matrix cost = cost_matrix(surrogate, target, {CostMetric::euclidean, false});
  try {
    return sinkhorn(surrogate, target, cost, epsilon, iters, false).value;
  } catch (const SinkhornUnderflow&) {
    return sinkhorn(surrogate, target, cost, epsilon, iters, true).value;
  }
}

double coverage(std::span<const Point> real, std::span<const Point> surrogate, int k_nn) {
  if (k_nn < 1 || static_cast<std::size_t>(k_nn) >= real.size()) {
    throw std::invalid_argument("coverage: need 1 <= k_nn < number of real samples");
  }
  if (surrogate.empty()) return 0.0;
  std::vector<double> scratch;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < real.size(); ++i) {
    const double radius = kth_neighbor_distance(real, i, k_nn, scratch);
    for (const auto& s : surrogate) {
      if (s.size() != real[i].size()) throw std::invalid_argument("coverage: dimension mismatch");
      if ((real[i] - s).norm() <= radius) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(real.size());
}

double diversity(std::span<const Point> samples) {
  if (samples.size() < 2) throw std::invalid_argument("diversity: need at least 2 samples");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (j != i) best = std::min(best, (samples[i] - samples[j]).norm());
    }
    total += best;
  }
  return total / static_cast<double>(samples.size());
}

double alignment_rate(const LabeledMixture& target, const SurrogateDataset& surrogate) {
  std::size_t total = 0;
  std::size_t aligned = 0;
  for (int c = 0; c < surrogate.num_classes(); ++c) {
    for (const auto& p : surrogate.per_class[static_cast<std::size_t>(c)]) {
      ++total;
      if (static_cast<int>(argmax(class_posterior(target, p))) == c) ++aligned;
    }
  }
  return total ? static_cast<double>(aligned) / static_cast<double>(total) : 0.0;
}

std::vector<int> knn_predict(const LabeledSamples& reference, std::span<const Point> queries, int k) {
  if (reference.points.size() != reference.labels.size()) throw std::invalid_argument("knn: label count mismatch");
  if (k < 1 || static_cast<std::size_t>(k) > reference.size()) {
    throw std::invalid_argument("knn: need 1 <= k <= reference size");
  }
  std::vector<int> out;
  out.reserve(queries.size());
  std::vector<std::pair<double, std::size_t>> dist(reference.size());
  for (const auto& q : queries) {
    for (std::size_t i = 0; i < reference.size(); ++i) dist[i] = {(q - reference.points[i]).norm(), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::map<int, int> votes;
    for (int r = 0; r < k; ++r) ++votes[reference.labels[dist[static_cast<std::size_t>(r)].second]];
    int best_label = votes.begin()->first;
    int best_votes = votes.begin()->second;
    for (const auto& [label, n] : votes) {
      if (n > best_votes) {
        best_votes = n;
        best_label = label;
      }
    }
    out.push_back(best_label);
  }
  return out;
}

double knn_downstream(const LabeledSamples& surrogate, const LabeledSamples& heldout, int k) {
  if (heldout.size() == 0) throw std::invalid_argument("knn_downstream: empty held-out set");
  const auto pred = knn_predict(surrogate, heldout.points, k);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == heldout.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(heldout.size());
}

MetricReport evaluate(const LabeledMixture& target, const SurrogateDataset& surrogate,
                      const std::vector<std::vector<Point>>& real_per_class,
                      const std::vector<std::vector<Point>>& heldout_per_class, const EvalConfig& cfg) {
  const int classes = surrogate.num_classes();
  if (classes != target.num_classes() || static_cast<int>(real_per_class.size()) != classes ||
      static_cast<int>(heldout_per_class.size()) != classes) {
    throw DataError("evaluate: class counts of surrogate, target and held-out data differ");
  }
  if (surrogate.dim != target.dim()) throw DataError("evaluate: surrogate dimension differs from target");

  const LabeledSamples reference = LabeledSamples::from_groups(surrogate.per_class);
  MetricReport report;
  for (int c = 0; c < classes; ++c) {
    const auto& surr = surrogate.per_class[static_cast<std::size_t>(c)];
    const auto& real = real_per_class[static_cast<std::size_t>(c)];
    const auto& held = heldout_per_class[static_cast<std::size_t>(c)];
    if (surr.empty() || real.empty()) throw DataError("evaluate: class " + std::to_string(c) + " is empty");
    ClassMetrics m;
    m.n_surrogate = surr.size();
    m.n_real = real.size();
    m.n_heldout = held.size();
    m.ot_distance = ot_dataset_distance(DiscreteDistribution::uniform(surr), DiscreteDistribution::uniform(real),
                                        cfg.epsilon, cfg.iters);
    m.coverage = coverage(real, surr, cfg.coverage_knn);
    m.diversity = diversity(surr);
    std::size_t aligned = 0;
    for (const auto& p : surr) aligned += static_cast<int>(argmax(class_posterior(target, p))) == c ? 1 : 0;
    m.alignment_rate = static_cast<double>(aligned) / static_cast<double>(surr.size());
    if (!held.empty()) {
      const auto pred = knn_predict(reference, held, cfg.knn_k);
      m.knn_accuracy = static_cast<double>(std::count(pred.begin(), pred.end(), c)) / static_cast<double>(held.size());
    }
    report.per_class.push_back(m);
  }

  auto weighted = [&](auto field, auto weight) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& m : report.per_class) {
      num += static_cast<double>(m.*weight) * (m.*field);
      den += static_cast<double>(m.*weight);
    }
    return den > 0.0 ? num / den : 0.0;
  };
  auto& agg = report.aggregate;
  for (const auto& m : report.per_class) {
    agg.n_surrogate += m.n_surrogate;
    agg.n_real += m.n_real;
    agg.n_heldout += m.n_heldout;
  }
  agg.ot_distance = weighted(&ClassMetrics::ot_distance, &ClassMetrics::n_surrogate);
  agg.diversity = weighted(&ClassMetrics::diversity, &ClassMetrics::n_surrogate);
  agg.alignment_rate = weighted(&ClassMetrics::alignment_rate, &ClassMetrics::n_surrogate);
  agg.coverage = weighted(&ClassMetrics::coverage, &ClassMetrics::n_real);
  agg.knn_accuracy = weighted(&ClassMetrics::knn_accuracy, &ClassMetrics::n_heldout);
  return report;
}

}  // namespace dmgd
