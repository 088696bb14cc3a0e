// SPDX-License-Identifier: Apache-2.0

#include "dmgd/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

namespace dmgd {

namespace {

void check_samples(std::span<const Point> samples) {
  if (samples.empty()) throw std::invalid_argument("quantization: empty sample set");
  const auto d = samples.front().size();
  if (d < 1) throw std::invalid_argument("quantization: zero-dimensional samples");
  for (const auto& p : samples) {
    if (p.size() != d) throw std::invalid_argument("quantization: mixed sample dimensions");
    if (!p.allFinite()) throw std::invalid_argument("quantization: non-finite sample");
  }
}

bool lex_less(const Point& a, const Point& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

std::size_t count_distinct(std::span<const Point> samples) {
  std::vector<const Point*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& p : samples) ptrs.push_back(&p);
  std::sort(ptrs.begin(), ptrs.end(), [](const Point* a, const Point* b) { return lex_less(*a, *b); });
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    if (i == 0 || *ptrs[i] != *ptrs[i - 1]) ++distinct;
  }
  return distinct;
}

/// Means of each cluster, accumulated in sample order.
std::vector<Point> cluster_means(std::span<const Point> samples, const std::vector<int>& assign, int k) {
  const auto d = samples.front().size();
  std::vector<Point> sums(static_cast<std::size_t>(k), Point::Zero(d));
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    sums[static_cast<std::size_t>(assign[i])] += samples[i];
    ++counts[static_cast<std::size_t>(assign[i])];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) sums[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
  }
  return sums;
}

int nearest(const Point& x, const std::vector<Point>& centers, double* sq_dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double d = (x - centers[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (sq_dist) *sq_dist = best_d;
  return best;
}

std::vector<Point> kmeanspp_seeds(std::span<const Point> samples, int k, Rng& rng) {
  std::vector<Point> centers;
  centers.reserve(static_cast<std::size_t>(k));
  centers.push_back(samples[rng.index(samples.size())]);
  std::vector<double> d2(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) d2[i] = (samples[i] - centers[0]).squaredNorm();
  while (static_cast<int>(centers.size()) < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = samples.size() - 1;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
      // Guard against rounding landing on an already-chosen point.
      while (d2[pick] <= 0.0) pick = (pick + samples.size() - 1) % samples.size();
    }
    centers.push_back(samples[pick]);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      d2[i] = std::min(d2[i], (samples[i] - centers.back()).squaredNorm());
    }
  }
  return centers;
}

struct LloydResult {
  std::vector<Point> centers;
  std::vector<int> assignment;
  double inertia = 0.0;
};

LloydResult lloyd(std::span<const Point> samples, std::vector<Point> centers, int max_iter) {
  const int k = static_cast<int>(centers.size());
  std::vector<int> assign(samples.size(), -1);
  std::vector<int> prev;
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < samples.size(); ++i) assign[i] = nearest(samples[i], centers);

    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assign) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = samples.size();
      double far_d = -1.0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (counts[static_cast<std::size_t>(assign[i])] <= 1) continue;
        const double d = (samples[i] - centers[static_cast<std::size_t>(assign[i])]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == samples.size()) break;
      --counts[static_cast<std::size_t>(assign[far])];
      assign[far] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      centers[static_cast<std::size_t>(c)] = samples[far];
    }

    centers = cluster_means(samples, assign, k);
    if (assign == prev) break;
    prev = assign;
  }
  LloydResult out;
  out.centers = std::move(centers);
  out.assignment = std::move(assign);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.inertia += (samples[i] - out.centers[static_cast<std::size_t>(out.assignment[i])]).squaredNorm();
  }
  return out;
}

QuantizedTarget from_partition(std::span<const Point> samples, std::vector<Point> centers,
                               std::vector<int> assignment, double inertia) {
  const int k = static_cast<int>(centers.size());
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return lex_less(centers[static_cast<std::size_t>(a)], centers[static_cast<std::size_t>(b)]);
  });
  std::vector<int> rank(static_cast<std::size_t>(k));
  for (int r = 0; r < k; ++r) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r;

  QuantizedTarget qt;
  qt.counts.assign(static_cast<std::size_t>(k), 0);
  qt.assignment.resize(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const int r = rank[static_cast<std::size_t>(assignment[i])];
    qt.assignment[i] = r;
    ++qt.counts[static_cast<std::size_t>(r)];
  }
  const double n = static_cast<double>(samples.size());
  for (int r = 0; r < k; ++r) {
    qt.dist.points.push_back(std::move(centers[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]));
    qt.dist.masses.push_back(static_cast<double>(qt.counts[static_cast<std::size_t>(r)]) / n);
  }
  qt.inertia = inertia;
  qt.provenance = sample_fingerprint(samples);
  return qt;
}

}  // namespace

const char* to_string(QuantizerKind kind) {
  switch (kind) {
    case QuantizerKind::kmeans: return "kmeans";
    case QuantizerKind::mean: return "mean";
    case QuantizerKind::dbs: return "dbs";
  }
  return "kmeans";
}

QuantizerKind parse_quantizer(const std::string& name) {
  if (name == "kmeans") return QuantizerKind::kmeans;
  if (name == "mean") return QuantizerKind::mean;
  if (name == "dbs") return QuantizerKind::dbs;
  throw std::invalid_argument("unknown quantizer '" + name + "'");
}

std::uint64_t sample_fingerprint(std::span<const Point> samples) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t n = samples.size();
  feed(&n, sizeof n);
  for (const auto& p : samples) {
    const std::uint64_t d = static_cast<std::uint64_t>(p.size());
    feed(&d, sizeof d);
    feed(p.data(), sizeof(double) * static_cast<std::size_t>(p.size()));
  }
  return h;
}

QuantizedTarget kmeans_approx(std::span<const Point> samples, int k, int max_iter, int n_init, Rng& rng) {
  check_samples(samples);
  if (k < 1) throw std::invalid_argument("kmeans_approx: K must be >= 1");
  if (max_iter < 1) throw std::invalid_argument("kmeans_approx: max_iter must be >= 1");
  if (n_init < 1) throw std::invalid_argument("kmeans_approx: n_init must be >= 1");
  if (static_cast<std::size_t>(k) > count_distinct(samples)) {
    throw std::invalid_argument("kmeans_approx: K exceeds the number of distinct samples");
  }
  LloydResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < n_init; ++run) {
    auto result = lloyd(samples, kmeanspp_seeds(samples, k, rng), max_iter);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return from_partition(samples, std::move(best.centers), std::move(best.assignment), best.inertia);
}

QuantizedTarget mean_approx(std::span<const Point> samples) {
  check_samples(samples);
  std::vector<int> assign(samples.size(), 0);
  auto centers = cluster_means(samples, assign, 1);
  double inertia = 0.0;
  for (const auto& p : samples) inertia += (p - centers[0]).squaredNorm();
  return from_partition(samples, std::move(centers), std::move(assign), inertia);
}

QuantizedTarget density_sample_approx(std::span<const Point> samples, int k, int k_nn, Rng& rng) {
  check_samples(samples);
  const std::size_t n = samples.size();
  if (k < 1 || static_cast<std::size_t>(k) > n) throw std::invalid_argument("density_sample_approx: need 1 <= K <= N");
  if (k_nn < 1 || static_cast<std::size_t>(k_nn) >= n) {
    throw std::invalid_argument("density_sample_approx: need 1 <= k_nn < N");
  }
  const double d = static_cast<double>(samples.front().size());

  std::vector<double> radius(n);
  std::vector<double> dists;
  dists.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dists.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dists.push_back((samples[i] - samples[j]).norm());
    }
    std::nth_element(dists.begin(), dists.begin() + (k_nn - 1), dists.end());
    radius[i] = dists[static_cast<std::size_t>(k_nn - 1)];
  }
  // Density 1/r^d in log space, relative to the densest sample. Zero radii
  // (duplicates) are floored so identical points share the top density.
  const double r_max = *std::max_element(radius.begin(), radius.end());
  const double floor = 1e-12 * (r_max > 0.0 ? r_max : 1.0);
  double r_min = std::numeric_limits<double>::infinity();
  for (double& r : radius) {
    r = std::max(r, floor);
    r_min = std::min(r_min, r);
  }
  std::vector<double> density(n);
  for (std::size_t i = 0; i < n; ++i) density[i] = std::exp(-d * (std::log(radius[i]) - std::log(r_min)));

  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  for (int draw = 0; draw < k; ++draw) {
    double total = 0.0;
    for (std::size_t idx : pool) total += density[idx];
    std::size_t pos = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pos = pool.size() - 1;
      for (std::size_t p = 0; p < pool.size(); ++p) {
        if (u < density[pool[p]]) {
          pos = p;
          break;
        }
        u -= density[pool[p]];
      }
    } else {
      pos = rng.index(pool.size());
    }
    chosen.push_back(pool[pos]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  std::sort(chosen.begin(), chosen.end());

  QuantizedTarget qt;
  double mass_total = 0.0;
  for (std::size_t idx : chosen) mass_total += density[idx];
  for (std::size_t idx : chosen) {
    qt.dist.points.push_back(samples[idx]);
    qt.dist.masses.push_back(mass_total > 0.0 ? density[idx] / mass_total : 1.0 / static_cast<double>(k));
  }
  qt.counts.assign(static_cast<std::size_t>(k), 0);
  for (const auto& p : samples) {
    double sq = 0.0;
    nearest(p, qt.dist.points, &sq);
    qt.inertia += sq;
  }
  qt.provenance = sample_fingerprint(samples);
  return qt;
}

double assignment_plan_cost(std::span<const Point> samples, const QuantizedTarget& qt, CostMetric metric) {
  check_samples(samples);
  if (qt.assignment.size() != samples.size() || qt.provenance != sample_fingerprint(samples)) {
    throw DataError("assignment_plan_cost: quantized target was not built from these samples");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += ground_cost(samples[i], qt.dist.points[static_cast<std::size_t>(qt.assignment[i])], metric);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace dmgd
