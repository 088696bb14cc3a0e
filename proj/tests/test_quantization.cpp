// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "dmgd/quantization.hpp"

#include <algorithm>
#include <numeric>
#include <cmath>

using namespace dmgd;

namespace {

Point p1(double x) {
  Point p(1);
  p << x;
  return p;
}

std::vector<Point> blobs(Rng& rng, int n, int d) {
  std::vector<Point> out;
  for (int i = 0; i < n; ++i) {
    Point c = Point::Constant(d, 3.0 * static_cast<double>(i % 3));
    out.push_back(c + 0.4 * rng.normal_vector(d));
  }
  return out;
}

// Lloyd from every 2-subset start in 1-D; returns the lowest-inertia fixed point.
std::pair<std::vector<double>, double> brute_two_means(const std::vector<double>& x) {
  std::vector<double> best;
  double best_inertia = INFINITY;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      double c0 = x[i], c1 = x[j];
      for (int it = 0; it < 100; ++it) {
        double s0 = 0, s1 = 0;
        int n0 = 0, n1 = 0;
        for (double v : x) {
          if (std::abs(v - c0) <= std::abs(v - c1)) {
            s0 += v;
            ++n0;
          } else {
            s1 += v;
            ++n1;
          }
        }
        if (n0) c0 = s0 / n0;
        if (n1) c1 = s1 / n1;
      }
      double inertia = 0;
      for (double v : x) inertia += std::min((v - c0) * (v - c0), (v - c1) * (v - c1));
      if (inertia < best_inertia) {
        best_inertia = inertia;
        best = {std::min(c0, c1), std::max(c0, c1)};
      }
    }
  }
  return {best, best_inertia};
}

}  // namespace

TEST_CASE("one cluster per distinct point") {
  Rng rng(1);
  const auto x = blobs(rng, 9, 2);
  const auto q = kmeans_approx(x, 9, 50, 3, rng);
  CHECK(q.num_support() == 9);
  CHECK(q.inertia < 1e-24);
  for (double m : q.dist.masses) CHECK(m == doctest::Approx(1.0 / 9.0));
  for (const auto& p : x) {
    CHECK(std::any_of(q.dist.points.begin(), q.dist.points.end(), [&](const Point& s) { return (s - p).norm() == 0.0; }));
  }
}

TEST_CASE("a single cluster is the sample mean") {
  Rng rng(2);
  const auto x = blobs(rng, 20, 3);
  const auto q = kmeans_approx(x, 1, 50, 2, rng);
  const auto m = mean_approx(x);
  CHECK(q.num_support() == 1);
  CHECK((q.dist.points[0] - m.dist.points[0]).norm() < 1e-12);
  CHECK(q.dist.masses[0] == 1.0);
  CHECK(m.dist.masses[0] == 1.0);
}

TEST_CASE("four-point 1-D example") {
  const std::vector<double> raw = {0.0, 0.1, 0.2, 5.0};
  std::vector<Point> x;
  for (double v : raw) x.push_back(p1(v));
  Rng rng(3);
  const auto q = kmeans_approx(x, 2, 100, 5, rng);
  const auto [oracle, oracle_inertia] = brute_two_means(raw);
  REQUIRE(q.num_support() == 2);
  // Support points come back sorted.
  CHECK(q.dist.points[0][0] == doctest::Approx(oracle[0]).epsilon(1e-12));
  CHECK(q.dist.points[1][0] == doctest::Approx(oracle[1]).epsilon(1e-12));
  CHECK(q.dist.points[0][0] == doctest::Approx(0.1));
  CHECK(q.dist.points[1][0] == doctest::Approx(5.0));
  CHECK(q.dist.masses[0] == doctest::Approx(0.75));
  CHECK(q.dist.masses[1] == doctest::Approx(0.25));
  CHECK(q.inertia == doctest::Approx(oracle_inertia));
}

TEST_CASE("mean baseline") {
  const auto single = mean_approx(std::vector<Point>{p1(2.5)});
  CHECK(single.dist.points[0][0] == 2.5);
  const auto pair = mean_approx(std::vector<Point>{p1(-1.0), p1(1.0)});
  CHECK(pair.dist.points[0][0] == 0.0);
}

TEST_CASE("masses are cluster counts") {
  Rng rng(4);
  const auto x = blobs(rng, 60, 2);
  for (int k : {1, 2, 5, 10}) {
    const auto q = kmeans_approx(x, k, 100, 3, rng);
    double total = 0.0;
    int count_total = 0;
    for (int i = 0; i < k; ++i) {
      const double m = q.dist.masses[static_cast<std::size_t>(i)];
      CHECK(m >= 1.0 / 60.0 - 1e-15);
      CHECK(std::abs(m - q.counts[static_cast<std::size_t>(i)] / 60.0) < 1e-12);
      total += m;
      count_total += q.counts[static_cast<std::size_t>(i)];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(count_total == 60);
    CHECK(q.assignment.size() == 60);
  }
}

TEST_CASE("inertia does not grow with K") {
  Rng rng(5);
  const auto x = blobs(rng, 80, 2);
  double prev = INFINITY;
  for (int k = 1; k <= 12; ++k) {
    Rng r(100 + k);
    const auto q = kmeans_approx(x, k, 200, 8, r);
    CHECK(q.inertia <= prev * (1.0 + 1e-9));
    prev = q.inertia;
  }
}

TEST_CASE("kmeans argument checks") {
  Rng rng(6);
  const std::vector<Point> dup = {p1(1.0), p1(1.0), p1(2.0)};
  CHECK_THROWS_AS(kmeans_approx(dup, 3, 10, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_approx(dup, 0, 10, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_approx(dup, 1, 0, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_approx(std::vector<Point>{}, 1, 10, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_approx(std::vector<Point>{p1(0.0), Point::Zero(2)}, 1, 10, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(parse_quantizer("median"), std::invalid_argument);
  CHECK(parse_quantizer("dbs") == QuantizerKind::dbs);
}

TEST_CASE("density-based sampling") {
  SUBCASE("identical samples") {
    Rng rng(7);
    const std::vector<Point> same(6, p1(4.0));
    const auto q = density_sample_approx(same, 3, 2, rng);
    for (const auto& p : q.dist.points) CHECK(p[0] == 4.0);
    CHECK(std::abs(std::accumulate(q.dist.masses.begin(), q.dist.masses.end(), 0.0) - 1.0) < 1e-12);
  }
  SUBCASE("K = N keeps every sample") {
    Rng rng(8);
    const auto x = blobs(rng, 10, 2);
    const auto q = density_sample_approx(x, 10, 3, rng);
    for (const auto& p : x) {
      CHECK(std::any_of(q.dist.points.begin(), q.dist.points.end(), [&](const Point& s) { return (s - p).norm() == 0.0; }));
    }
  }
  SUBCASE("same seed, same selection") {
    Rng r0(9);
    const auto x = blobs(r0, 30, 2);
    Rng a(10), b(10);
    const auto qa = density_sample_approx(x, 5, 3, a);
    const auto qb = density_sample_approx(x, 5, 3, b);
    for (int i = 0; i < 5; ++i) {
      CHECK(qa.dist.points[static_cast<std::size_t>(i)] == qb.dist.points[static_cast<std::size_t>(i)]);
      CHECK(qa.dist.masses[static_cast<std::size_t>(i)] == qb.dist.masses[static_cast<std::size_t>(i)]);
    }
  }
  SUBCASE("argument checks") {
    Rng rng(11);
    const auto x = blobs(rng, 5, 1);
    CHECK_THROWS_AS(density_sample_approx(x, 6, 2, rng), std::invalid_argument);
    CHECK_THROWS_AS(density_sample_approx(x, 2, 5, rng), std::invalid_argument);
  }
}

TEST_CASE("assignment plan cost") {
  Rng rng(12);
  const auto x = blobs(rng, 12, 2);
  SUBCASE("perfect quantization costs nothing") {
    const auto q = kmeans_approx(x, 12, 10, 1, rng);
    CHECK(assignment_plan_cost(x, q) < 1e-12);
  }
  SUBCASE("single Dirac is the mean distance") {
    const auto q = mean_approx(x);
    double expected = 0.0;
    for (const auto& p : x) expected += (p - q.dist.points[0]).norm() / 12.0;
    CHECK(assignment_plan_cost(x, q) == doctest::Approx(expected).epsilon(1e-12));
    double sq = 0.0;
    for (const auto& p : x) sq += (p - q.dist.points[0]).squaredNorm() / 12.0;
    CHECK(assignment_plan_cost(x, q, CostMetric::sq_euclidean) == doctest::Approx(sq).epsilon(1e-12));
  }
  SUBCASE("upper-bounds the exact transport cost") {
    for (int trial = 0; trial < 30; ++trial) {
      Rng r(200 + trial);
      std::vector<Point> s;
      const int n = 5 + static_cast<int>(r.index(4));
      for (int i = 0; i < n; ++i) s.push_back(r.normal_vector(2));
      const int k = 2 + static_cast<int>(r.index(2));
      const auto q = kmeans_approx(s, k, 100, 3, r);
      const auto src = DiscreteDistribution::uniform(s);
      CHECK(assignment_plan_cost(s, q) >= exact_small(src, q.dist, cost_matrix(src, q.dist)) - 1e-12);
    }
  }
  SUBCASE("rejects a target built from other samples") {
    const auto q = kmeans_approx(x, 3, 10, 1, rng);
    auto other = x;
    other[0][0] += 1.0;
    CHECK_THROWS_AS(assignment_plan_cost(other, q), DataError);
    CHECK_THROWS_AS(assignment_plan_cost(x, density_sample_approx(x, 3, 2, rng)), DataError);
  }
}

TEST_CASE("seeded k-means is reproducible") {
  Rng r0(13);
  const auto x = blobs(r0, 40, 2);
  Rng a(14), b(14);
  const auto qa = kmeans_approx(x, 4, 50, 3, a);
  const auto qb = kmeans_approx(x, 4, 50, 3, b);
  for (int i = 0; i < 4; ++i) CHECK(qa.dist.points[static_cast<std::size_t>(i)] == qb.dist.points[static_cast<std::size_t>(i)]);
  CHECK(qa.inertia == qb.inertia);
}
