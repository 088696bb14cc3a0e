// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "dmgd/io.hpp"
#include "dmgd/verify.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

using namespace dmgd;

TEST_CASE("shortest decimal round trip") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.index(40)) - 20);
    CHECK(parse_double(format_double(v)) == v);
  }
  for (double v : {0.0, -0.0, 1.0, 0.1, 1e-300, 5e-324, std::numeric_limits<double>::max()}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(parse_double("+2.5") == 2.5);
  CHECK_THROWS_AS(parse_double("1.5x"), DataError);
  CHECK_THROWS_AS(parse_double(""), DataError);
}

TEST_CASE("labeled CSV round trip is bit-exact") {
  Rng rng(2);
  LabeledSamples s;
  for (int i = 0; i < 50; ++i) {
    s.points.push_back(rng.normal_vector(3) * 1e3);
    s.labels.push_back(static_cast<int>(rng.index(4)));
  }
  const std::string text = format_labeled_csv(s, 3);
  CHECK(text.rfind("label,x1,x2,x3\n", 0) == 0);
  int dim = 0;
  const auto back = parse_labeled_csv(text, &dim);
  CHECK(dim == 3);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back.labels[i] == s.labels[i]);
    CHECK(back.points[i] == s.points[i]);
  }
  CHECK(format_labeled_csv(back, 3) == text);
}

TEST_CASE("malformed CSV is a data error") {
  CHECK_THROWS_AS(parse_labeled_csv("label,x1\n0,1.0,2.0\n"), DataError);
  CHECK_THROWS_AS(parse_labeled_csv("label,x1\n0,abc\n"), DataError);
  CHECK_THROWS_AS(parse_labeled_csv("foo,x1\n0,1\n"), DataError);
  CHECK_THROWS_AS(parse_labeled_csv("label,x1\n-1,1\n"), DataError);
}

TEST_CASE("grouping by label") {
  LabeledSamples s;
  Point p(1);
  for (int l : {2, 0, 2, 1}) {
    p[0] = l;
    s.points.push_back(p);
    s.labels.push_back(l);
  }
  const auto g = group_by_label(s);
  REQUIRE(g.size() == 3);
  CHECK(g[2].size() == 2);
  CHECK(group_by_label(s, 5).size() == 5);
}

TEST_CASE("quantized CSV round trip") {
  Rng rng(3);
  std::vector<Point> x;
  for (int i = 0; i < 30; ++i) x.push_back(rng.normal_vector(2));
  std::vector<QuantizedTarget> q = {kmeans_approx(x, 3, 50, 2, rng), mean_approx(x)};
  const auto back = parse_quantized_csv(format_quantized_csv(q));
  REQUIRE(back.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    REQUIRE(back[c].size() == q[c].dist.size());
    for (int i = 0; i < back[c].size(); ++i) {
      CHECK(back[c].points[static_cast<std::size_t>(i)] == q[c].dist.points[static_cast<std::size_t>(i)]);
      CHECK(back[c].masses[static_cast<std::size_t>(i)] == q[c].dist.masses[static_cast<std::size_t>(i)]);
    }
  }
}

TEST_CASE("step log header") {
  StepRecord r;
  r.label = 1;
  r.sample = 2;
  r.t = 33;
  r.rho_t = 0.25;
  const std::string text = format_step_log_csv({r});
  CHECK(text == "label,sample,t,rho_t,ot_value,grad_norm,label_fallback\n1,2,33,0.25,0,0,0\n");
}

TEST_CASE("config parsing") {
  const std::string text = read_text_file(std::filesystem::path(DMGD_SOURCE_DIR) / "configs" / "toy3x4.cfg");
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.distill.num_classes == 3);
  CHECK(cfg.distill.ipc == 10);
  CHECK(cfg.distill.n_target == 500);
  REQUIRE(cfg.mixture.has_value());
  CHECK(cfg.mixture->dim() == 2);

  SUBCASE("matches the built-in toy mixture") {
    const auto toy = toy_mixture();
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
      const Point z = 3.0 * rng.normal_vector(2);
      CHECK(mixture_logpdf(*cfg.mixture, std::nullopt, z) == doctest::Approx(mixture_logpdf(toy, std::nullopt, z)).epsilon(1e-14));
    }
  }
  SUBCASE("format then parse is a fixed point") {
    const std::string once = format_run_config(cfg);
    const RunConfig again = parse_run_config(once);
    CHECK(format_run_config(again) == once);
    CHECK(config_fingerprint(again.distill) == config_fingerprint(cfg.distill));
  }
  SUBCASE("overrides") {
    auto entries = parse_config_entries(text);
    entries["rho"] = "0.5";
    entries["metric"] = "sq_euclidean";
    entries["window_lo"] = "20";
    const auto c = build_run_config(entries);
    CHECK(c.distill.dist_match.rho == 0.5);
    CHECK(c.distill.dist_match.metric == CostMetric::sq_euclidean);
    CHECK(c.distill.dist_match.window_lo == 20);
    CHECK(config_fingerprint(c.distill) != config_fingerprint(cfg.distill));
  }
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_run_config("ipc = 3\nbogus_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("ipc = 3\nipc = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("ipc 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("ipc = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("ipc = three\n"), std::exception);
  CHECK_NOTHROW(parse_run_config("# only a comment\n\nipc = 2   # trailing\n"));
}

TEST_CASE("hashing helpers") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("metrics JSON round trip") {
  MetricReport r;
  Rng rng(5);
  for (int c = 0; c < 3; ++c) {
    ClassMetrics m;
    m.ot_distance = rng.uniform();
    m.coverage = rng.uniform();
    m.diversity = rng.uniform() * 1e-7;
    m.alignment_rate = 1.0 / 3.0;
    m.knn_accuracy = rng.uniform();
    m.n_surrogate = 10;
    m.n_real = 500;
    m.n_heldout = 200 + static_cast<std::size_t>(c);
    r.per_class.push_back(m);
  }
  r.aggregate = r.per_class[1];
  const std::string text = format_metric_report(r);
  const auto back = parse_metric_report(text);
  REQUIRE(back.per_class.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(back.per_class[c].ot_distance == r.per_class[c].ot_distance);
    CHECK(back.per_class[c].coverage == r.per_class[c].coverage);
    CHECK(back.per_class[c].diversity == r.per_class[c].diversity);
    CHECK(back.per_class[c].alignment_rate == r.per_class[c].alignment_rate);
    CHECK(back.per_class[c].knn_accuracy == r.per_class[c].knn_accuracy);
    CHECK(back.per_class[c].n_heldout == r.per_class[c].n_heldout);
  }
  CHECK(back.aggregate.coverage == r.aggregate.coverage);
  CHECK(format_metric_report(back) == text);
  CHECK_THROWS_AS(parse_metric_report("{not json"), DataError);
}

TEST_CASE("file helpers") {
  const auto dir = std::filesystem::temp_directory_path() / "dmgd_io_test";
  std::filesystem::create_directories(dir);
  write_text_file(dir / "a.txt", "hello\n");
  CHECK(read_text_file(dir / "a.txt") == "hello\n");
  CHECK_FALSE(std::filesystem::exists(dir / "a.txt.tmp"));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), DataError);
}
