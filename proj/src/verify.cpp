// SPDX-License-Identifier: Apache-2.0

#include "dmgd/verify.hpp"

#include "dmgd/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace dmgd {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
}

Eigen::VectorXd random_masses(Rng& rng, int n) {
  Eigen::VectorXd m(n);
  for (int i = 0; i < n; ++i) m[i] = 0.1 + rng.uniform();
  return m / m.sum();
}

std::vector<Point> random_points(Rng& rng, int n, int d, double scale = 1.0) {
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) pts.push_back(scale * rng.normal_vector(d));
  return pts;
}

DiscreteDistribution random_distribution(Rng& rng, int n, int d) {
  DiscreteDistribution out;
  out.points = random_points(rng, n, d);
  const auto m = random_masses(rng, n);
  out.masses.assign(m.data(), m.data() + n);
  return out;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

CheckResult finish(std::string name, bool passed, std::string detail, Clock::time_point start) {
  return {std::move(name), passed, std::move(detail), elapsed(start)};
}

// log p(y | z) under the labeled mixture, computed from densities only.
double log_class_posterior(const LabeledMixture& m, int y, const Point& z) {
  return mixture_logpdf(m, y, z) + std::log(m.at(y).prior) - mixture_logpdf(m, std::nullopt, z);
}

Point central_difference(const std::function<double(const Point&)>& f, const Point& x, double h) {
  Point g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Point up = x;
    Point down = x;
    up[k] += h;
    down[k] -= h;
    g[k] = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

Point project(const Point& p, bool sphere) { return sphere ? Point(p / p.norm()) : p; }

// sum_j gamma_ij d(x, y_j) with the plan row frozen; evaluated from scratch.
double frozen_row_cost(const Matrix& gamma, int i, const Point& x, const DiscreteDistribution& b, CostSpec spec) {
  double total = 0.0;
  const Point px = project(x, spec.project_sphere);
  for (int j = 0; j < b.size(); ++j) {
    const Point diff = px - project(b.points[static_cast<std::size_t>(j)], spec.project_sphere);
    const double d = spec.metric == CostMetric::euclidean ? diff.norm() : diff.squaredNorm();
    total += gamma(i, j) * d;
  }
  return total;
}

}  // namespace

CheckResult check_sinkhorn_exact(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  double worst_rel = 0.0;
  double worst_res = 0.0;
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    const int n = uniform_int(rng, 1, 8);
    const int m = uniform_int(rng, 1, 8);
    const int d = uniform_int(rng, 1, 3);
    const auto a = random_distribution(rng, n, d);
    const auto b = random_distribution(rng, m, d);
    const Matrix cost = cost_matrix(a, b);
    const double exact = exact_small(a, b, cost);
    const auto plan = sinkhorn(a, b, cost, 1e-3, 5000, true, true);
    const double rel = std::abs(plan.value - exact) / (exact + 1e-6);
    const double res = std::max(plan.row_residual, plan.col_residual);
    worst_rel = std::max(worst_rel, rel);
    worst_res = std::max(worst_res, res);
    if (rel > 1e-2 || res > 1e-6) ++failures;
  }
  const double secs = elapsed(start);
  const bool ok = failures == 0 && secs < 10.0;
  return finish("sinkhorn", ok,
                std::to_string(cases) + " cases, failures " + std::to_string(failures) + ", worst rel err " +
                    fmt(worst_rel) + ", worst residual " + fmt(worst_res) + ", " + fmt(secs) + " s",
                start);
}

CheckResult check_exact_1d(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const auto a = random_distribution(rng, uniform_int(rng, 1, 8), 1);
    const auto b = random_distribution(rng, uniform_int(rng, 1, 8), 1);
    const auto metric = c % 2 == 0 ? CostMetric::euclidean : CostMetric::sq_euclidean;
    const double quantile = exact_1d(a, b, metric);
    const double lp = exact_small(a, b, cost_matrix(a, b, {metric, false}));
    worst = std::max(worst, std::abs(quantile - lp));
  }
  return finish("exact_1d", worst <= 1e-9, std::to_string(cases) + " cases, worst abs diff " + fmt(worst), start);
}

CheckResult check_lemma1(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  const AnalyticDenoiser den(toy_mixture(), make_cosine_schedule(50));
  double worst = 0.0;
  for (int c = 0; c < cases; ++c) {
    const int t = uniform_int(rng, 1, den.schedule().steps());
    const int source = uniform_int(rng, 0, den.num_classes() - 1);
    const int y = uniform_int(rng, 0, den.num_classes() - 1);
    const Point x0 = sample_class(den.target(), source, rng);
    const Point z = forward_noise(den.schedule(), x0, t, rng.normal_vector(den.dim()));
    const Point via_cfg = posterior_grad_via_cfg(den, z, t, y);
    const auto& noised = den.noised_target(t);
    const Point fd = central_difference([&](const Point& p) { return log_class_posterior(noised, y, p); }, z, 1e-5);
    const double rel = (via_cfg - fd).norm() / std::max(fd.norm(), 1e-6);
    worst = std::max(worst, rel);
  }
  return finish("lemma1", worst <= 1e-3, std::to_string(cases) + " cases, worst rel err " + fmt(worst), start);
}

CheckResult check_prop1(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  const AnalyticDenoiser den(toy_mixture(), make_cosine_schedule(50));
  const int classes = den.num_classes();
  const double sizes[] = {1e-2, 5e-3, 2.5e-3};
  double lo = 1e300;
  double hi = 0.0;
  int failures = 0;
  for (int c = 0; c < cases; ++c) {
    // Where one class owns the whole posterior the label cannot move the step
    // at all and both terms vanish to rounding; draw until it can.
    int t = 0;
    Point z;
    do {
      t = uniform_int(rng, 2, den.schedule().steps());
      const Point x0 = sample_class(den.target(), uniform_int(rng, 0, classes - 1), rng);
      z = forward_noise(den.schedule(), x0, t, rng.normal_vector(den.dim()));
      const auto post = class_posterior(den.noised_target(t), z);
      if (*std::max_element(post.begin(), post.end()) <= 0.99) break;
    } while (true);
    LabelVector y(classes);
    for (int k = 0; k < classes; ++k) y[k] = 0.2 + rng.uniform();
    y /= y.sum();
    LabelVector dir = rng.normal_vector(classes);
    dir.normalize();

    const Point base = conditional_ddim_step(den, z, t, y);
    double residual[3];
    for (int s = 0; s < 3; ++s) {
      const LabelVector delta = sizes[s] * dir;
      const Point actual = conditional_ddim_step(den, z, t, y + delta) - base;
      residual[s] = (actual - condition_shift(den, z, t, y, delta)).norm();
    }
    for (int s = 0; s < 2; ++s) {
      const double ratio = residual[s] / residual[s + 1];
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      if (!(ratio >= 3.0 && ratio <= 5.0)) ++failures;
    }
  }
  return finish("prop1", failures == 0,
                std::to_string(cases) + " cases, halving ratios in [" + fmt(lo) + ", " + fmt(hi) + "], failures " +
                    std::to_string(failures),
                start);
}

CheckResult check_prop2(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  int failures = 0;
  double worst_gap = -1e300;
  for (int c = 0; c < cases; ++c) {
    const int n = uniform_int(rng, 16, 128);
    const int d = uniform_int(rng, 1, 8);
    std::vector<Point> pts;
    const auto centers = random_points(rng, uniform_int(rng, 1, 6), d, 3.0);
    for (int i = 0; i < n; ++i) pts.push_back(centers[rng.index(centers.size())] + rng.normal_vector(d));
    const double mean_cost = assignment_plan_cost(pts, mean_approx(pts));
    for (int k : {2, 4, 8}) {
      const auto qt = kmeans_approx(pts, k, 100, 10, rng);
      const double gap = assignment_plan_cost(pts, qt) - mean_cost;
      worst_gap = std::max(worst_gap, gap);
      if (gap > 1e-9) ++failures;
    }
  }
  // Tiny instances: the exact LP distance itself, not just the assignment bound.
  int tiny_failures = 0;
  for (int c = 0; c < cases; ++c) {
    const int n = uniform_int(rng, 5, 8);
    const int d = uniform_int(rng, 1, 3);
    const auto pts = random_points(rng, n, d);
    const auto p = DiscreteDistribution::uniform(pts);
    const auto mean = mean_approx(pts);
    const double w_mean = exact_small(p, mean.dist, cost_matrix(p, mean.dist));
    for (int k : {2, 4}) {
      const auto qt = kmeans_approx(pts, k, 100, 10, rng);
      const double w_k = exact_small(p, qt.dist, cost_matrix(p, qt.dist));
      if (w_k > w_mean + 1e-9) ++tiny_failures;
    }
  }
  return finish("prop2", failures == 0 && tiny_failures == 0,
                std::to_string(cases) + " sets x K in {2,4,8}: failures " + std::to_string(failures) +
                    " (worst gap " + fmt(worst_gap) + "); tiny exact failures " + std::to_string(tiny_failures),
                start);
}

CheckResult check_corollary1(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  double worst = -1e300;
  for (int c = 0; c < cases; ++c) {
    const int d = uniform_int(rng, 1, 3);
    const auto s = random_distribution(rng, uniform_int(rng, 2, 8), d);
    const auto t = random_distribution(rng, uniform_int(rng, 2, 8), d);
    const auto q = random_distribution(rng, uniform_int(rng, 2, 8), d);
    const double st = exact_small(s, t, cost_matrix(s, t));
    const double sq = exact_small(s, q, cost_matrix(s, q));
    const double qt = exact_small(q, t, cost_matrix(q, t));
    worst = std::max(worst, st - sq - qt);
  }
  return finish("corollary1", worst <= 1e-6,
                std::to_string(cases) + " triples, max W(S,T) - W(S,Q) - W(Q,T) = " + fmt(worst), start);
}

CheckResult check_ot_gradient(int cases, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed);
  double worst = 0.0;
  const double h = 1e-6;
  for (int c = 0; c < cases; ++c) {
    const int d = uniform_int(rng, 1, 4);
    const CostSpec spec{c % 2 == 0 ? CostMetric::euclidean : CostMetric::sq_euclidean, (c / 2) % 2 == 1};

    // ot_grad_row on an arbitrary plan row.
    const auto a = random_distribution(rng, uniform_int(rng, 1, 6), d);
    const auto b = random_distribution(rng, uniform_int(rng, 1, 6), d);
    const auto plan = sinkhorn(a, b, cost_matrix(a, b, spec), 0.1, 5);
    const int i = uniform_int(rng, 0, a.size() - 1);
    const Point g = ot_grad_row(plan, a, b, i, spec);
    const Point fd = central_difference(
        [&](const Point& x) { return frozen_row_cost(plan.gamma, i, x, b, spec); }, a.points[static_cast<std::size_t>(i)], h);
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));

    // ot_guidance: the new sample's row of the memory + z0 plan.
    DistMatchConfig dm;
    dm.metric = spec.metric;
    dm.project_sphere = spec.project_sphere;
    MemorySet mem(0);
    for (const auto& p : random_points(rng, uniform_int(rng, 0, 5), d)) mem.append(p);
    const Point z0 = rng.normal_vector(d);
    const auto target = random_distribution(rng, uniform_int(rng, 1, 6), d);
    const Point guided = ot_guidance(dm, mem, z0, target);
    std::vector<Point> pts = mem.frozen();
    pts.push_back(z0);
    const auto surrogate = DiscreteDistribution::uniform(pts);
    const auto frozen = sinkhorn(surrogate, target, cost_matrix(surrogate, target, spec), dm.epsilon, dm.iters);
    const int row = surrogate.size() - 1;
    const Point fd2 = central_difference(
        [&](const Point& x) { return frozen_row_cost(frozen.gamma, row, x, target, spec); }, z0, h);
    worst = std::max(worst, (guided - fd2).norm() / std::max(fd2.norm(), 1e-12));
  }
  return finish("ot_gradient", worst <= 1e-4,
                std::to_string(cases) + " cases (row and guidance), worst rel err " + fmt(worst), start);
}

std::vector<std::string> suite_names() {
  return {"sinkhorn", "exact1d", "lemma1", "prop1", "prop2", "corollary1", "otgrad",
          "e2e",      "ablation", "downstream", "determinism"};
}

CheckResult run_suite(const std::string& name) {
  if (name == "sinkhorn") return check_sinkhorn_exact();
  if (name == "exact1d") return check_exact_1d();
  if (name == "lemma1") return check_lemma1();
  if (name == "prop1") return check_prop1();
  if (name == "prop2") return check_prop2();
  if (name == "corollary1") return check_corollary1();
  if (name == "otgrad") return check_ot_gradient();
  if (name == "e2e") return check_end_to_end();
  if (name == "ablation") return check_ablation();
  if (name == "downstream") return check_downstream();
  if (name == "determinism") return check_determinism();
  throw std::invalid_argument("unknown suite '" + name + "'");
}

// ---- experiments ----

LabeledMixture toy_mixture() {
  return parse_run_config(R"(
classes = 3
dim = 2
class.0.components = 4
class.0.component.0.weight = 0.4
class.0.component.0.mean = -0.6 2.6
class.0.component.0.var = 0.04
class.0.component.1.weight = 0.3
class.0.component.1.mean = 0.6 2.6
class.0.component.1.var = 0.04
class.0.component.2.weight = 0.2
class.0.component.2.mean = -0.6 3.8
class.0.component.2.var = 0.04
class.0.component.3.weight = 0.1
class.0.component.3.mean = 0.6 3.8
class.0.component.3.var = 0.04
class.1.components = 4
class.1.component.0.weight = 0.4
class.1.component.0.mean = -2.0 -1.2
class.1.component.0.var = 0.04
class.1.component.1.weight = 0.3
class.1.component.1.mean = -3.2 -1.2
class.1.component.1.var = 0.04
class.1.component.2.weight = 0.2
class.1.component.2.mean = -2.0 -2.4
class.1.component.2.var = 0.04
class.1.component.3.weight = 0.1
class.1.component.3.mean = -3.2 -2.4
class.1.component.3.var = 0.04
class.2.components = 4
class.2.component.0.weight = 0.4
class.2.component.0.mean = 2.0 -1.2
class.2.component.0.var = 0.04
class.2.component.1.weight = 0.3
class.2.component.1.mean = 3.2 -1.2
class.2.component.1.var = 0.04
class.2.component.2.weight = 0.2
class.2.component.2.mean = 2.0 -2.4
class.2.component.2.var = 0.04
class.2.component.3.weight = 0.1
class.2.component.3.mean = 3.2 -2.4
class.2.component.3.var = 0.04
)").mixture.value();
}

DistillConfig unguided_variant(DistillConfig cfg) {
  cfg.dist_match.rho = 0.0;
  return dist_match_variant(cfg);
}

DistillConfig dist_match_variant(DistillConfig cfg) {
  cfg.semantic.beta_n = 0.0;
  cfg.semantic.beta_s = 0.0;
  cfg.semantic.t2 = cfg.steps;
  cfg.semantic.t1 = cfg.steps + 1;
  return cfg;
}

DistillConfig semantic_variant(DistillConfig cfg) {
  cfg.dist_match.rho = 0.0;
  return cfg;
}

ExperimentData make_experiment_data(const LabeledMixture& m, int n_target, int n_heldout, std::uint64_t seed) {
  ExperimentData data;
  data.target = sample_target(m, n_target, seed);
  data.heldout = sample_target(m, n_heldout, derive_seed(seed, 0x5eed));
  return data;
}

MetricReport run_and_evaluate(const LabeledMixture& m, const DistillConfig& cfg, const ExperimentData& data,
                              const EvalConfig& eval) {
  const auto result = distill_dataset(cfg, m, data.target);
  return evaluate(m, result.dataset, data.target, data.heldout, eval);
}

namespace {

DistillConfig experiment_config(std::uint64_t seed, int ipc) {
  DistillConfig cfg;
  cfg.seed = seed;
  cfg.ipc = ipc;
  return cfg;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Ranks (1 = best) with ties sharing the average rank.
std::vector<double> rank_values(const std::vector<double>& v, bool lower_is_better) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double better = 0.0;
    double tied = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (j == i) continue;
      if (v[j] == v[i]) {
        tied += 1.0;
      } else if (lower_is_better ? v[j] < v[i] : v[j] > v[i]) {
        better += 1.0;
      }
    }
    r[i] = 1.0 + better + 0.5 * tied;
  }
  return r;
}

}  // namespace

CheckResult check_end_to_end(int seeds) {
  const auto start = Clock::now();
  const auto m = toy_mixture();
  std::ostringstream detail;
  bool ok = true;
  double alignment_sum = 0.0;
  int runs = 0;
  for (int ipc : {10, 50}) {
    int ot_wins = 0;
    int cov_wins = 0;
    for (int s = 0; s < seeds; ++s) {
      const auto seed = static_cast<std::uint64_t>(s);
      const auto data = make_experiment_data(m, 500, 200, seed);
      const auto cfg = experiment_config(seed, ipc);
      const auto full = run_and_evaluate(m, cfg, data).aggregate;
      const auto base = run_and_evaluate(m, unguided_variant(cfg), data).aggregate;
      ot_wins += full.ot_distance < base.ot_distance ? 1 : 0;
      cov_wins += full.coverage > base.coverage ? 1 : 0;
      alignment_sum += full.alignment_rate;
      ++runs;
    }
    const int need = (8 * seeds + 9) / 10;
    ok = ok && ot_wins >= need && cov_wins >= need;
    detail << "IPC=" << ipc << ": OT lower " << ot_wins << "/" << seeds << ", coverage higher " << cov_wins << "/"
           << seeds << "; ";
  }
  const double alignment = alignment_sum / runs;
  const double secs = elapsed(start);
  ok = ok && alignment >= 0.95 && secs < 300.0;
  detail << "mean alignment " << fmt(alignment) << ", " << fmt(secs) << " s";
  return finish("end_to_end", ok, detail.str(), start);
}

CheckResult check_ablation(int seeds) {
  const auto start = Clock::now();
  const auto m = toy_mixture();
  int dm_wins = 0;
  int sm_wins = 0;
  std::vector<double> full_rank, dm_rank, sm_rank;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const auto data = make_experiment_data(m, 500, 200, seed);
    const auto cfg = experiment_config(seed, 10);
    const auto full = run_and_evaluate(m, cfg, data).aggregate;
    const auto dm = run_and_evaluate(m, dist_match_variant(cfg), data).aggregate;
    const auto sm = run_and_evaluate(m, semantic_variant(cfg), data).aggregate;
    const auto base = run_and_evaluate(m, unguided_variant(cfg), data).aggregate;
    dm_wins += dm.ot_distance < base.ot_distance ? 1 : 0;
    sm_wins += sm.coverage > base.coverage ? 1 : 0;
    const auto ot = rank_values({full.ot_distance, dm.ot_distance, sm.ot_distance}, true);
    const auto cov = rank_values({full.coverage, dm.coverage, sm.coverage}, false);
    full_rank.push_back(ot[0] + cov[0]);
    dm_rank.push_back(ot[1] + cov[1]);
    sm_rank.push_back(ot[2] + cov[2]);
  }
  const int need = (7 * seeds + 9) / 10;
  const double mf = median(full_rank);
  const double md = median(dm_rank);
  const double ms = median(sm_rank);
  const bool ok = dm_wins >= need && sm_wins >= need && mf <= std::max(md, ms);
  std::ostringstream detail;
  detail << "dist-match-only OT wins " << dm_wins << "/" << seeds << ", semantic-only coverage wins " << sm_wins << "/"
         << seeds << ", median combined rank full " << fmt(mf) << " dm " << fmt(md) << " sm " << fmt(ms);
  return finish("ablation", ok, detail.str(), start);
}

CheckResult check_downstream(int seeds) {
  const auto start = Clock::now();
  const auto m = toy_mixture();
  int wins = 0;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const auto data = make_experiment_data(m, 500, 200, seed);
    const auto cfg = experiment_config(seed, 10);
    const auto result = distill_dataset(cfg, m, data.target);
    const auto heldout = LabeledSamples::from_groups(data.heldout);
    const double dmgd = knn_downstream(LabeledSamples::from_groups(result.dataset.per_class), heldout, 1);

    Rng rng(derive_seed(seed, 0xabc));
    std::vector<std::vector<Point>> subset(data.target.size());
    for (std::size_t c = 0; c < data.target.size(); ++c) {
      std::vector<std::size_t> idx(data.target[c].size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.ipc); ++i) {
        std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
        subset[c].push_back(data.target[c][idx[i]]);
      }
    }
    const double random = knn_downstream(LabeledSamples::from_groups(subset), heldout, 1);
    wins += dmgd >= random ? 1 : 0;
  }
  const int need = (7 * seeds + 9) / 10;
  return finish("downstream", wins >= need,
                "1-NN accuracy >= random subset in " + std::to_string(wins) + "/" + std::to_string(seeds) + " seeds",
                start);
}

CheckResult check_determinism() {
  const auto start = Clock::now();
  const auto m = toy_mixture();
  auto cfg = experiment_config(7, 10);
  const auto data = make_experiment_data(m, 500, 200, 7);
  auto render = [&](int jobs) {
    const auto r = distill_dataset(cfg, m, data.target, jobs);
    return format_surrogate_csv(r.dataset) + format_quantized_csv(r.targets) + format_step_log_csv(r.log);
  };
  const auto first = render(1);
  const bool same = first == render(1);
  const bool same_parallel = first == render(3);
  return finish("determinism", same && same_parallel,
                std::string("repeat run ") + (same ? "identical" : "differs") + ", 3 jobs " +
                    (same_parallel ? "identical" : "differs"),
                start);
}

}  // namespace dmgd
