// SPDX-License-Identifier: Apache-2.0

#include "dmgd/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace dmgd {

namespace {

// Accelerated log-domain mode: share of the budget spent lowering epsilon,
// and the over-relaxation weight of each potential update.
constexpr double kAnnealShare = 0.5;
constexpr double kRelaxation = 1.95;

constexpr double kMassTol = 1e-9;
constexpr int kExactMaxCells = 64;

Point project_unit(const Point& p) {
  const double n = p.norm();
  if (!(n > 0.0)) throw std::invalid_argument("cost_matrix: zero-norm point under sphere projection");
  return p / n;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

void fill_plan_stats(TransportPlan& plan, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  plan.value = (plan.gamma.array() * plan.cost.array()).sum();
  plan.row_residual = max_abs(plan.gamma.rowwise().sum() - a);
  plan.col_residual = max_abs(plan.gamma.colwise().sum().transpose() - b);
}

void check_problem(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Matrix& cost) {
  if (a.size() < 1 || b.size() < 1) throw std::invalid_argument("transport: empty marginal");
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw std::invalid_argument("transport: cost matrix shape does not match marginals");
  }
  if (!cost.allFinite()) throw NumericalError("transport: non-finite cost matrix");
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any()) {
    throw std::invalid_argument("transport: negative mass");
  }
}

}  // namespace

DiscreteDistribution DiscreteDistribution::uniform(std::vector<Point> points) {
  DiscreteDistribution d;
  const double w = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
  d.masses.assign(points.size(), w);
  d.points = std::move(points);
  return d;
}

Eigen::VectorXd DiscreteDistribution::mass_vector() const {
  return Eigen::Map<const Eigen::VectorXd>(masses.data(), static_cast<Eigen::Index>(masses.size()));
}

void DiscreteDistribution::validate() const {
  if (points.empty()) throw std::invalid_argument("DiscreteDistribution: empty support");
  if (points.size() != masses.size()) throw std::invalid_argument("DiscreteDistribution: length mismatch");
  const auto d = points.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != d) throw std::invalid_argument("DiscreteDistribution: mixed dimensions");
    if (!points[i].allFinite()) throw std::invalid_argument("DiscreteDistribution: non-finite point");
    if (!(masses[i] >= 0.0)) throw std::invalid_argument("DiscreteDistribution: negative mass");
    total += masses[i];
  }
  if (std::abs(total - 1.0) > kMassTol) throw std::invalid_argument("DiscreteDistribution: masses must sum to 1");
}

const char* to_string(CostMetric metric) {
  return metric == CostMetric::euclidean ? "euclidean" : "sq_euclidean";
}

CostMetric parse_cost_metric(const std::string& name) {
  if (name == "euclidean") return CostMetric::euclidean;
  if (name == "sq_euclidean") return CostMetric::sq_euclidean;
  throw std::invalid_argument("unknown cost metric '" + name + "'");
}

double ground_cost(const Point& x, const Point& y, CostMetric metric) {
  const double sq = (x - y).squaredNorm();
  return metric == CostMetric::euclidean ? std::sqrt(sq) : sq;
}

Matrix cost_matrix(const DiscreteDistribution& a, const DiscreteDistribution& b, CostSpec spec) {
  if (a.size() > 0 && b.size() > 0 && a.dim() != b.dim()) {
    throw std::invalid_argument("cost_matrix: dimension mismatch");
  }
  Matrix c(a.size(), b.size());
  std::vector<Point> bp = b.points;
  if (spec.project_sphere) {
    for (auto& p : bp) p = project_unit(p);
  }
  for (int i = 0; i < a.size(); ++i) {
    const Point x = spec.project_sphere ? project_unit(a.points[i]) : a.points[i];
    for (int j = 0; j < b.size(); ++j) c(i, j) = ground_cost(x, bp[j], spec.metric);
  }
  return c;
}

TransportPlan sinkhorn(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Matrix& cost,
                       double epsilon, int iters, bool log_domain, bool accelerate) {
  check_problem(a, b, cost);
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  if (iters < 1) throw std::invalid_argument("sinkhorn: iters must be >= 1");
  if (accelerate && !log_domain) throw std::invalid_argument("sinkhorn: acceleration needs the log domain");
  const auto n = a.size();
  const auto m = b.size();

  TransportPlan plan;
  plan.cost = cost;

  if (!log_domain) {
    // Eigen's vectorized exp clamps near the denormal range instead of
    // returning 0, which would hide underflow.
    const Matrix kernel = (-cost / epsilon).unaryExpr([](double x) { return std::exp(x); });
    Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
    auto scale = [&](const Eigen::VectorXd& target, const Eigen::VectorXd& denom, Eigen::VectorXd& out) {
      for (Eigen::Index k = 0; k < target.size(); ++k) {
        if (target[k] == 0.0) {
          out[k] = 0.0;
          continue;
        }
        if (!(denom[k] > 0.0) || !std::isfinite(denom[k])) {
          throw SinkhornUnderflow("sinkhorn: kernel underflow (epsilon too small for scaling "
                                  "iterations; use the log-domain variant)");
        }
        out[k] = target[k] / denom[k];
        if (!std::isfinite(out[k])) {
          throw SinkhornUnderflow("sinkhorn: scaling overflow; use the log-domain variant");
        }
      }
    };
    for (int it = 0; it < iters; ++it) {
      scale(b, kernel.transpose() * u, v);
      scale(a, kernel * v, u);
    }
    plan.gamma = u.asDiagonal() * kernel * v.asDiagonal();
  } else {
    const double max_cost = cost.size() ? cost.maxCoeff() : 0.0;
    double eps_it = accelerate ? std::max(epsilon, max_cost) : epsilon;
    const double decay = std::pow(epsilon / eps_it, 1.0 / (kAnnealShare * iters));
    const double w = accelerate ? kRelaxation : 1.0;
    // Zero-mass entries sit at -inf and must not be mixed with finite values.
    auto relax = [w](double old, double update) {
      return std::isfinite(old) && std::isfinite(update) ? (1.0 - w) * old + w * update : update;
    };
    Matrix log_kernel = -cost / eps_it;
    const Eigen::VectorXd log_a = a.array().log();
    const Eigen::VectorXd log_b = b.array().log();
    Eigen::VectorXd lu = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd lv = Eigen::VectorXd::Zero(m);
    std::vector<double> buf(static_cast<std::size_t>(std::max(n, m)));
    for (int it = 0; it < iters; ++it) {
      if (eps_it > epsilon) {
        // Potentials are kept as f / eps so they carry over across eps levels.
        const double next = std::max(epsilon, eps_it * decay);
        lu *= eps_it / next;
        lv *= eps_it / next;
        eps_it = next;
        log_kernel = -cost / eps_it;
      }
      for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(i)] = lu[i] + log_kernel(i, j);
        lv[j] = relax(lv[j], log_b[j] - log_sum_exp(std::span<const double>(buf.data(), static_cast<std::size_t>(n))));
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) buf[static_cast<std::size_t>(j)] = lv[j] + log_kernel(i, j);
        lu[i] = relax(lu[i], log_a[i] - log_sum_exp(std::span<const double>(buf.data(), static_cast<std::size_t>(m))));
      }
    }
    plan.gamma.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double lg = lu[i] + log_kernel(i, j) + lv[j];
        plan.gamma(i, j) = std::isfinite(lg) ? std::exp(lg) : 0.0;
      }
    }
  }
  if (!plan.gamma.allFinite()) throw NumericalError("sinkhorn: non-finite transport plan");
  fill_plan_stats(plan, a, b);
  return plan;
}

TransportPlan sinkhorn(const DiscreteDistribution& a, const DiscreteDistribution& b,
                       const Matrix& cost, double epsilon, int iters, bool log_domain, bool accelerate) {
  return sinkhorn(a.mass_vector(), b.mass_vector(), cost, epsilon, iters, log_domain, accelerate);
}

double exact_1d(const DiscreteDistribution& a, const DiscreteDistribution& b, CostMetric metric) {
  a.validate();
  b.validate();
  if (a.dim() != 1 || b.dim() != 1) throw std::invalid_argument("exact_1d: distributions must be 1-D");
  auto sorted = [](const DiscreteDistribution& d) {
    std::vector<std::pair<double, double>> atoms;
    atoms.reserve(d.points.size());
    for (std::size_t i = 0; i < d.points.size(); ++i) atoms.emplace_back(d.points[i][0], d.masses[i]);
    std::stable_sort(atoms.begin(), atoms.end(),
                     [](const auto& l, const auto& r) { return l.first < r.first; });
    return atoms;
  };
  auto xa = sorted(a);
  auto xb = sorted(b);
  // Normalize so both marginals carry exactly the same total.
  const double ta = std::accumulate(xa.begin(), xa.end(), 0.0, [](double s, const auto& p) { return s + p.second; });
  const double tb = std::accumulate(xb.begin(), xb.end(), 0.0, [](double s, const auto& p) { return s + p.second; });
  for (auto& p : xa) p.second /= ta;
  for (auto& p : xb) p.second /= tb;

  double total = 0.0;
  std::size_t i = 0;
  std::size_t j = 0;
  double ra = xa[0].second;
  double rb = xb[0].second;
  while (i < xa.size() && j < xb.size()) {
    const double moved = std::min(ra, rb);
    const double diff = xa[i].first - xb[j].first;
    total += moved * (metric == CostMetric::euclidean ? std::abs(diff) : diff * diff);
    ra -= moved;
    rb -= moved;
    if (ra <= rb) {
      if (++i < xa.size()) ra = xa[i].second;
    } else {
      if (++j < xb.size()) rb = xb[j].second;
    }
  }
  return total;
}

TransportPlan exact_small_plan(const Eigen::VectorXd& a_in, const Eigen::VectorXd& b_in,
                               const Matrix& cost) {
  check_problem(a_in, b_in, cost);
  const Eigen::Index n = a_in.size();
  const Eigen::Index m = b_in.size();
  if (n * m > kExactMaxCells) {
    throw std::invalid_argument("exact_small: instance too large (n*m=" + std::to_string(n * m) +
                                " > " + std::to_string(kExactMaxCells) + ")");
  }
  const Eigen::VectorXd a = a_in / a_in.sum();
  const Eigen::VectorXd b = b_in / b_in.sum();

  TransportPlan plan;
  plan.cost = cost;
  if (n == 1 || m == 1) {
    plan.gamma = a * b.transpose();
    fill_plan_stats(plan, a_in, b_in);
    return plan;
  }

  // Variables x_ij at index i*m + j. Constraints: n row sums, then the first
  // m-1 column sums (the last one is implied).
  const Eigen::Index vars = n * m;
  const Eigen::Index rows = n + m - 1;
  Matrix tab = Matrix::Zero(rows, vars + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      tab(i, i * m + j) = 1.0;
      if (j < m - 1) tab(n + j, i * m + j) = 1.0;
    }
    tab(i, vars) = a[i];
  }
  for (Eigen::Index j = 0; j < m - 1; ++j) tab(n + j, vars) = b[j];

  // North-west corner: a staircase of n + m - 1 cells, which is a spanning
  // tree of the bipartite graph and hence a nonsingular basis.
  std::vector<Eigen::Index> basis;
  {
    Eigen::VectorXd ra = a;
    Eigen::VectorXd rb = b;
    Eigen::Index i = 0;
    Eigen::Index j = 0;
    while (static_cast<Eigen::Index>(basis.size()) < rows) {
      basis.push_back(i * m + j);
      const double moved = std::min(ra[i], rb[j]);
      ra[i] -= moved;
      rb[j] -= moved;
      if (i == n - 1) {
        ++j;
      } else if (j == m - 1) {
        ++i;
      } else if (ra[i] <= rb[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  auto pivot = [&](Eigen::Index r, Eigen::Index k) {
    tab.row(r) /= tab(r, k);
    for (Eigen::Index q = 0; q < rows; ++q) {
      if (q != r && tab(q, k) != 0.0) tab.row(q) -= tab(q, k) * tab.row(r);
    }
  };

  std::vector<Eigen::Index> row_var(static_cast<std::size_t>(rows), -1);
  for (Eigen::Index k : basis) {
    Eigen::Index best = -1;
    double best_abs = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (row_var[static_cast<std::size_t>(r)] != -1) continue;
      if (std::abs(tab(r, k)) > best_abs) {
        best_abs = std::abs(tab(r, k));
        best = r;
      }
    }
    if (best < 0 || best_abs < 1e-12) throw NumericalError("exact_small: singular starting basis");
    pivot(best, k);
    row_var[static_cast<std::size_t>(best)] = k;
  }

  Eigen::VectorXd c(vars);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) c[i * m + j] = cost(i, j);
  const double tol = 1e-12 * std::max(1.0, cost.cwiseAbs().maxCoeff());

  const int max_pivots = 100000;
  for (int iter = 0;; ++iter) {
    if (iter > max_pivots) throw NumericalError("exact_small: simplex did not terminate");
    std::vector<bool> is_basic(static_cast<std::size_t>(vars), false);
    Eigen::VectorXd cb(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto v = row_var[static_cast<std::size_t>(r)];
      is_basic[static_cast<std::size_t>(v)] = true;
      cb[r] = c[v];
    }
    // Bland's rule: the lowest-index improving column enters.
    Eigen::Index enter = -1;
    for (Eigen::Index k = 0; k < vars; ++k) {
      if (is_basic[static_cast<std::size_t>(k)]) continue;
      const double reduced = c[k] - cb.dot(tab.col(k));
      if (reduced < -tol) {
        enter = k;
        break;
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double coef = tab(r, enter);
      if (coef <= 1e-12) continue;
      const double ratio = std::max(tab(r, vars), 0.0) / coef;
      if (leave < 0 || ratio < best_ratio - 1e-15) {
        best_ratio = ratio;
        leave = r;
      } else if (ratio <= best_ratio + 1e-15 &&
                 row_var[static_cast<std::size_t>(r)] < row_var[static_cast<std::size_t>(leave)]) {
        best_ratio = std::min(best_ratio, ratio);
        leave = r;
      }
    }
    if (leave < 0) throw NumericalError("exact_small: unbounded transport LP");
    pivot(leave, enter);
    row_var[static_cast<std::size_t>(leave)] = enter;
  }

  plan.gamma = Matrix::Zero(n, m);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto v = row_var[static_cast<std::size_t>(r)];
    plan.gamma(v / m, v % m) = std::max(tab(r, vars), 0.0);
  }
  fill_plan_stats(plan, a_in, b_in);
  return plan;
}

double exact_small(const DiscreteDistribution& a, const DiscreteDistribution& b, const Matrix& cost) {
  return exact_small_plan(a.mass_vector(), b.mass_vector(), cost).value;
}

Point ot_grad_row(const TransportPlan& plan, const DiscreteDistribution& a,
                  const DiscreteDistribution& b, int i, CostSpec spec) {
  if (i < 0 || i >= a.size()) throw std::invalid_argument("ot_grad_row: source index out of range");
  if (plan.gamma.rows() != a.size() || plan.gamma.cols() != b.size()) {
    throw std::invalid_argument("ot_grad_row: plan shape does not match distributions");
  }
  const Point& z = a.points[static_cast<std::size_t>(i)];
  Point zs = z;
  double znorm = 1.0;
  if (spec.project_sphere) {
    znorm = z.norm();
    if (!(znorm > 0.0)) throw std::invalid_argument("ot_grad_row: zero-norm point under sphere projection");
    zs = z / znorm;
  }
  Point g = Point::Zero(z.size());
  for (int j = 0; j < b.size(); ++j) {
    const double w = plan.gamma(i, j);
    if (w == 0.0) continue;
    const Point k = spec.project_sphere ? project_unit(b.points[static_cast<std::size_t>(j)])
                                        : b.points[static_cast<std::size_t>(j)];
    const Point diff = zs - k;
    if (spec.metric == CostMetric::sq_euclidean) {
      g += w * 2.0 * diff;
    } else {
      const double dist = diff.norm();
      if (dist > 0.0) g += w * diff / dist;
    }
  }
  if (spec.project_sphere) g = (g - zs * zs.dot(g)) / znorm;
  return g;
}

}  // namespace dmgd
