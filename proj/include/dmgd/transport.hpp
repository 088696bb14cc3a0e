// SPDX-License-Identifier: Apache-2.0
//
// Discrete optimal transport: cost matrices, entropic Sinkhorn (scaling and
// log-domain), exact oracles for small and one-dimensional instances, and
// the envelope gradient of <gamma, C> with respect to one source point.

#pragma once

#include "dmgd/numerics.hpp"

#include <vector>

namespace dmgd {

/// Weighted point set. Masses are nonnegative and sum to one.
struct DiscreteDistribution {
  std::vector<Point> points;
  std::vector<double> masses;

  static DiscreteDistribution uniform(std::vector<Point> points);

  int size() const { return static_cast<int>(points.size()); }
  int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
  Eigen::VectorXd mass_vector() const;
  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

enum class CostMetric { euclidean, sq_euclidean };

struct CostSpec {
  CostMetric metric = CostMetric::euclidean;
  bool project_sphere = false;
};

const char* to_string(CostMetric metric);
CostMetric parse_cost_metric(const std::string& name);

double ground_cost(const Point& x, const Point& y, CostMetric metric);

/// C_ij = d(x_i, y_j), after optional unit-norm projection of both sides.
Matrix cost_matrix(const DiscreteDistribution& a, const DiscreteDistribution& b, CostSpec spec = {});

struct TransportPlan {
  Matrix gamma;
  Matrix cost;
  double value = 0.0;         // <gamma, cost>
  double row_residual = 0.0;  // max_i |sum_j gamma_ij - a_i|
  double col_residual = 0.0;  // max_j |sum_i gamma_ij - b_j|
};

/// Raised by the scaling Sinkhorn when the kernel underflows; the log-domain
/// variant handles these instances.
class SinkhornUnderflow : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// `iters` alternating updates v = b / K^T u, u = a / K v from u = v = 1,
/// K = exp(-C / epsilon). The log-domain variant iterates the same map on
/// log-potentials. `accelerate` (log domain only) spends the first half of the
/// budget lowering epsilon geometrically from max(C), warm-starting the
/// potentials, and over-relaxes every update; the fixed point is unchanged.
TransportPlan sinkhorn(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Matrix& cost,
                       double epsilon, int iters, bool log_domain = false, bool accelerate = false);

TransportPlan sinkhorn(const DiscreteDistribution& a, const DiscreteDistribution& b,
                       const Matrix& cost, double epsilon, int iters, bool log_domain = false,
                       bool accelerate = false);

/// Exact OT between one-dimensional distributions via monotone (quantile)
/// coupling. Valid for both metrics since each is a convex function of x - y.
double exact_1d(const DiscreteDistribution& a, const DiscreteDistribution& b,
                CostMetric metric = CostMetric::euclidean);

/// Exact optimal plan for n * m <= 64 by the transportation simplex
/// (north-west corner start, Bland's rule pivoting).
TransportPlan exact_small_plan(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Matrix& cost);

double exact_small(const DiscreteDistribution& a, const DiscreteDistribution& b, const Matrix& cost);

/// grad_{x_i} sum_j gamma_ij d(x_i, y_j) with gamma held fixed. Coincident
/// points contribute zero under the euclidean metric.
Point ot_grad_row(const TransportPlan& plan, const DiscreteDistribution& a,
                  const DiscreteDistribution& b, int i, CostSpec spec = {});

}  // namespace dmgd
