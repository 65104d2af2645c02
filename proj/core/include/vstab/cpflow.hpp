#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <utility>
#include <vector>

#include "vstab/grid.hpp"
#include "vstab/power_flow.hpp"

namespace vstab {

/// Multiplicative growth factors along the loading direction:
///   P_i(lambda) = P_i0 (1 + lambda k_p[i])
///   Q_i(lambda) = Q_i0 (1 + lambda k_q[i])
///   G_j(lambda) = G_j0 (1 + lambda k_g[j])
/// k_p/k_q are per bus and k_g per generator, all in case order.
struct LoadDirection {
  Eigen::VectorXd k_p;
  Eigen::VectorXd k_q;
  Eigen::VectorXd k_g;

  static LoadDirection zeros(const GridCase& grid);
  static LoadDirection single_active(const GridCase& grid, int bus_id, double k = 1.0);

  bool is_zero() const;
  void check_against(const GridCase& grid) const;
};

struct ContinuationOptions {
  double initial_step = 0.05;  // predictor step (delta-lambda scale)
  double min_step = 1e-4;
  int max_points = 500;
  bool trace_lower_branch = true;
  /// Lower-branch tracing stops once lambda falls below this fraction of the
  /// nose lambda.
  double lower_branch_stop_fraction = 0.25;
  SolverOptions solver;
};

struct CurvePoint {
  double lambda = 0.0;
  PowerFlowSolution solution;
  bool q_limit_event = false;  // a generator hit or left a limit at this step
};

struct PVCurve {
  std::vector<CurvePoint> points;
  std::size_t nose_index = 0;
  LoadDirection direction;
  std::vector<int> bus_ids;  // case bus order, for lookups and export
};

/// Scaled copy of the case at the given loading factor. The base case is not
/// touched.
GridCase apply_lambda(const GridCase& grid, const LoadDirection& dir, double lambda);

/// Tangent predictor / Newton corrector continuation from lambda = 0 through
/// the nose and down the lower branch. Generator reactive limits are enforced
/// at every accepted point; switch events are recorded on the curve.
PVCurve trace_pv_curve(const GridCase& grid, const LoadDirection& dir,
                       const ContinuationOptions& opts = {});

/// (lambda_max, voltage magnitude at `bus_id` on the nose point).
std::pair<double, double> nose_point(const PVCurve& curve, int bus_id);

}  // namespace vstab
