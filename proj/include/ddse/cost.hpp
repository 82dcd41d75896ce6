#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "ddse/linear_model.hpp"
#include "ddse/sensing.hpp"

namespace ddse {

/// Huber loss: quadratic inside [-delta, delta], linear outside. Value and
/// gradient are continuous at the threshold; curvature at exactly |eps| =
/// delta is taken as 1 so the pieced Hessian stays an upper model.
double huber(double eps, double delta);
double huber_grad(double eps, double delta);
double huber_curv(double eps, double delta);

/// Strong-convexity / smoothness constants of a cost snapshot.
struct ConvexityBounds {
  double strong_convexity = 0.0;  // nu
  double smoothness = 0.0;        // L
  bool power_iteration_converged = true;
};

struct CostParams {
  double voltage_weight = 1e3;  // w_v
  double huber_delta = 8e-4;
  double reg_weight = 1.0;      // a
  Eigen::VectorXd prior;        // u_pr; empty means zero
};

/// The frozen objective at one time step:
///   f(u) = (w_v/2) |y_v - G_v u - m_v|^2
///        + sum H(y_u^Y - J^Y u^Y) + sum H(y_u^D - J^D u^D)
///        + (a/2) |u - u_pr|^2.
/// Immutable; all oracles are pure and safe for concurrent use.
class CostSnapshot {
 public:
  CostSnapshot(StateLayout layout, Eigen::MatrixXd g_v, Eigen::VectorXd m_v, RowSelection sel,
               MeasurementFrame frame, CostParams params);

  double value(const Eigen::VectorXd& u) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& u) const;

  /// nu = a (the Huber regions may carry no curvature), L = a + w_v
  /// lambda_max(G_v^T G_v) + 1 with lambda_max from power iteration.
  /// Cached after the first call.
  const ConvexityBounds& bounds() const;
  /// Same L, but nu = a + w_v lambda_min(G_v^T G_v) from a dense
  /// eigensolve. Sharper when G_v has full column rank.
  ConvexityBounds bounds_with_min_eig() const;

  int dim() const { return layout_.dim(); }
  const StateLayout& layout() const { return layout_; }
  const Eigen::MatrixXd& g_v() const { return g_v_; }
  const Eigen::VectorXd& m_v() const { return m_v_; }
  const MeasurementFrame& frame() const { return frame_; }
  const CostParams& params() const { return params_; }
  /// Distance from the nearest Huber kink over all metered residuals;
  /// +inf when nothing is metered.
  double kink_distance(const Eigen::VectorXd& u) const;

 private:
  Eigen::VectorXd voltage_residual(const Eigen::VectorXd& u) const;
  Eigen::VectorXd prior_or_zero() const;

  StateLayout layout_;
  Eigen::MatrixXd g_v_;
  Eigen::VectorXd m_v_;
  MeasurementFrame frame_;
  CostParams params_;
  std::vector<int> wye_u_idx_;    // metered wye rows as indices into u
  std::vector<int> delta_u_idx_;  // metered delta rows as indices into u
  Eigen::MatrixXd quad_;          // w_v G^T G + a I, fixed part of the Hessian

  mutable std::once_flag bounds_once_;
  mutable std::optional<ConvexityBounds> bounds_;
};

/// Backward-difference surrogate for the sampled-time drift of the
/// gradient, h * d/dt grad f: gradient(now, u) - gradient(prev, u).
/// Zero when there is no predecessor yet.
Eigen::VectorXd time_grad(const CostSnapshot& now, const CostSnapshot* prev,
                          const Eigen::VectorXd& u);

ConvexityBounds bounds(const CostSnapshot& snap, bool estimate_min_eig = false);

}  // namespace ddse
