#pragma once

#include <memory>

#include <Eigen/Core>

#include "ddse/cost.hpp"
#include "ddse/linear_model.hpp"
#include "ddse/network.hpp"
#include "ddse/sensing.hpp"

namespace ddse {

struct FopcConfig {
  int prediction_steps = 0;   // P
  int correction_steps = 1;   // C
  double alpha = -1.0;        // prediction stepsize; <= 0 resolves to 1/L
  double beta = -1.0;         // correction stepsize; <= 0 resolves to 1/L
  double gamma = 0.0;         // 0 = rigid motion, 1 = full damped Newton
  double h = 1.0;             // sampling period, seconds

  void validate() const;
};

/// Linear-convergence certificate. The contraction factor
///   tau0 = rho_C^C [rho_P^P + (rho_P^P + 1)(1 - gamma + gamma 2L/nu)]
/// guarantees tracking when tau0 < 1 and both stepsizes are below 2/L.
/// min_correction_steps is the gamma = 0 requirement
///   C >= ceil(-log(2 rho_P^P + 1) / log rho_C),
/// or -1 when no finite C works.
struct ConvergenceCertificate {
  double rho_p = 0.0;
  double rho_c = 0.0;
  double tau0 = 0.0;
  bool valid = false;
  int min_correction_steps = -1;
};

ConvergenceCertificate certify(const FopcConfig& cfg, const ConvexityBounds& b);

/// P damped steps toward the one-step-ahead optimizer, with the Hessian,
/// gradient and gradient drift all frozen at u_hat:
///   u <- u - alpha [H (u - u_hat) + gamma g + tg].
Eigen::VectorXd predict_state(const CostSnapshot& prev_cost, const CostSnapshot* prev2_cost,
                              const Eigen::VectorXd& u_hat, int steps, double alpha, double gamma);

/// C plain gradient steps on the newly observed cost, the gradient
/// re-evaluated at every inner iterate.
Eigen::VectorXd correct_state(const CostSnapshot& cost, Eigen::VectorXd u, int steps, double beta);

/// Re-anchored linear model and the voltage-measurement operator rows.
struct ModelRefresh {
  LinearPowerFlowModel model;
  Eigen::MatrixXd g_v;   // J_v [M^Y, M^D]
  Eigen::VectorXd m_v;   // J_v m
  bool fallback = false; // predicted voltage was degenerate, kept old anchor
};

/// Re-linearize at the predicted voltage. A predicted phase magnitude
/// under 1e-6 pu falls back to the previous anchor instead of failing.
ModelRefresh refresh_model(const NetworkModel& net, const RowSelection& sel,
                           const Eigen::VectorXd& z_pred, const LinearPowerFlowModel* previous);

struct BatchResult {
  Eigen::VectorXd u;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Gradient descent with stepsize 1/L until |grad f| <= tol (1 + |u|).
/// Defines the instantaneous optimal trajectory used as the tracking
/// yardstick, so its default tolerance out-converges the estimator by
/// several orders of magnitude.
BatchResult batch_solve(const CostSnapshot& cost, Eigen::VectorXd u_init, double tol = 1e-9,
                        int max_iter = 200000);

struct FopcState {
  int k = -1;
  Eigen::VectorXd u_hat;
  Eigen::VectorXd z_hat;
  Eigen::VectorXd u_pred;
  Eigen::VectorXd z_pred;
  bool anchor_fallback = false;
};

struct StepTiming {
  double predict_seconds = 0.0;
  double model_seconds = 0.0;
  double correct_seconds = 0.0;
};

/// The streaming estimator: per frame it predicts with the previous cost,
/// re-anchors the linear model at the predicted voltage, rebuilds the
/// cost from the new observations, and corrects. Strictly sequential;
/// distinct instances are independent.
class FopcEstimator {
 public:
  FopcEstimator(std::shared_ptr<const NetworkModel> net, RowSelection sel, FopcConfig cfg,
                CostParams cost_params);

  StepTiming step(const MeasurementFrame& frame);

  const FopcState& state() const { return state_; }
  const FopcConfig& config() const { return cfg_; }  // stepsizes resolved after step 0
  const NetworkModel& network() const { return *net_; }
  const RowSelection& selection() const { return sel_; }

  bool has_cost() const { return static_cast<bool>(snapshot_); }
  const CostSnapshot& current_cost() const;
  const LinearPowerFlowModel& current_model() const;

  /// Certificate from the first snapshot's conservative bounds.
  ConvergenceCertificate certificate() const;
  const ConvexityBounds& initial_bounds() const;

  /// Overwrite the running estimate (oracle injection for benchmarks).
  void override_estimate(const Eigen::VectorXd& u);

 private:
  std::shared_ptr<const NetworkModel> net_;
  RowSelection sel_;
  FopcConfig cfg_;
  CostParams cost_params_;
  StateLayout layout_;
  Eigen::VectorXd offset0_;  // [Re w; Im w]

  FopcState state_;
  std::shared_ptr<const CostSnapshot> snapshot_;       // f^(k)
  std::shared_ptr<const CostSnapshot> snapshot_prev_;  // f^(k-1)
  std::shared_ptr<const LinearPowerFlowModel> model_;  // anchored for step k
  std::optional<ConvexityBounds> bounds0_;
};

}  // namespace ddse
