#include "ddse/fopc.hpp"

#include <chrono>
#include <cmath>

namespace ddse {

namespace {

constexpr double kDegenerateAnchor = 1e-6;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void FopcConfig::validate() const {
  if (prediction_steps < 0) throw std::invalid_argument("prediction steps must be >= 0");
  if (correction_steps < 1) throw std::invalid_argument("at least one correction step is required");
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (h <= 0.0) throw std::invalid_argument("sampling period must be positive");
}

ConvergenceCertificate certify(const FopcConfig& cfg, const ConvexityBounds& b) {
  ConvergenceCertificate cert;
  const double nu = b.strong_convexity;
  const double L = b.smoothness;
  cert.rho_p = std::max(std::abs(1.0 - cfg.alpha * nu), std::abs(1.0 - cfg.alpha * L));
  cert.rho_c = std::max(std::abs(1.0 - cfg.beta * nu), std::abs(1.0 - cfg.beta * L));

  const double rho_p_pow = std::pow(cert.rho_p, cfg.prediction_steps);
  const double rho_c_pow = std::pow(cert.rho_c, cfg.correction_steps);
  const double motion = nu > 0.0
                            ? 1.0 - cfg.gamma + cfg.gamma * 2.0 * L / nu
                            : std::numeric_limits<double>::infinity();
  cert.tau0 = rho_c_pow * (rho_p_pow + (rho_p_pow + 1.0) * motion);

  if (cert.rho_c < 1.0 && cert.rho_c > 0.0) {
    const double c_min = -std::log(2.0 * rho_p_pow + 1.0) / std::log(cert.rho_c);
    cert.min_correction_steps = static_cast<int>(std::ceil(c_min - 1e-12));
  } else {
    cert.min_correction_steps = -1;
  }

  cert.valid = cfg.alpha > 0.0 && cfg.beta > 0.0 && L > 0.0 && cfg.alpha < 2.0 / L &&
               cfg.beta < 2.0 / L && cert.tau0 < 1.0;
  return cert;
}

Eigen::VectorXd predict_state(const CostSnapshot& prev_cost, const CostSnapshot* prev2_cost,
                              const Eigen::VectorXd& u_hat, int steps, double alpha,
                              double gamma) {
  if (steps <= 0) return u_hat;
  // one-shot evaluations at u_hat, reused across the whole loop
  const Eigen::MatrixXd hess = prev_cost.hessian(u_hat);
  Eigen::VectorXd drive = time_grad(prev_cost, prev2_cost, u_hat);
  if (gamma != 0.0) drive += gamma * prev_cost.gradient(u_hat);

  Eigen::VectorXd u = u_hat;
  for (int p = 0; p < steps; ++p) {
    u -= alpha * (hess * (u - u_hat) + drive);
  }
  return u;
}

Eigen::VectorXd correct_state(const CostSnapshot& cost, Eigen::VectorXd u, int steps,
                              double beta) {
  for (int c = 0; c < steps; ++c) {
    u -= beta * cost.gradient(u);
  }
  return u;
}

ModelRefresh refresh_model(const NetworkModel& net, const RowSelection& sel,
                           const Eigen::VectorXd& z_pred, const LinearPowerFlowModel* previous) {
  if (z_pred.size() != 2 * net.phase_count()) {
    throw std::invalid_argument("predicted voltage has wrong dimension");
  }
  Eigen::VectorXcd anchor = unstack_voltage(z_pred);

  bool degenerate = false;
  for (int f : net.wye_phases()) {
    if (std::abs(anchor[f]) < kDegenerateAnchor) degenerate = true;
  }
  for (const auto& [pos, neg] : net.delta_pairs()) {
    if (std::abs(anchor[pos] - anchor[neg]) < kDegenerateAnchor) degenerate = true;
  }

  ModelRefresh out;
  if (degenerate) {
    if (previous == nullptr) {
      throw PowerFlowError("predicted voltage is degenerate and no previous anchor exists");
    }
    anchor = previous->anchor;
    out.fallback = true;
  }

  out.model = linearize(net, anchor);
  const Eigen::MatrixXd full = out.model.full_matrix();
  out.g_v.resize(static_cast<Eigen::Index>(sel.v_rows.size()), full.cols());
  out.m_v.resize(static_cast<Eigen::Index>(sel.v_rows.size()));
  for (std::size_t i = 0; i < sel.v_rows.size(); ++i) {
    out.g_v.row(static_cast<Eigen::Index>(i)) = full.row(sel.v_rows[i]);
    out.m_v[static_cast<Eigen::Index>(i)] = out.model.offset[sel.v_rows[i]];
  }
  return out;
}

BatchResult batch_solve(const CostSnapshot& cost, Eigen::VectorXd u_init, double tol,
                        int max_iter) {
  if (tol <= 0) throw std::invalid_argument("tol must be positive");
  const double step = 1.0 / cost.bounds().smoothness;
  BatchResult result;
  result.u = std::move(u_init);
  for (int iter = 0; iter <= max_iter; ++iter) {
    const Eigen::VectorXd g = cost.gradient(result.u);
    result.grad_norm = g.norm();
    result.iterations = iter;
    if (result.grad_norm <= tol * (1.0 + result.u.norm())) {
      result.converged = true;
      return result;
    }
    if (iter == max_iter) break;
    result.u -= step * g;
  }
  return result;  // caller inspects grad_norm / converged
}

FopcEstimator::FopcEstimator(std::shared_ptr<const NetworkModel> net, RowSelection sel,
                             FopcConfig cfg, CostParams cost_params)
    : net_(std::move(net)),
      sel_(std::move(sel)),
      cfg_(cfg),
      cost_params_(std::move(cost_params)),
      layout_(state_layout(*net_)),
      offset0_(stack_voltage(net_->zero_load_voltage())) {
  cfg_.validate();
  state_.u_hat = Eigen::VectorXd::Zero(layout_.dim());
  state_.z_hat = offset0_;
}

const CostSnapshot& FopcEstimator::current_cost() const {
  if (!snapshot_) throw std::logic_error("no frame has been processed yet");
  return *snapshot_;
}

const LinearPowerFlowModel& FopcEstimator::current_model() const {
  if (!model_) throw std::logic_error("no frame has been processed yet");
  return *model_;
}

ConvergenceCertificate FopcEstimator::certificate() const {
  return certify(cfg_, initial_bounds());
}

const ConvexityBounds& FopcEstimator::initial_bounds() const {
  if (!bounds0_) throw std::logic_error("no frame has been processed yet");
  return *bounds0_;
}

void FopcEstimator::override_estimate(const Eigen::VectorXd& u) {
  if (u.size() != layout_.dim()) throw std::invalid_argument("estimate has wrong dimension");
  state_.u_hat = u;
  if (model_) state_.z_hat = model_->evaluate(u);
}

StepTiming FopcEstimator::step(const MeasurementFrame& frame) {
  if (frame.k != state_.k + 1) {
    throw std::invalid_argument("frames must arrive in order: expected k=" +
                                std::to_string(state_.k + 1) + ", got " +
                                std::to_string(frame.k));
  }
  StepTiming timing;

  auto t0 = std::chrono::steady_clock::now();
  if (state_.k < 0) {
    // first frame: no prediction material yet
    state_.u_pred = state_.u_hat;
    state_.z_pred = offset0_;
  } else {
    state_.u_pred = predict_state(*snapshot_, snapshot_prev_.get(), state_.u_hat,
                                  cfg_.prediction_steps, cfg_.alpha, cfg_.gamma);
    state_.z_pred = model_->evaluate(state_.u_pred);
  }
  timing.predict_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  ModelRefresh refresh = refresh_model(*net_, sel_, state_.z_pred, model_.get());
  state_.anchor_fallback = refresh.fallback;
  auto snap = std::make_shared<CostSnapshot>(layout_, std::move(refresh.g_v),
                                             std::move(refresh.m_v), sel_, frame, cost_params_);
  if (!bounds0_) {
    bounds0_ = snap->bounds();
    if (cfg_.alpha <= 0.0) cfg_.alpha = 1.0 / bounds0_->smoothness;
    if (cfg_.beta <= 0.0) cfg_.beta = 1.0 / bounds0_->smoothness;
  }
  timing.model_seconds = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  state_.u_hat = correct_state(*snap, state_.u_pred, cfg_.correction_steps, cfg_.beta);
  state_.z_hat = refresh.model.evaluate(state_.u_hat);
  timing.correct_seconds = seconds_since(t0);

  snapshot_prev_ = std::move(snapshot_);
  snapshot_ = std::move(snap);
  model_ = std::make_shared<const LinearPowerFlowModel>(std::move(refresh.model));
  state_.k = frame.k;
  return timing;
}

}  // namespace ddse
