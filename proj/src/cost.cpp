#include "ddse/cost.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace ddse {

double huber(double eps, double delta) {
  if (eps < -delta) return -delta * eps - delta * delta / 2.0;
  if (eps > delta) return delta * eps - delta * delta / 2.0;
  return eps * eps / 2.0;
}

double huber_grad(double eps, double delta) {
  if (eps < -delta) return -delta;
  if (eps > delta) return delta;
  return eps;
}

double huber_curv(double eps, double delta) {
  return std::abs(eps) <= delta ? 1.0 : 0.0;
}

namespace {

// largest eigenvalue of a symmetric PSD matrix, relative tolerance 1e-6
struct PowerIterationResult {
  double value = 0.0;
  bool converged = true;
};

PowerIterationResult lambda_max_power(const Eigen::MatrixXd& s) {
  const Eigen::Index n = s.rows();
  if (n == 0) return {0.0, true};
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = 1.0 + 1e-3 * static_cast<double>(i);
  x.normalize();
  // residual-based stop: clustered top eigenvalues stall the Rayleigh
  // increments long before the iterate reaches the top eigenspace
  for (int iter = 0; iter < 1000; ++iter) {
    const Eigen::VectorXd y = s * x;
    const double norm = y.norm();
    if (norm < 1e-300) return {0.0, true};
    const double lambda = x.dot(y);
    if ((y - lambda * x).norm() <= 1e-6 * std::max(std::abs(lambda), 1e-30)) {
      return {lambda, true};
    }
    x = y / norm;
  }
  // not converged: fall back to a cheap upper bound so L stays valid
  return {s.cwiseAbs().colwise().sum().maxCoeff(), false};
}

}  // namespace

CostSnapshot::CostSnapshot(StateLayout layout, Eigen::MatrixXd g_v, Eigen::VectorXd m_v,
                           RowSelection sel, MeasurementFrame frame, CostParams params)
    : layout_(layout),
      g_v_(std::move(g_v)),
      m_v_(std::move(m_v)),
      frame_(std::move(frame)),
      params_(std::move(params)) {
  if (params_.reg_weight <= 0) throw std::invalid_argument("regularizer weight must be positive");
  if (params_.huber_delta <= 0) throw std::invalid_argument("huber delta must be positive");
  if (params_.voltage_weight <= 0) throw std::invalid_argument("voltage weight must be positive");
  if (g_v_.cols() != layout_.dim()) throw std::invalid_argument("G_v has wrong column count");
  if (g_v_.rows() != m_v_.size() || g_v_.rows() != frame_.y_v.size()) {
    throw std::invalid_argument("voltage measurement dimensions are inconsistent");
  }
  if (frame_.y_u_wye.size() != static_cast<Eigen::Index>(sel.wye_rows.size()) ||
      frame_.y_u_delta.size() != static_cast<Eigen::Index>(sel.delta_rows.size())) {
    throw std::invalid_argument("load measurement dimensions do not match the selection");
  }
  if (!params_.prior.size()) {
    // keep empty; treated as zero
  } else if (params_.prior.size() != layout_.dim()) {
    throw std::invalid_argument("prior has wrong dimension");
  }
  wye_u_idx_.reserve(sel.wye_rows.size());
  for (int r : sel.wye_rows) wye_u_idx_.push_back(r);  // u^Y occupies the leading block
  delta_u_idx_.reserve(sel.delta_rows.size());
  for (int r : sel.delta_rows) delta_u_idx_.push_back(2 * layout_.wye + r);

  quad_ = params_.voltage_weight * g_v_.transpose() * g_v_;
  quad_.diagonal().array() += params_.reg_weight;
}

Eigen::VectorXd CostSnapshot::voltage_residual(const Eigen::VectorXd& u) const {
  return frame_.y_v - g_v_ * u - m_v_;
}

Eigen::VectorXd CostSnapshot::prior_or_zero() const {
  if (params_.prior.size()) return params_.prior;
  return Eigen::VectorXd::Zero(layout_.dim());
}

double CostSnapshot::value(const Eigen::VectorXd& u) const {
  if (u.size() != layout_.dim()) throw std::invalid_argument("state vector has wrong dimension");
  double acc = 0.5 * params_.voltage_weight * voltage_residual(u).squaredNorm();
  for (std::size_t i = 0; i < wye_u_idx_.size(); ++i) {
    acc += huber(frame_.y_u_wye[static_cast<Eigen::Index>(i)] - u[wye_u_idx_[i]],
                 params_.huber_delta);
  }
  for (std::size_t i = 0; i < delta_u_idx_.size(); ++i) {
    acc += huber(frame_.y_u_delta[static_cast<Eigen::Index>(i)] - u[delta_u_idx_[i]],
                 params_.huber_delta);
  }
  const Eigen::VectorXd d = params_.prior.size() ? Eigen::VectorXd(u - params_.prior) : u;
  acc += 0.5 * params_.reg_weight * d.squaredNorm();
  return acc;
}

Eigen::VectorXd CostSnapshot::gradient(const Eigen::VectorXd& u) const {
  if (u.size() != layout_.dim()) throw std::invalid_argument("state vector has wrong dimension");
  Eigen::VectorXd g = -params_.voltage_weight * (g_v_.transpose() * voltage_residual(u));
  for (std::size_t i = 0; i < wye_u_idx_.size(); ++i) {
    g[wye_u_idx_[i]] -= huber_grad(frame_.y_u_wye[static_cast<Eigen::Index>(i)] - u[wye_u_idx_[i]],
                                   params_.huber_delta);
  }
  for (std::size_t i = 0; i < delta_u_idx_.size(); ++i) {
    g[delta_u_idx_[i]] -= huber_grad(
        frame_.y_u_delta[static_cast<Eigen::Index>(i)] - u[delta_u_idx_[i]], params_.huber_delta);
  }
  g += params_.reg_weight * u;
  if (params_.prior.size()) g -= params_.reg_weight * params_.prior;
  return g;
}

Eigen::MatrixXd CostSnapshot::hessian(const Eigen::VectorXd& u) const {
  if (u.size() != layout_.dim()) throw std::invalid_argument("state vector has wrong dimension");
  Eigen::MatrixXd h = quad_;
  for (std::size_t i = 0; i < wye_u_idx_.size(); ++i) {
    h(wye_u_idx_[i], wye_u_idx_[i]) += huber_curv(
        frame_.y_u_wye[static_cast<Eigen::Index>(i)] - u[wye_u_idx_[i]], params_.huber_delta);
  }
  for (std::size_t i = 0; i < delta_u_idx_.size(); ++i) {
    h(delta_u_idx_[i], delta_u_idx_[i]) += huber_curv(
        frame_.y_u_delta[static_cast<Eigen::Index>(i)] - u[delta_u_idx_[i]], params_.huber_delta);
  }
  return h;
}

const ConvexityBounds& CostSnapshot::bounds() const {
  std::call_once(bounds_once_, [this] {
    ConvexityBounds b;
    const auto top = lambda_max_power(g_v_.transpose() * g_v_);
    b.strong_convexity = params_.reg_weight;
    b.smoothness = params_.reg_weight + params_.voltage_weight * top.value + 1.0;
    b.power_iteration_converged = top.converged;
    bounds_ = b;
  });
  return *bounds_;
}

ConvexityBounds CostSnapshot::bounds_with_min_eig() const {
  ConvexityBounds b = bounds();
  if (g_v_.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g_v_.transpose() * g_v_,
                                                       Eigen::EigenvaluesOnly);
    b.strong_convexity =
        params_.reg_weight + params_.voltage_weight * std::max(0.0, eig.eigenvalues().minCoeff());
  }
  return b;
}

double CostSnapshot::kink_distance(const Eigen::VectorXd& u) const {
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < wye_u_idx_.size(); ++i) {
    const double r = frame_.y_u_wye[static_cast<Eigen::Index>(i)] - u[wye_u_idx_[i]];
    dist = std::min(dist, std::abs(std::abs(r) - params_.huber_delta));
  }
  for (std::size_t i = 0; i < delta_u_idx_.size(); ++i) {
    const double r = frame_.y_u_delta[static_cast<Eigen::Index>(i)] - u[delta_u_idx_[i]];
    dist = std::min(dist, std::abs(std::abs(r) - params_.huber_delta));
  }
  return dist;
}

Eigen::VectorXd time_grad(const CostSnapshot& now, const CostSnapshot* prev,
                          const Eigen::VectorXd& u) {
  if (prev == nullptr) return Eigen::VectorXd::Zero(now.dim());
  if (prev->dim() != now.dim()) throw std::invalid_argument("snapshots have different dimensions");
  return now.gradient(u) - prev->gradient(u);
}

ConvexityBounds bounds(const CostSnapshot& snap, bool estimate_min_eig) {
  return estimate_min_eig ? snap.bounds_with_min_eig() : snap.bounds();
}

}  // namespace ddse
