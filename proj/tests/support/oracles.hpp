#pragma once

#include <complex>
#include <vector>

#include "ddse/cost.hpp"
#include "ddse/network.hpp"

namespace ddse::testing {

/// Power-flow defect evaluated with plain scalar loops and no matrix
/// algebra; intentionally independent of the library implementation.
inline std::vector<std::complex<double>> brute_force_residual(const NetworkModel& net,
                                                              const Eigen::VectorXcd& v,
                                                              const ComplexInjection& inj) {
  const int n = net.phase_count();
  std::vector<std::complex<double>> residual(static_cast<std::size_t>(n), {0.0, 0.0});

  // phase currents from the admittance relation
  std::vector<std::complex<double>> current(static_cast<std::size_t>(n), {0.0, 0.0});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < 3; ++c) {
      current[static_cast<std::size_t>(r)] += net.ybus_l0()(r, c) * net.slack_voltage()[c];
    }
    for (int c = 0; c < n; ++c) {
      current[static_cast<std::size_t>(r)] += net.ybus_ll()(r, c) * v[c];
    }
  }

  // conjugated delta currents from the phase-to-phase voltages
  std::vector<std::complex<double>> i_delta_conj(net.delta_pairs().size());
  for (std::size_t r = 0; r < net.delta_pairs().size(); ++r) {
    const auto [pos, neg] = net.delta_pairs()[r];
    i_delta_conj[r] = inj.delta[static_cast<Eigen::Index>(r)] / (v[pos] - v[neg]);
  }

  for (int f = 0; f < n; ++f) {
    std::complex<double> delta_term = {0.0, 0.0};
    for (std::size_t r = 0; r < net.delta_pairs().size(); ++r) {
      const auto [pos, neg] = net.delta_pairs()[r];
      if (pos == f) delta_term += i_delta_conj[r];
      if (neg == f) delta_term -= i_delta_conj[r];
    }
    std::complex<double> s_wye = {0.0, 0.0};
    for (std::size_t j = 0; j < net.wye_phases().size(); ++j) {
      if (net.wye_phases()[j] == f) s_wye += inj.wye[static_cast<Eigen::Index>(j)];
    }
    residual[static_cast<std::size_t>(f)] =
        delta_term * v[f] + s_wye - v[f] * std::conj(current[static_cast<std::size_t>(f)]);
  }
  return residual;
}

/// Scalar-loop evaluation of the snapshot objective, independent of the
/// Eigen-based implementation.
inline double brute_force_value(const Eigen::MatrixXd& g_v, const Eigen::VectorXd& m_v,
                                const Eigen::VectorXd& y_v, double w_v,
                                const std::vector<int>& wye_idx, const Eigen::VectorXd& y_wye,
                                const std::vector<int>& delta_idx, const Eigen::VectorXd& y_delta,
                                double delta, double a, const Eigen::VectorXd& prior,
                                const Eigen::VectorXd& u) {
  double acc = 0.0;
  for (Eigen::Index r = 0; r < g_v.rows(); ++r) {
    double dot = 0.0;
    for (Eigen::Index c = 0; c < g_v.cols(); ++c) dot += g_v(r, c) * u[c];
    const double res = y_v[r] - dot - m_v[r];
    acc += 0.5 * w_v * res * res;
  }
  auto huber_scalar = [delta](double eps) {
    if (eps < -delta) return -delta * eps - delta * delta / 2.0;
    if (eps > delta) return delta * eps - delta * delta / 2.0;
    return eps * eps / 2.0;
  };
  for (std::size_t i = 0; i < wye_idx.size(); ++i) {
    acc += huber_scalar(y_wye[static_cast<Eigen::Index>(i)] - u[wye_idx[i]]);
  }
  for (std::size_t i = 0; i < delta_idx.size(); ++i) {
    acc += huber_scalar(y_delta[static_cast<Eigen::Index>(i)] - u[delta_idx[i]]);
  }
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double d = u[i] - (prior.size() ? prior[i] : 0.0);
    acc += 0.5 * a * d * d;
  }
  return acc;
}

/// Central finite difference of a scalar function.
template <typename F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& u, double step) {
  Eigen::VectorXd g(u.size());
  Eigen::VectorXd probe = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    probe[i] = u[i] + step;
    const double hi = f(probe);
    probe[i] = u[i] - step;
    const double lo = f(probe);
    probe[i] = u[i];
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

/// Central finite difference of a vector function (column j = d/du_j).
template <typename F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& u, double step) {
  Eigen::VectorXd probe = u;
  probe[0] = u[0];
  const Eigen::VectorXd f0 = f(u);
  Eigen::MatrixXd jac(f0.size(), u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    probe[j] = u[j] + step;
    const Eigen::VectorXd hi = f(probe);
    probe[j] = u[j] - step;
    const Eigen::VectorXd lo = f(probe);
    probe[j] = u[j];
    jac.col(j) = (hi - lo) / (2.0 * step);
  }
  return jac;
}

}  // namespace ddse::testing
