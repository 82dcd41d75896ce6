#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include "ddse/network.hpp"

namespace ddse {

/// Layout of the real-valued load-state vector
/// u = [Re s^Y; Im s^Y; Re s^D; Im s^D] = [p^Y; q^Y; p^D; q^D],
/// each block in network injection order.
struct StateLayout {
  int wye = 0;
  int delta = 0;

  int dim() const { return 2 * (wye + delta); }
  int p_wye(int j) const { return j; }
  int q_wye(int j) const { return wye + j; }
  int p_delta(int j) const { return 2 * wye + j; }
  int q_delta(int j) const { return 2 * wye + delta + j; }
};

StateLayout state_layout(const NetworkModel& net);
Eigen::VectorXd pack_state(const StateLayout& layout, const ComplexInjection& inj);
ComplexInjection unpack_state(const StateLayout& layout, const Eigen::VectorXd& u);

/// Affine voltage surrogate z ~= M^Y u^Y + M^D u^D + m anchored at a
/// voltage profile. The offset m = [Re w; Im w] is anchor-independent, so
/// u = 0 always reproduces the zero-load solution.
struct LinearPowerFlowModel {
  Eigen::MatrixXd m_wye;    // 2 N_phi x 2 N^Y
  Eigen::MatrixXd m_delta;  // 2 N_phi x 2 N^D
  Eigen::VectorXd offset;   // m
  Eigen::VectorXcd anchor;
  StateLayout layout;

  int voltage_dim() const { return static_cast<int>(offset.size()); }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& u) const;
  /// [M^Y, M^D] as one 2 N_phi x dim(u) matrix.
  Eigen::MatrixXd full_matrix() const;

  nlohmann::json to_json() const;  // debugging dump
};

/// Rectangular stacking z = [Re v; Im v] and its inverse.
Eigen::VectorXd stack_voltage(const Eigen::VectorXcd& v);
Eigen::VectorXcd unstack_voltage(const Eigen::VectorXd& z);

/// Build the sensitivity blocks at anchor_v:
///   A = Y_LL^-1 diag(conj(anchor))^-1 restricted to wye-loaded columns,
///   B = Y_LL^-1 H^T diag(conj(H anchor))^-1,
/// then M^Y = [[Re A, Im A], [Im A, -Re A]] and likewise for M^D.
LinearPowerFlowModel linearize(const NetworkModel& net, const Eigen::VectorXcd& anchor_v);

}  // namespace ddse
