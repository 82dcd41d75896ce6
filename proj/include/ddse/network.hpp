#pragma once

#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <json.hpp>

namespace ddse {

/// Raised for semantic problems in a feeder description (duplicate ids,
/// missing phases, disconnected graph, singular admittance).
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when the fixed-point power-flow sweep fails to converge or a
/// voltage collapses to zero at a loaded phase.
struct PowerFlowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Phase : int { A = 0, B = 1, C = 2 };

char phase_letter(Phase p);
Phase phase_from_letter(char c);

/// One single-phase connection of a multiphase node. Flat indices are a
/// bijection onto [0, N_phi), node-major then phase-minor, fixed for the
/// life of a NetworkModel.
struct PhaseIndex {
  int node = 0;
  Phase phase = Phase::A;
  int flat = 0;
};

struct FeederNode {
  int id = 0;
  std::vector<Phase> phases;
};

/// Series element between two nodes; z is the per-phase impedance matrix
/// over the phases shared by both endpoints, ordered a, b, c.
struct FeederLine {
  int from = 0;
  int to = 0;
  Eigen::MatrixXcd z;
};

/// A load connection. Wye loads list node phases ("a","b","c"); delta
/// loads list phase pairs ("ab","bc","ca").
struct FeederLoad {
  int node = 0;
  bool is_delta = false;
  std::vector<std::string> phases;
};

/// In-memory form of the feeder description document. The slack bus has
/// id 0, carries all three phases, and holds the fixed voltage phasors.
/// All electrical quantities are in per-unit on the declared bases.
struct FeederSpec {
  Eigen::Vector3cd slack;
  std::vector<FeederNode> nodes;
  std::vector<FeederLine> lines;
  std::vector<FeederLoad> loads;
  double base_power_va = 1.0;
  double base_voltage_v = 1.0;

  static FeederSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

FeederSpec load_feeder(const std::string& path);

/// Net complex powers injected at the loaded connections: one entry per
/// wye-loaded phase and one per delta phase pair, in network order.
/// Zero-injection phases are simply absent from both sets.
struct ComplexInjection {
  Eigen::VectorXcd wye;
  Eigen::VectorXcd delta;
};

/// Immutable electrical model of a multiphase feeder: the slack-row-
/// eliminated admittance blocks [Y_L0, Y_LL], the delta phase-to-phase
/// incidence map H, the slack phasors and the zero-load voltage solution
/// w with Y_LL w = -Y_L0 v0. Safe to share across concurrent readers.
class NetworkModel {
 public:
  int phase_count() const { return static_cast<int>(phases_.size()); }
  int wye_count() const { return static_cast<int>(wye_phases_.size()); }
  int delta_count() const { return static_cast<int>(delta_pairs_.size()); }

  const Eigen::MatrixXcd& ybus_ll() const { return y_ll_; }
  const Eigen::MatrixXcd& ybus_l0() const { return y_l0_; }
  const Eigen::SparseMatrix<double>& delta_map() const { return h_; }
  const Eigen::Vector3cd& slack_voltage() const { return v0_; }
  const Eigen::VectorXcd& zero_load_voltage() const { return w_; }
  const Eigen::PartialPivLU<Eigen::MatrixXcd>& yll_lu() const { return lu_; }

  const std::vector<PhaseIndex>& phases() const { return phases_; }
  /// Flat phase indices carrying a wye load, in injection order.
  const std::vector<int>& wye_phases() const { return wye_phases_; }
  /// (+,-) flat phase index per delta connection, in injection order.
  const std::vector<std::pair<int, int>>& delta_pairs() const { return delta_pairs_; }
  const std::vector<int>& node_ids() const { return node_ids_; }

  bool has_node(int node) const;
  /// Flat index of (node, phase); throws ModelError if absent.
  int flat_index(int node, Phase p) const;
  std::vector<int> node_flat_indices(int node) const;
  /// Wye injection slots owned by a node (positions into wye vector).
  std::vector<int> node_wye_entries(int node) const;
  std::vector<int> node_delta_entries(int node) const;

  ComplexInjection zero_injection() const;

  friend NetworkModel build_network(const FeederSpec& spec);

 private:
  NetworkModel() = default;

  Eigen::MatrixXcd y_ll_, y_l0_;
  Eigen::SparseMatrix<double> h_;
  Eigen::Vector3cd v0_;
  Eigen::VectorXcd w_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
  std::vector<PhaseIndex> phases_;
  std::vector<int> node_ids_;
  std::map<std::pair<int, int>, int> flat_;  // (node, phase) -> flat
  std::vector<int> wye_phases_;
  std::vector<std::pair<int, int>> delta_pairs_;
  std::vector<int> wye_owner_, delta_owner_;  // node id per injection slot
};

/// Assemble the network model from a feeder description. One linear solve
/// produces the zero-load voltage w.
NetworkModel build_network(const FeederSpec& spec);

/// Elementwise defect of the AC balance at voltage v under injections inj,
/// with phase currents eliminated through the admittance relation and the
/// delta currents recovered from H v. Zero iff (v, inj) solves the AC
/// power-flow equations.
Eigen::VectorXcd pf_residual(const NetworkModel& net, const Eigen::VectorXcd& v,
                             const ComplexInjection& inj);

/// Fixed-point power-flow sweeps v <- w + Y_LL^-1 [conj(s^Y)/conj(v) +
/// H^T conj(s^D)/conj(H v)] until the residual max-norm is <= tol.
/// Throws PowerFlowError when the loading is beyond the contraction
/// region (no convergence within max_iter) or a voltage collapses.
Eigen::VectorXcd solve_power_flow(const NetworkModel& net, const ComplexInjection& inj,
                                  const Eigen::VectorXcd& v_init, double tol = 1e-10,
                                  int max_iter = 200);

}  // namespace ddse
