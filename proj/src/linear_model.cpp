#include "ddse/linear_model.hpp"

#include "ddse/json_io.hpp"

namespace ddse {

namespace {
constexpr double kAnchorFloor = 1e-12;

Eigen::MatrixXd realify(const Eigen::MatrixXcd& a) {
  const Eigen::Index n = a.rows(), m = a.cols();
  Eigen::MatrixXd out(2 * n, 2 * m);
  out.topLeftCorner(n, m) = a.real();
  out.topRightCorner(n, m) = a.imag();
  out.bottomLeftCorner(n, m) = a.imag();
  out.bottomRightCorner(n, m) = -a.real();
  return out;
}
}  // namespace

StateLayout state_layout(const NetworkModel& net) {
  return StateLayout{net.wye_count(), net.delta_count()};
}

Eigen::VectorXd pack_state(const StateLayout& layout, const ComplexInjection& inj) {
  if (inj.wye.size() != layout.wye || inj.delta.size() != layout.delta) {
    throw std::invalid_argument("injection does not match state layout");
  }
  Eigen::VectorXd u(layout.dim());
  u.segment(0, layout.wye) = inj.wye.real();
  u.segment(layout.wye, layout.wye) = inj.wye.imag();
  u.segment(2 * layout.wye, layout.delta) = inj.delta.real();
  u.segment(2 * layout.wye + layout.delta, layout.delta) = inj.delta.imag();
  return u;
}

ComplexInjection unpack_state(const StateLayout& layout, const Eigen::VectorXd& u) {
  if (u.size() != layout.dim()) throw std::invalid_argument("state vector has wrong dimension");
  ComplexInjection inj;
  inj.wye.resize(layout.wye);
  inj.delta.resize(layout.delta);
  for (int j = 0; j < layout.wye; ++j) inj.wye[j] = {u[layout.p_wye(j)], u[layout.q_wye(j)]};
  for (int j = 0; j < layout.delta; ++j) inj.delta[j] = {u[layout.p_delta(j)], u[layout.q_delta(j)]};
  return inj;
}

Eigen::VectorXd stack_voltage(const Eigen::VectorXcd& v) {
  Eigen::VectorXd z(2 * v.size());
  z.head(v.size()) = v.real();
  z.tail(v.size()) = v.imag();
  return z;
}

Eigen::VectorXcd unstack_voltage(const Eigen::VectorXd& z) {
  if (z.size() % 2 != 0) throw std::invalid_argument("stacked voltage must have even length");
  const Eigen::Index n = z.size() / 2;
  Eigen::VectorXcd v(n);
  v.real() = z.head(n);
  v.imag() = z.tail(n);
  return v;
}

Eigen::VectorXd LinearPowerFlowModel::evaluate(const Eigen::VectorXd& u) const {
  if (u.size() != layout.dim()) {
    throw std::invalid_argument("state vector does not match the linear model");
  }
  Eigen::VectorXd z = offset;
  if (layout.wye > 0) z += m_wye * u.head(2 * layout.wye);
  if (layout.delta > 0) z += m_delta * u.tail(2 * layout.delta);
  return z;
}

Eigen::MatrixXd LinearPowerFlowModel::full_matrix() const {
  Eigen::MatrixXd m(offset.size(), layout.dim());
  m.leftCols(2 * layout.wye) = m_wye;
  m.rightCols(2 * layout.delta) = m_delta;
  return m;
}

nlohmann::json LinearPowerFlowModel::to_json() const {
  auto dump_matrix = [](const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j;
  j["m_wye"] = dump_matrix(m_wye);
  j["m_delta"] = dump_matrix(m_delta);
  j["offset"] = ddse::to_json(offset);
  nlohmann::json anchor = nlohmann::json::array();
  for (Eigen::Index i = 0; i < this->anchor.size(); ++i) {
    anchor.push_back(ddse::to_json(std::complex<double>(this->anchor[i])));
  }
  j["anchor"] = anchor;
  return j;
}

LinearPowerFlowModel linearize(const NetworkModel& net, const Eigen::VectorXcd& anchor_v) {
  const int n = net.phase_count();
  if (anchor_v.size() != n) throw std::invalid_argument("anchor has wrong dimension");

  const int n_wye = net.wye_count();
  const int n_delta = net.delta_count();

  Eigen::MatrixXcd rhs_wye(n, n_wye);
  rhs_wye.setZero();
  for (int j = 0; j < n_wye; ++j) {
    const int f = net.wye_phases()[static_cast<std::size_t>(j)];
    if (std::abs(anchor_v[f]) < kAnchorFloor) {
      throw std::invalid_argument("anchor voltage is zero at a wye-loaded phase");
    }
    rhs_wye(f, j) = 1.0 / std::conj(anchor_v[f]);
  }

  Eigen::MatrixXcd rhs_delta(n, n_delta);
  rhs_delta.setZero();
  for (int r = 0; r < n_delta; ++r) {
    const auto [pos, neg] = net.delta_pairs()[static_cast<std::size_t>(r)];
    const std::complex<double> hv = anchor_v[pos] - anchor_v[neg];
    if (std::abs(hv) < kAnchorFloor) {
      throw std::invalid_argument("anchor voltage is degenerate at a delta-loaded pair");
    }
    rhs_delta(pos, r) = 1.0 / std::conj(hv);
    rhs_delta(neg, r) = -1.0 / std::conj(hv);
  }

  LinearPowerFlowModel model;
  model.layout = state_layout(net);
  model.anchor = anchor_v;
  model.offset = stack_voltage(net.zero_load_voltage());
  model.m_wye = n_wye > 0 ? realify(net.yll_lu().solve(rhs_wye)) : Eigen::MatrixXd(2 * n, 0);
  model.m_delta = n_delta > 0 ? realify(net.yll_lu().solve(rhs_delta)) : Eigen::MatrixXd(2 * n, 0);
  return model;
}

}  // namespace ddse
