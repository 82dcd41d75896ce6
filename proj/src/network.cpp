#include "ddse/network.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ddse/json_io.hpp"

namespace ddse {

namespace {

constexpr double kVoltageFloor = 1e-12;

// union-find for the connectivity check
struct Dsu {
  std::map<int, int> parent;
  int find(int x) {
    if (!parent.count(x)) parent[x] = x;
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

std::vector<Phase> sorted_unique_phases(std::vector<Phase> ph) {
  std::sort(ph.begin(), ph.end());
  ph.erase(std::unique(ph.begin(), ph.end()), ph.end());
  return ph;
}

}  // namespace

char phase_letter(Phase p) { return static_cast<char>('a' + static_cast<int>(p)); }

Phase phase_from_letter(char c) {
  switch (c) {
    case 'a': return Phase::A;
    case 'b': return Phase::B;
    case 'c': return Phase::C;
    default: throw ModelError(std::string("unknown phase letter '") + c + "'");
  }
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

void save_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

FeederSpec FeederSpec::from_json(const nlohmann::json& j) {
  FeederSpec spec;
  const auto& slack = j.at("slack");
  if (!slack.is_array() || slack.size() != 3) {
    throw ModelError("slack must list three phasors");
  }
  for (int p = 0; p < 3; ++p) spec.slack[p] = complex_from_json(slack[p]);

  for (const auto& n : j.at("nodes")) {
    FeederNode node;
    node.id = n.at("id").get<int>();
    for (const auto& ph : n.at("phases")) {
      node.phases.push_back(phase_from_letter(ph.get<std::string>().at(0)));
    }
    spec.nodes.push_back(std::move(node));
  }

  for (const auto& l : j.at("lines")) {
    FeederLine line;
    line.from = l.at("from").get<int>();
    line.to = l.at("to").get<int>();
    const auto& zj = l.at("z");
    const auto rows = zj.size();
    line.z.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      if (zj[r].size() != rows) throw ModelError("line impedance matrix must be square");
      for (std::size_t c = 0; c < rows; ++c) line.z(r, c) = complex_from_json(zj[r][c]);
    }
    spec.lines.push_back(std::move(line));
  }

  if (j.contains("loads")) {
    for (const auto& l : j.at("loads")) {
      FeederLoad load;
      load.node = l.at("node").get<int>();
      const auto conn = l.at("connection").get<std::string>();
      if (conn == "wye") load.is_delta = false;
      else if (conn == "delta") load.is_delta = true;
      else throw ModelError("load connection must be \"wye\" or \"delta\"");
      for (const auto& ph : l.at("phases")) load.phases.push_back(ph.get<std::string>());
      spec.loads.push_back(std::move(load));
    }
  }

  if (j.contains("base")) {
    spec.base_power_va = j["base"].value("s_va", 1.0);
    spec.base_voltage_v = j["base"].value("v_volts", 1.0);
  }
  return spec;
}

nlohmann::json FeederSpec::to_json() const {
  nlohmann::json j;
  j["slack"] = nlohmann::json::array();
  for (int p = 0; p < 3; ++p) j["slack"].push_back(ddse::to_json(slack[p]));
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json phases = nlohmann::json::array();
    for (Phase p : n.phases) phases.push_back(std::string(1, phase_letter(p)));
    j["nodes"].push_back({{"id", n.id}, {"phases", phases}});
  }
  j["lines"] = nlohmann::json::array();
  for (const auto& l : lines) {
    nlohmann::json z = nlohmann::json::array();
    for (Eigen::Index r = 0; r < l.z.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < l.z.cols(); ++c) row.push_back(ddse::to_json(l.z(r, c)));
      z.push_back(row);
    }
    j["lines"].push_back({{"from", l.from}, {"to", l.to}, {"z", z}});
  }
  j["loads"] = nlohmann::json::array();
  for (const auto& l : loads) {
    j["loads"].push_back({{"node", l.node},
                          {"connection", l.is_delta ? "delta" : "wye"},
                          {"phases", l.phases}});
  }
  j["base"] = {{"s_va", base_power_va}, {"v_volts", base_voltage_v}};
  return j;
}

FeederSpec load_feeder(const std::string& path) {
  return FeederSpec::from_json(load_json_file(path));
}

bool NetworkModel::has_node(int node) const {
  return std::binary_search(node_ids_.begin(), node_ids_.end(), node);
}

int NetworkModel::flat_index(int node, Phase p) const {
  auto it = flat_.find({node, static_cast<int>(p)});
  if (it == flat_.end()) {
    throw ModelError("node " + std::to_string(node) + " has no phase " +
                     std::string(1, phase_letter(p)));
  }
  return it->second;
}

std::vector<int> NetworkModel::node_flat_indices(int node) const {
  if (!has_node(node)) throw ModelError("unknown node " + std::to_string(node));
  std::vector<int> out;
  for (const auto& [key, flat] : flat_) {
    if (key.first == node) out.push_back(flat);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> NetworkModel::node_wye_entries(int node) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < wye_owner_.size(); ++i) {
    if (wye_owner_[i] == node) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> NetworkModel::node_delta_entries(int node) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < delta_owner_.size(); ++i) {
    if (delta_owner_[i] == node) out.push_back(static_cast<int>(i));
  }
  return out;
}

ComplexInjection NetworkModel::zero_injection() const {
  ComplexInjection inj;
  inj.wye = Eigen::VectorXcd::Zero(wye_count());
  inj.delta = Eigen::VectorXcd::Zero(delta_count());
  return inj;
}

NetworkModel build_network(const FeederSpec& spec) {
  if (spec.lines.empty()) throw ModelError("feeder has no lines (disconnected)");
  if (spec.nodes.empty()) throw ModelError("feeder has no load nodes");

  NetworkModel net;
  net.v0_ = spec.slack;

  // flat phase indexing: nodes sorted by id, phases a < b < c
  std::vector<FeederNode> nodes = spec.nodes;
  std::sort(nodes.begin(), nodes.end(),
            [](const FeederNode& a, const FeederNode& b) { return a.id < b.id; });
  std::map<int, std::vector<Phase>> node_phases;
  for (auto& n : nodes) {
    if (n.id == 0) throw ModelError("node id 0 is reserved for the slack bus");
    if (node_phases.count(n.id)) throw ModelError("duplicate node id " + std::to_string(n.id));
    if (n.phases.empty()) throw ModelError("node " + std::to_string(n.id) + " lists no phases");
    node_phases[n.id] = sorted_unique_phases(n.phases);
  }
  node_phases[0] = {Phase::A, Phase::B, Phase::C};

  for (const auto& n : nodes) {
    for (Phase p : node_phases[n.id]) {
      const int flat = static_cast<int>(net.phases_.size());
      net.phases_.push_back({n.id, p, flat});
      net.flat_[{n.id, static_cast<int>(p)}] = flat;
    }
    net.node_ids_.push_back(n.id);
  }
  const int n_phi = net.phase_count();

  // global slot = 0..2 for slack phases, 3 + flat otherwise
  auto slot = [&](int node, Phase p) -> int {
    if (node == 0) return static_cast<int>(p);
    return 3 + net.flat_index(node, p);
  };

  Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(3 + n_phi, 3 + n_phi);
  Dsu dsu;
  dsu.find(0);
  for (const auto& n : nodes) dsu.find(n.id);

  for (const auto& line : spec.lines) {
    for (int end : {line.from, line.to}) {
      if (end != 0 && !node_phases.count(end)) {
        throw ModelError("line references unknown node " + std::to_string(end));
      }
    }
    if (line.from == line.to) throw ModelError("line endpoints coincide");
    std::vector<Phase> shared;
    for (Phase p : node_phases[line.from]) {
      const auto& other = node_phases[line.to];
      if (std::find(other.begin(), other.end(), p) != other.end()) shared.push_back(p);
    }
    if (shared.empty()) throw ModelError("line endpoints share no phase");
    const auto dim = static_cast<Eigen::Index>(shared.size());
    if (line.z.rows() != dim || line.z.cols() != dim) {
      std::ostringstream msg;
      msg << "line " << line.from << "-" << line.to << " impedance must be " << dim << "x" << dim;
      throw ModelError(msg.str());
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> zlu(line.z);
    if (!zlu.isInvertible()) throw ModelError("line impedance matrix is singular");
    const Eigen::MatrixXcd y = zlu.inverse();
    for (Eigen::Index r = 0; r < dim; ++r) {
      for (Eigen::Index c = 0; c < dim; ++c) {
        const int rf = slot(line.from, shared[static_cast<std::size_t>(r)]);
        const int rt = slot(line.to, shared[static_cast<std::size_t>(r)]);
        const int cf = slot(line.from, shared[static_cast<std::size_t>(c)]);
        const int ct = slot(line.to, shared[static_cast<std::size_t>(c)]);
        ybus(rf, cf) += y(r, c);
        ybus(rt, ct) += y(r, c);
        ybus(rf, ct) -= y(r, c);
        ybus(rt, cf) -= y(r, c);
      }
    }
    dsu.unite(line.from, line.to);
  }

  for (const auto& n : nodes) {
    if (dsu.find(n.id) != dsu.find(0)) {
      throw ModelError("node " + std::to_string(n.id) + " is not connected to the slack bus");
    }
  }

  net.y_l0_ = ybus.block(3, 0, n_phi, 3);
  net.y_ll_ = ybus.block(3, 3, n_phi, n_phi);

  Eigen::FullPivLU<Eigen::MatrixXcd> check(net.y_ll_);
  if (!check.isInvertible()) throw ModelError("Y_LL is singular");
  net.lu_.compute(net.y_ll_);
  net.w_ = net.lu_.solve(-net.y_l0_ * net.v0_);

  // load connections -> injection slots and the delta incidence map
  std::set<std::pair<int, bool>> seen;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<FeederLoad> loads = spec.loads;
  std::stable_sort(loads.begin(), loads.end(),
                   [](const FeederLoad& a, const FeederLoad& b) { return a.node < b.node; });
  for (const auto& load : loads) {
    if (!node_phases.count(load.node)) {
      throw ModelError("load references unknown node " + std::to_string(load.node));
    }
    if (!seen.insert({load.node, load.is_delta}).second) {
      throw ModelError("duplicate load entry for node " + std::to_string(load.node));
    }
    if (load.phases.empty()) throw ModelError("load lists no phases");
    if (!load.is_delta) {
      std::set<char> uniq;
      for (const auto& ph : load.phases) {
        if (ph.size() != 1) throw ModelError("wye load phases must be single letters");
        if (!uniq.insert(ph[0]).second) throw ModelError("duplicate phase in load");
      }
      for (char c : uniq) {  // set iterates a < b < c
        net.wye_phases_.push_back(net.flat_index(load.node, phase_from_letter(c)));
        net.wye_owner_.push_back(load.node);
      }
    } else {
      // pairs ordered ab < bc < ca
      static const std::vector<std::string> order = {"ab", "bc", "ca"};
      std::set<std::string> uniq(load.phases.begin(), load.phases.end());
      if (uniq.size() != load.phases.size()) throw ModelError("duplicate pair in delta load");
      for (const auto& pair : order) {
        if (!uniq.count(pair)) continue;
        uniq.erase(pair);
        const int pos = net.flat_index(load.node, phase_from_letter(pair[0]));
        const int neg = net.flat_index(load.node, phase_from_letter(pair[1]));
        const int row = static_cast<int>(net.delta_pairs_.size());
        net.delta_pairs_.emplace_back(pos, neg);
        net.delta_owner_.push_back(load.node);
        trip.emplace_back(row, pos, 1.0);
        trip.emplace_back(row, neg, -1.0);
      }
      if (!uniq.empty()) throw ModelError("delta phases must be among ab, bc, ca");
    }
  }

  net.h_.resize(static_cast<int>(net.delta_pairs_.size()), n_phi);
  net.h_.setFromTriplets(trip.begin(), trip.end());
  return net;
}

Eigen::VectorXcd pf_residual(const NetworkModel& net, const Eigen::VectorXcd& v,
                             const ComplexInjection& inj) {
  const int n = net.phase_count();
  if (v.size() != n) throw std::invalid_argument("voltage vector has wrong dimension");
  if (inj.wye.size() != net.wye_count() || inj.delta.size() != net.delta_count()) {
    throw std::invalid_argument("injection dimensions do not match the network");
  }
  for (std::size_t j = 0; j < net.wye_phases().size(); ++j) {
    if (std::abs(v[net.wye_phases()[j]]) < kVoltageFloor) {
      throw PowerFlowError("zero voltage at a wye-loaded phase");
    }
  }
  const Eigen::VectorXcd i = net.ybus_l0() * net.slack_voltage() + net.ybus_ll() * v;

  Eigen::VectorXcd residual = -v.cwiseProduct(i.conjugate());
  for (std::size_t j = 0; j < net.wye_phases().size(); ++j) {
    residual[net.wye_phases()[j]] += inj.wye[static_cast<Eigen::Index>(j)];
  }
  for (std::size_t r = 0; r < net.delta_pairs().size(); ++r) {
    const auto [pos, neg] = net.delta_pairs()[r];
    const std::complex<double> hv = v[pos] - v[neg];
    if (std::abs(hv) < kVoltageFloor) {
      throw PowerFlowError("zero phase-to-phase voltage at a delta-loaded pair");
    }
    // conjugated delta current recovered from s^D = diag(Hv) (i^D)*
    const std::complex<double> i_delta_conj = inj.delta[static_cast<Eigen::Index>(r)] / hv;
    residual[pos] += i_delta_conj * v[pos];
    residual[neg] -= i_delta_conj * v[neg];
  }
  return residual;
}

Eigen::VectorXcd solve_power_flow(const NetworkModel& net, const ComplexInjection& inj,
                                  const Eigen::VectorXcd& v_init, double tol, int max_iter) {
  if (tol <= 0) throw std::invalid_argument("tol must be positive");
  const int n = net.phase_count();
  if (v_init.size() != n) throw std::invalid_argument("v_init has wrong dimension");

  Eigen::VectorXcd v = v_init;
  for (int iter = 0; iter <= max_iter; ++iter) {
    const Eigen::VectorXcd residual = pf_residual(net, v, inj);
    if (residual.lpNorm<Eigen::Infinity>() <= tol) return v;
    if (iter == max_iter) break;

    Eigen::VectorXcd current = Eigen::VectorXcd::Zero(n);
    for (std::size_t j = 0; j < net.wye_phases().size(); ++j) {
      const int f = net.wye_phases()[j];
      current[f] += std::conj(inj.wye[static_cast<Eigen::Index>(j)]) / std::conj(v[f]);
    }
    for (std::size_t r = 0; r < net.delta_pairs().size(); ++r) {
      const auto [pos, neg] = net.delta_pairs()[r];
      const std::complex<double> hv = v[pos] - v[neg];
      const std::complex<double> i_delta =
          std::conj(inj.delta[static_cast<Eigen::Index>(r)]) / std::conj(hv);
      current[pos] += i_delta;
      current[neg] -= i_delta;
    }
    v = net.zero_load_voltage() + net.yll_lu().solve(current);
    if (!v.allFinite()) throw PowerFlowError("power-flow iteration diverged (non-finite voltage)");
  }
  throw PowerFlowError("power flow did not converge in " + std::to_string(max_iter) +
                       " iterations (loading beyond the contraction region)");
}

}  // namespace ddse
