#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "ddse/network.hpp"
#include "ddse/rng.hpp"

namespace ddse::testing {

inline Eigen::Vector3cd balanced_slack() {
  const double s = std::sqrt(3.0) / 2.0;
  Eigen::Vector3cd v0;
  v0 << std::complex<double>(1.0, 0.0), std::complex<double>(-0.5, -s),
      std::complex<double>(-0.5, s);
  return v0;
}

/// Single-phase 2-bus toy: line admittance 10 S, one wye load at node 1.
inline FeederSpec two_bus_spec() {
  FeederSpec spec;
  spec.slack = balanced_slack();
  spec.nodes = {{1, {Phase::A}}};
  FeederLine line;
  line.from = 0;
  line.to = 1;
  line.z = Eigen::MatrixXcd::Constant(1, 1, std::complex<double>(0.1, 0.0));
  spec.lines = {line};
  spec.loads = {{1, false, {"a"}}};
  return spec;
}

inline Eigen::MatrixXcd coupled_z(int dim, std::complex<double> diag, std::complex<double> off) {
  Eigen::MatrixXcd z = Eigen::MatrixXcd::Constant(dim, dim, off);
  z.diagonal().setConstant(diag);
  return z;
}

/// Four three-phase nodes on a short radial feeder; wye loads at 1 and 4,
/// a delta load at 3, node 2 zero-injection.
inline FeederSpec four_node_spec() {
  FeederSpec spec;
  spec.slack = balanced_slack();
  for (int id = 1; id <= 4; ++id) spec.nodes.push_back({id, {Phase::A, Phase::B, Phase::C}});
  const Eigen::MatrixXcd z = coupled_z(3, {0.01, 0.025}, {0.003, 0.008});
  spec.lines = {{0, 1, z}, {1, 2, z}, {2, 3, z}, {2, 4, z}};
  spec.loads = {{1, false, {"a", "b", "c"}}, {3, true, {"ab", "bc", "ca"}},
                {4, false, {"a", "b", "c"}}};
  return spec;
}

/// Random small radial feeders for property tests: 4 nodes with random
/// phase sets, random line impedances, random load placement.
inline FeederSpec random_small_spec(Rng& rng) {
  FeederSpec spec;
  spec.slack = balanced_slack();
  std::vector<std::vector<Phase>> phase_sets;
  for (int id = 1; id <= 4; ++id) {
    std::vector<Phase> phases;
    // at least one phase; deeper nodes may drop some
    for (Phase p : {Phase::A, Phase::B, Phase::C}) {
      if (id <= 2 || rng.uniform() < 0.7) phases.push_back(p);
    }
    if (phases.empty()) phases.push_back(Phase::B);
    phase_sets.push_back(phases);
    spec.nodes.push_back({id, phases});
  }
  auto shared = [&](int a, int b) {
    const auto& pa = a == 0 ? std::vector<Phase>{Phase::A, Phase::B, Phase::C}
                            : phase_sets[static_cast<std::size_t>(a - 1)];
    const auto& pb = phase_sets[static_cast<std::size_t>(b - 1)];
    int count = 0;
    for (Phase p : pa) {
      if (std::find(pb.begin(), pb.end(), p) != pb.end()) ++count;
    }
    return count;
  };
  const int parents[4] = {0, 1, 2, 2};
  for (int id = 1; id <= 4; ++id) {
    const int dim = shared(parents[id - 1], id);
    Eigen::MatrixXcd z = coupled_z(dim, {0.01 + 0.01 * rng.uniform(), 0.02 + 0.02 * rng.uniform()},
                                   {0.002 + 0.002 * rng.uniform(), 0.005 + 0.005 * rng.uniform()});
    spec.lines.push_back({parents[id - 1], id, z});
  }
  for (int id = 1; id <= 4; ++id) {
    const auto& phases = phase_sets[static_cast<std::size_t>(id - 1)];
    if (rng.uniform() < 0.7) {
      FeederLoad load;
      load.node = id;
      load.is_delta = false;
      for (Phase p : phases) {
        if (rng.uniform() < 0.8) load.phases.push_back(std::string(1, phase_letter(p)));
      }
      if (!load.phases.empty()) spec.loads.push_back(load);
    }
    if (phases.size() == 3 && rng.uniform() < 0.5) {
      spec.loads.push_back({id, true, {"ab", "bc", "ca"}});
    }
  }
  if (spec.loads.empty()) spec.loads.push_back({1, false, {std::string(1, phase_letter(phase_sets[0][0]))}});
  return spec;
}

inline ComplexInjection random_injection(const NetworkModel& net, Rng& rng, double scale) {
  ComplexInjection inj = net.zero_injection();
  for (Eigen::Index i = 0; i < inj.wye.size(); ++i) {
    inj.wye[i] = {scale * (rng.uniform() - 0.8), scale * (rng.uniform() - 0.8) * 0.4};
  }
  for (Eigen::Index i = 0; i < inj.delta.size(); ++i) {
    inj.delta[i] = {scale * (rng.uniform() - 0.8), scale * (rng.uniform() - 0.8) * 0.4};
  }
  return inj;
}

}  // namespace ddse::testing
