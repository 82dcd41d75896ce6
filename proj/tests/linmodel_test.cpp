#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ddse/linear_model.hpp"
#include "support/test_feeders.hpp"

using namespace ddse;
using namespace ddse::testing;

TEST_CASE("two-bus sensitivity block at the zero-load anchor") {
  const NetworkModel net = build_network(two_bus_spec());
  const LinearPowerFlowModel model = linearize(net, net.zero_load_voltage());
  // A = Y_LL^-1 diag(conj(w))^-1 = 0.1, so M^Y = [[0.1, 0], [0, -0.1]]
  REQUIRE(model.m_wye.rows() == 2);
  REQUIRE(model.m_wye.cols() == 2);
  CHECK(model.m_wye(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(model.m_wye(0, 1) == doctest::Approx(0.0));
  CHECK(model.m_wye(1, 0) == doctest::Approx(0.0));
  CHECK(model.m_wye(1, 1) == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("offset equals the stacked zero-load voltage bit for bit") {
  const NetworkModel net = build_network(four_node_spec());
  Eigen::VectorXcd anchor = net.zero_load_voltage() * 1.01;
  const LinearPowerFlowModel model = linearize(net, anchor);
  const Eigen::VectorXd m = stack_voltage(net.zero_load_voltage());
  for (Eigen::Index i = 0; i < m.size(); ++i) CHECK(model.offset[i] == m[i]);
}

TEST_CASE("degenerate anchors are rejected") {
  const NetworkModel net = build_network(two_bus_spec());
  Eigen::VectorXcd anchor(1);
  anchor[0] = 0.0;
  CHECK_THROWS(linearize(net, anchor));
}

TEST_CASE("evaluate") {
  const NetworkModel net = build_network(two_bus_spec());
  const LinearPowerFlowModel model = linearize(net, net.zero_load_voltage());

  SUBCASE("u = 0 returns the offset exactly") {
    const Eigen::VectorXd z = model.evaluate(Eigen::VectorXd::Zero(2));
    CHECK((z - model.offset).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  SUBCASE("hand-computed point") {
    Eigen::VectorXd u(2);
    u << 0.1, 0.0;
    const Eigen::VectorXd z = model.evaluate(u);
    CHECK(z[0] == doctest::Approx(1.01).epsilon(1e-12));
    CHECK(z[1] == doctest::Approx(0.0));
  }
  SUBCASE("affinity: doubling u doubles z - m") {
    Eigen::VectorXd u(2);
    u << 0.03, -0.01;
    const Eigen::VectorXd d1 = model.evaluate(u) - model.offset;
    const Eigen::VectorXd d2 = model.evaluate(2.0 * u) - model.offset;
    CHECK((d2 - 2.0 * d1).lpNorm<Eigen::Infinity>() <= 1e-15);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(model.evaluate(Eigen::VectorXd::Zero(3)), std::invalid_argument);
  }
}

TEST_CASE("exactness at an anchor that solves the AC equations") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const NetworkModel net = build_network(random_small_spec(rng));
    const ComplexInjection inj = random_injection(net, rng, 0.04);
    const Eigen::VectorXcd v_hat = solve_power_flow(net, inj, net.zero_load_voltage(), 1e-12);
    const LinearPowerFlowModel model = linearize(net, v_hat);
    const Eigen::VectorXd z = model.evaluate(pack_state(model.layout, inj));
    CHECK((z - stack_voltage(v_hat)).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
}

TEST_CASE("first-order accuracy: error decays as epsilon squared") {
  const NetworkModel net = build_network(four_node_spec());
  Rng rng(9);
  const ComplexInjection base = random_injection(net, rng, 1.0);
  const LinearPowerFlowModel model = linearize(net, net.zero_load_voltage());

  auto model_error = [&](double eps) {
    ComplexInjection inj = net.zero_injection();
    inj.wye = eps * base.wye;
    inj.delta = eps * base.delta;
    const Eigen::VectorXcd v_true = solve_power_flow(net, inj, net.zero_load_voltage(), 1e-13);
    const Eigen::VectorXd z = model.evaluate(pack_state(model.layout, inj));
    return (z - stack_voltage(v_true)).norm();
  };

  const double e1 = model_error(0.04);
  const double e2 = model_error(0.02);
  const double ratio = e1 / e2;
  CHECK(ratio >= 3.0);
  CHECK(ratio <= 5.0);
}

TEST_CASE("state packing round trip") {
  const NetworkModel net = build_network(four_node_spec());
  Rng rng(3);
  const ComplexInjection inj = random_injection(net, rng, 0.1);
  const StateLayout layout = state_layout(net);
  const ComplexInjection back = unpack_state(layout, pack_state(layout, inj));
  CHECK((back.wye - inj.wye).norm() == 0.0);
  CHECK((back.delta - inj.delta).norm() == 0.0);
}

TEST_CASE("debug dump is parseable JSON") {
  const NetworkModel net = build_network(two_bus_spec());
  const LinearPowerFlowModel model = linearize(net, net.zero_load_voltage());
  const nlohmann::json j = model.to_json();
  CHECK(j.contains("m_wye"));
  CHECK(j["offset"].size() == 2);
}
