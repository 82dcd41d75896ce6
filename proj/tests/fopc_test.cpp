#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "ddse/fopc.hpp"
#include "support/synthetic.hpp"
#include "support/test_feeders.hpp"

using namespace ddse;
using namespace ddse::testing;

namespace {

/// f(u) = (a/2)|u - c|^2 through the snapshot machinery (no measurements).
CostSnapshot quadratic_cost(const Eigen::VectorXd& c, double a) {
  StateLayout layout{static_cast<int>(c.size()) / 2, 0};
  CostParams params;
  params.voltage_weight = 1.0;
  params.huber_delta = 1.0;
  params.reg_weight = a;
  params.prior = c;
  MeasurementFrame frame;
  frame.y_v.resize(0);
  frame.y_u_wye.resize(0);
  frame.y_u_delta.resize(0);
  return CostSnapshot(layout, Eigen::MatrixXd(0, c.size()), Eigen::VectorXd(0), RowSelection{},
                      frame, params);
}

}  // namespace

TEST_CASE("certificate arithmetic") {
  // bounds engineered so that rho_P = rho_C = 0.8 at alpha = beta = 0.2
  ConvexityBounds b;
  b.strong_convexity = 1.0;
  b.smoothness = 5.0;
  FopcConfig cfg;
  cfg.alpha = 0.2;
  cfg.beta = 0.2;
  cfg.gamma = 0.0;
  cfg.prediction_steps = 4;

  SUBCASE("minimum correction count") {
    cfg.correction_steps = 3;
    const ConvergenceCertificate cert = certify(cfg, b);
    CHECK(cert.rho_p == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(cert.rho_c == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(cert.min_correction_steps == 3);
    CHECK(std::abs(cert.tau0 - 0.8 * 0.8 * 0.8 * (2.0 * std::pow(0.8, 4) + 1.0)) <= 1e-12);
    CHECK(std::abs(cert.tau0 - 0.9314) <= 1e-4);
    CHECK(cert.valid);
  }
  SUBCASE("two corrections are not enough") {
    cfg.correction_steps = 2;
    const ConvergenceCertificate cert = certify(cfg, b);
    CHECK(cert.tau0 > 1.0);
    CHECK_FALSE(cert.valid);
  }
  SUBCASE("zero corrections never certify") {
    cfg.correction_steps = 0;
    for (double gamma : {0.0, 0.5, 1.0}) {
      cfg.gamma = gamma;
      const ConvergenceCertificate cert = certify(cfg, b);
      CHECK(cert.tau0 >= 1.0);
      CHECK_FALSE(cert.valid);
    }
  }
  SUBCASE("divergent correction stepsize yields no attainable C") {
    cfg.beta = 0.5;  // beta > 2/L, rho_C > 1
    cfg.correction_steps = 3;
    const ConvergenceCertificate cert = certify(cfg, b);
    CHECK(cert.min_correction_steps == -1);
    CHECK_FALSE(cert.valid);
  }
}

TEST_CASE("prediction") {
  Eigen::VectorXd c(2);
  c << 0.7, -0.4;
  const CostSnapshot cost = quadratic_cost(c, 1.0);  // hessian = I
  const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(2);

  SUBCASE("one full step with gamma = 1 is an exact Newton step") {
    const Eigen::VectorXd u = predict_state(cost, nullptr, u0, 1, 1.0, 1.0);
    CHECK((u - c).lpNorm<Eigen::Infinity>() <= 1e-15);
  }
  SUBCASE("P = 0 leaves the estimate unchanged") {
    const Eigen::VectorXd u = predict_state(cost, nullptr, u0, 0, 1.0, 1.0);
    CHECK((u - u0).norm() == 0.0);
  }
  SUBCASE("gamma = 0 with a static cost is the identity for any P") {
    for (int p : {1, 3, 7}) {
      const Eigen::VectorXd u = predict_state(cost, &cost, u0, p, 0.7, 0.0);
      CHECK((u - u0).norm() == 0.0);
    }
  }
}

TEST_CASE("correction") {
  Eigen::VectorXd c(2);
  c << -0.3, 0.9;
  const CostSnapshot cost = quadratic_cost(c, 2.0);  // hessian = 2 I

  SUBCASE("one step at beta = 1/curvature lands on the optimum") {
    const Eigen::VectorXd u = correct_state(cost, Eigen::VectorXd::Zero(2), 1, 0.5);
    CHECK((u - c).lpNorm<Eigen::Infinity>() <= 1e-15);
  }
  SUBCASE("splitting the loop composes exactly") {
    Eigen::VectorXd u0(2);
    u0 << 0.2, 0.1;
    const Eigen::VectorXd whole = correct_state(cost, u0, 5, 0.2);
    const Eigen::VectorXd split = correct_state(cost, correct_state(cost, u0, 2, 0.2), 3, 0.2);
    CHECK((whole - split).norm() == 0.0);
  }
  SUBCASE("descent at beta = 1/L on random snapshots") {
    Rng rng(71);
    const NetworkModel net = build_network(four_node_spec());
    SelectionSets sets;
    sets.pmu_nodes = {2};
    sets.metered_wye = {1, 4};
    sets.metered_delta = {3};
    const RowSelection sel = build_selection(net, sets);
    const LinearPowerFlowModel model = linearize(net, net.zero_load_voltage());
    const Eigen::MatrixXd full = model.full_matrix();
    Eigen::MatrixXd g_v(sel.v_rows.size(), full.cols());
    Eigen::VectorXd m_v(sel.v_rows.size());
    for (std::size_t i = 0; i < sel.v_rows.size(); ++i) {
      g_v.row(static_cast<Eigen::Index>(i)) = full.row(sel.v_rows[i]);
      m_v[static_cast<Eigen::Index>(i)] = model.offset[sel.v_rows[i]];
    }
    MeasurementFrame frame;
    frame.y_v.resize(g_v.rows());
    for (Eigen::Index i = 0; i < frame.y_v.size(); ++i) frame.y_v[i] = m_v[i] + rng.uniform(-0.01, 0.01);
    frame.y_u_wye.resize(sel.wye_rows.size());
    frame.y_u_delta.resize(sel.delta_rows.size());
    for (Eigen::Index i = 0; i < frame.y_u_wye.size(); ++i) frame.y_u_wye[i] = rng.uniform(-0.03, 0.0);
    for (Eigen::Index i = 0; i < frame.y_u_delta.size(); ++i) frame.y_u_delta[i] = rng.uniform(-0.03, 0.0);
    CostParams params;
    params.voltage_weight = 100.0;
    params.huber_delta = 8e-4;
    params.reg_weight = 1.0;
    const CostSnapshot snap(model.layout, g_v, m_v, sel, frame, params);
    const double beta = 1.0 / snap.bounds().smoothness;
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd u(snap.dim());
      for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.uniform(-0.05, 0.05);
      double prev = snap.value(u);
      for (int c2 = 0; c2 < 5; ++c2) {
        u = correct_state(snap, u, 1, beta);
        const double now = snap.value(u);
        CHECK(now <= prev + 1e-15);
        prev = now;
      }
    }
  }
}

TEST_CASE("model refresh") {
  auto net = std::make_shared<const NetworkModel>(build_network(four_node_spec()));
  SelectionSets sets;
  sets.pmu_nodes = {2, 4};
  const RowSelection sel = build_selection(*net, sets);
  const Eigen::VectorXd z0 = stack_voltage(net->zero_load_voltage());

  SUBCASE("refresh at the zero-load profile equals linearize at w") {
    const ModelRefresh refresh = refresh_model(*net, sel, z0, nullptr);
    const LinearPowerFlowModel direct = linearize(*net, net->zero_load_voltage());
    CHECK((refresh.model.m_wye - direct.m_wye).norm() == 0.0);
    CHECK((refresh.model.m_delta - direct.m_delta).norm() == 0.0);
    CHECK_FALSE(refresh.fallback);
  }
  SUBCASE("identical inputs give identical operators") {
    const ModelRefresh a = refresh_model(*net, sel, z0, nullptr);
    const ModelRefresh b = refresh_model(*net, sel, z0, nullptr);
    CHECK((a.g_v - b.g_v).norm() == 0.0);
  }
  SUBCASE("degenerate prediction falls back to the previous anchor") {
    const LinearPowerFlowModel previous = linearize(*net, net->zero_load_voltage());
    const Eigen::VectorXd z_bad = Eigen::VectorXd::Zero(z0.size());
    CHECK_THROWS_AS(refresh_model(*net, sel, z_bad, nullptr), PowerFlowError);
    const ModelRefresh refresh = refresh_model(*net, sel, z_bad, &previous);
    CHECK(refresh.fallback);
    CHECK((refresh.model.anchor - previous.anchor).norm() == 0.0);
  }
  SUBCASE("re-anchoring tracks a loading ramp better than a frozen model") {
    Rng rng(13);
    const ComplexInjection direction = random_injection(*net, rng, 0.6);
    const LinearPowerFlowModel frozen = linearize(*net, net->zero_load_voltage());
    double err_frozen = 0.0, err_refreshed = 0.0;
    Eigen::VectorXcd v_prev = net->zero_load_voltage();
    for (int k = 1; k <= 12; ++k) {
      const double scale = k / 12.0;
      ComplexInjection inj = net->zero_injection();
      inj.wye = scale * direction.wye;
      inj.delta = scale * direction.delta;
      const Eigen::VectorXcd v_true = solve_power_flow(*net, inj, v_prev, 1e-12);
      const Eigen::VectorXd u = pack_state(frozen.layout, inj);
      const LinearPowerFlowModel fresh = linearize(*net, v_prev);  // anchor: previous truth
      err_frozen += (frozen.evaluate(u) - stack_voltage(v_true)).norm();
      err_refreshed += (fresh.evaluate(u) - stack_voltage(v_true)).norm();
      v_prev = v_true;
    }
    CHECK(err_refreshed < err_frozen);
  }
}

TEST_CASE("batch solve") {
  Rng rng(81);

  SUBCASE("pure quadratic matches the normal equations") {
    StateLayout layout{2, 1};
    RowSelection sel;
    sel.wye_rows = {0, 2};
    sel.delta_rows = {1};
    Eigen::MatrixXd g_v(4, layout.dim());
    for (Eigen::Index r = 0; r < 4; ++r) {
      for (Eigen::Index c = 0; c < layout.dim(); ++c) g_v(r, c) = rng.uniform(-0.4, 0.4);
    }
    MeasurementFrame frame;
    frame.y_v.resize(4);
    for (Eigen::Index i = 0; i < 4; ++i) frame.y_v[i] = rng.uniform(-0.2, 0.2);
    frame.y_u_wye.resize(2);
    frame.y_u_wye << 0.03, -0.02;
    frame.y_u_delta.resize(1);
    frame.y_u_delta << 0.01;
    CostParams params;
    params.voltage_weight = 5.0;
    params.huber_delta = 100.0;  // quadratic everywhere
    params.reg_weight = 1.3;
    const Eigen::VectorXd m_v = Eigen::VectorXd::Zero(4);
    const CostSnapshot snap(layout, g_v, m_v, sel, frame, params);

    Eigen::MatrixXd normal = params.voltage_weight * g_v.transpose() * g_v +
                             params.reg_weight * Eigen::MatrixXd::Identity(6, 6);
    Eigen::VectorXd rhs = params.voltage_weight * g_v.transpose() * frame.y_v;
    const std::vector<int> u_idx = {0, 2, 2 * layout.wye + 1};
    const double y_sel[3] = {0.03, -0.02, 0.01};
    for (int i = 0; i < 3; ++i) {
      normal(u_idx[static_cast<std::size_t>(i)], u_idx[static_cast<std::size_t>(i)]) += 1.0;
      rhs[u_idx[static_cast<std::size_t>(i)]] += y_sel[i];
    }
    const Eigen::VectorXd closed_form = normal.ldlt().solve(rhs);

    const BatchResult batch = batch_solve(snap, Eigen::VectorXd::Zero(6), 1e-12);
    REQUIRE(batch.converged);
    CHECK((batch.u - closed_form).lpNorm<Eigen::Infinity>() <= 1e-8);

    SUBCASE("warm start at the optimum returns immediately") {
      const BatchResult again = batch_solve(snap, batch.u, 1e-9);
      CHECK(again.converged);
      CHECK(again.iterations == 0);
    }
  }

  SUBCASE("huber-active toy matches a refined grid search") {
    StateLayout layout{1, 0};
    RowSelection sel;
    sel.wye_rows = {0, 1};
    Eigen::MatrixXd g_v(2, 2);
    g_v << 0.2, 0.05, -0.04, 0.18;
    MeasurementFrame frame;
    frame.y_v.resize(2);
    frame.y_v << 0.021, -0.013;
    frame.y_u_wye.resize(2);
    frame.y_u_wye << 0.09, -0.30;  // second meter is a gross outlier
    frame.y_u_delta.resize(0);
    CostParams params;
    params.voltage_weight = 2.0;
    params.huber_delta = 0.02;
    params.reg_weight = 1.0;
    const CostSnapshot snap(layout, g_v, Eigen::VectorXd::Zero(2), sel, frame, params);

    // coarse-to-fine exhaustive search, final resolution 1e-5
    Eigen::Vector2d center(0.0, 0.0);
    double span = 0.5;
    for (int pass = 0; pass < 4; ++pass) {
      double best = std::numeric_limits<double>::infinity();
      Eigen::Vector2d best_u = center;
      const int grid = 100;
      for (int i = 0; i <= grid; ++i) {
        for (int j = 0; j <= grid; ++j) {
          Eigen::VectorXd u(2);
          u << center[0] - span + 2.0 * span * i / grid, center[1] - span + 2.0 * span * j / grid;
          const double val = snap.value(u);
          if (val < best) {
            best = val;
            best_u = u;
          }
        }
      }
      center = best_u;
      span *= 0.05;
    }

    const BatchResult batch = batch_solve(snap, Eigen::VectorXd::Zero(2), 1e-12);
    REQUIRE(batch.converged);
    CHECK((batch.u - center).lpNorm<Eigen::Infinity>() <= 1e-4);
  }
}

TEST_CASE("estimator on a static scenario") {
  auto net = std::make_shared<const NetworkModel>(build_network(four_node_spec()));
  SelectionSets sets;
  sets.pmu_nodes = {2, 4};
  sets.metered_wye = {1, 4};
  sets.metered_delta = {3};
  const RowSelection sel = build_selection(*net, sets);

  SyntheticProfileConfig pcfg;
  pcfg.loads = net->wye_count() + net->delta_count();
  pcfg.samples = 100;
  pcfg.resolution = 1.0;
  pcfg.base = -0.03;
  pcfg.amplitude = 0.0;  // static loads
  pcfg.seed = 2;
  const LoadProfile profile = synth_profile(pcfg);

  StreamConfig scfg;
  scfg.h = 1.0;
  scfg.steps = 100;
  scfg.seed = 5;
  const SimulationResult sim = simulate_scenario(*net, sel, profile, scfg);

  FopcConfig cfg;
  cfg.prediction_steps = 0;
  cfg.correction_steps = 8;
  cfg.gamma = 0.0;
  cfg.h = 1.0;
  CostParams params;
  params.voltage_weight = 1e3;
  params.huber_delta = 0.05;  // wide quadratic region: no huber-tail crawl
  params.reg_weight = 1e-8;   // the noiseless optimum then sits on the truth
  FopcEstimator est(net, sel, cfg, params);

  double prev_err = std::numeric_limits<double>::infinity();
  Eigen::VectorXd u_star;
  for (const auto& frame : sim.frames) {
    est.step(frame);
    const BatchResult batch = batch_solve(
        est.current_cost(), u_star.size() ? u_star : est.state().u_hat, 1e-12, 2000000);
    u_star = batch.u;
    const double err = (est.state().u_hat - u_star).norm();
    CHECK(err <= prev_err * (1.0 + 1e-6) + 1e-12);
    prev_err = err;
  }
  const Eigen::VectorXd u_true = sim.u_true.row(scfg.steps - 1);
  CHECK((est.state().u_hat - u_true).norm() <= 1e-6 * u_true.norm());

  SUBCASE("same stream and config reproduce the trajectory") {
    FopcEstimator a(net, sel, cfg, params);
    FopcEstimator b(net, sel, cfg, params);
    for (const auto& frame : sim.frames) {
      a.step(frame);
      b.step(frame);
      CHECK((a.state().u_hat - b.state().u_hat).norm() == 0.0);
    }
  }
  SUBCASE("frames must arrive in order") {
    FopcEstimator a(net, sel, cfg, params);
    a.step(sim.frames[0]);
    CHECK_THROWS_AS(a.step(sim.frames[0]), std::invalid_argument);
    CHECK_THROWS_AS(a.step(sim.frames[2]), std::invalid_argument);
  }
}

TEST_CASE("affine equivariance of the optimizer updates") {
  Rng rng(91);
  StateLayout layout{2, 1};
  RowSelection sel;
  sel.wye_rows = {0, 1, 2, 3};
  sel.delta_rows = {0, 1};
  Eigen::MatrixXd g_v(4, layout.dim());
  for (Eigen::Index r = 0; r < 4; ++r) {
    for (Eigen::Index c = 0; c < layout.dim(); ++c) g_v(r, c) = rng.uniform(-0.3, 0.3);
  }
  Eigen::VectorXd shift(layout.dim());
  for (Eigen::Index i = 0; i < shift.size(); ++i) shift[i] = rng.uniform(-0.2, 0.2);

  auto build = [&](const Eigen::VectorXd& s) {
    MeasurementFrame frame;
    frame.y_v = g_v * s;  // base measurements zero, shifted consistently
    for (Eigen::Index i = 0; i < frame.y_v.size(); ++i) frame.y_v[i] += 0.01 * std::sin(double(i));
    frame.y_u_wye.resize(4);
    frame.y_u_delta.resize(2);
    for (std::size_t i = 0; i < sel.wye_rows.size(); ++i) {
      frame.y_u_wye[static_cast<Eigen::Index>(i)] = 0.002 * double(i) + s[sel.wye_rows[i]];
    }
    for (std::size_t i = 0; i < sel.delta_rows.size(); ++i) {
      frame.y_u_delta[static_cast<Eigen::Index>(i)] =
          -0.003 * double(i + 1) + s[2 * layout.wye + sel.delta_rows[i]];
    }
    CostParams params;
    params.voltage_weight = 7.0;
    params.huber_delta = 1e-3;
    params.reg_weight = 1.0;
    params.prior = s;
    return CostSnapshot(layout, g_v, Eigen::VectorXd::Zero(4), sel, frame, params);
  };

  const CostSnapshot base = build(Eigen::VectorXd::Zero(layout.dim()));
  const CostSnapshot moved = build(shift);

  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(layout.dim());
  const Eigen::VectorXd a1 = correct_state(base, u0, 4, 0.1);
  const Eigen::VectorXd b1 = correct_state(moved, u0 + shift, 4, 0.1);
  CHECK((b1 - (a1 + shift)).lpNorm<Eigen::Infinity>() <= 1e-12);

  const Eigen::VectorXd a2 = predict_state(base, &base, a1, 3, 0.1, 0.8);
  const Eigen::VectorXd b2 = predict_state(moved, &moved, b1, 3, 0.1, 0.8);
  CHECK((b2 - (a2 + shift)).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("tracking properties on the synthetic drifting quadratic") {
  DriftConfig cfg;  // uniform spectrum, P=2, C=3, alpha=beta=0.2, gamma=0

  SUBCASE("certificate is valid and the error ratio respects tau0") {
    const DriftResult run = run_drift(cfg);
    REQUIRE(run.cert.valid);
    CHECK(run.cert.tau0 < 1.0);
    for (std::size_t k = 2; k + 1 < run.err.size(); ++k) {
      if (run.err[k] >= 10.0 * run.floor) {
        CHECK(run.err[k + 1] / run.err[k] <= run.cert.tau0 + 0.05);
      }
    }
  }
  SUBCASE("steady-state error scales linearly in the sampling period") {
    const DriftResult coarse = run_drift(cfg);
    DriftConfig half = cfg;
    half.h = cfg.h / 2.0;
    half.steps = cfg.steps * 2;
    const DriftResult fine = run_drift(half);
    const double ratio = fine.floor / coarse.floor;
    CHECK(ratio >= 0.35);
    CHECK(ratio <= 0.7);
  }
  SUBCASE("one more correction shrinks the floor by about rho_C") {
    DriftConfig base = cfg;
    base.prediction_steps = 0;  // pure correction, uniform spectrum
    DriftConfig more = base;
    more.correction_steps = base.correction_steps + 1;
    const DriftResult a = run_drift(base);
    const DriftResult b = run_drift(more);
    const double ratio = b.floor / a.floor;
    CHECK(ratio >= 0.8 * a.cert.rho_c);
    CHECK(ratio <= 1.2 * a.cert.rho_c);
  }
  SUBCASE("prediction lowers the floor at fixed C") {
    DriftConfig p0 = cfg;
    p0.prediction_steps = 0;
    p0.correction_steps = 5;
    DriftConfig p5 = p0;
    p5.prediction_steps = 5;
    const DriftResult a = run_drift(p0);
    const DriftResult b = run_drift(p5);
    CHECK(b.floor <= a.floor);
  }
}
