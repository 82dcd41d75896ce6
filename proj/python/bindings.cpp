#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include <json.hpp>

#include "ddse/fopc.hpp"
#include "ddse/harness.hpp"
#include "ddse/json_io.hpp"
#include "ddse/linear_model.hpp"
#include "ddse/network.hpp"
#include "ddse/sensing.hpp"

namespace py = pybind11;
using namespace ddse;

namespace {

std::shared_ptr<const NetworkModel> network_from_json_text(const std::string& text) {
  return std::make_shared<const NetworkModel>(
      build_network(FeederSpec::from_json(nlohmann::json::parse(text))));
}

std::shared_ptr<const NetworkModel> network_from_file(const std::string& path) {
  return std::make_shared<const NetworkModel>(build_network(load_feeder(path)));
}

ComplexInjection make_injection(const Eigen::VectorXcd& wye, const Eigen::VectorXcd& delta) {
  return ComplexInjection{wye, delta};
}

}  // namespace

PYBIND11_MODULE(_ddse, m) {
  m.doc() = "Streaming multiphase feeder state estimation: fixed-point power "
            "flow, re-anchored linear voltage models, Huber-robust costs and "
            "a first-order prediction-correction tracker.";

  py::register_exception<ModelError>(m, "ModelError");
  py::register_exception<PowerFlowError>(m, "PowerFlowError");

  py::class_<NetworkModel, std::shared_ptr<const NetworkModel>>(m, "NetworkModel")
      .def_property_readonly("phase_count", &NetworkModel::phase_count)
      .def_property_readonly("wye_count", &NetworkModel::wye_count)
      .def_property_readonly("delta_count", &NetworkModel::delta_count)
      .def_property_readonly("node_ids", &NetworkModel::node_ids)
      .def_property_readonly("ybus_ll", &NetworkModel::ybus_ll)
      .def_property_readonly("zero_load_voltage", &NetworkModel::zero_load_voltage)
      .def_property_readonly("slack_voltage",
                             [](const NetworkModel& n) { return Eigen::VectorXcd(n.slack_voltage()); })
      .def_property_readonly("wye_phases", &NetworkModel::wye_phases)
      .def_property_readonly("delta_pairs", &NetworkModel::delta_pairs);

  m.def("load_network", &network_from_file, py::arg("path"),
        "Build the network model from a feeder description file.");
  m.def("network_from_json", &network_from_json_text, py::arg("text"),
        "Build the network model from a feeder description JSON string.");

  m.def(
      "pf_residual",
      [](std::shared_ptr<const NetworkModel> net, const Eigen::VectorXcd& v,
         const Eigen::VectorXcd& wye, const Eigen::VectorXcd& delta) {
        return pf_residual(*net, v, make_injection(wye, delta));
      },
      py::arg("net"), py::arg("v"), py::arg("wye"), py::arg("delta"),
      "Elementwise power-flow defect at voltage v under the given injections.");

  m.def(
      "solve_power_flow",
      [](std::shared_ptr<const NetworkModel> net, const Eigen::VectorXcd& wye,
         const Eigen::VectorXcd& delta, std::optional<Eigen::VectorXcd> v_init, double tol,
         int max_iter) {
        return solve_power_flow(*net, make_injection(wye, delta),
                                v_init ? *v_init : net->zero_load_voltage(), tol, max_iter);
      },
      py::arg("net"), py::arg("wye"), py::arg("delta"), py::arg("v_init") = std::nullopt,
      py::arg("tol") = 1e-10, py::arg("max_iter") = 200,
      "Fixed-point power flow; raises PowerFlowError on non-convergence.");

  py::class_<StateLayout>(m, "StateLayout")
      .def_readonly("wye", &StateLayout::wye)
      .def_readonly("delta", &StateLayout::delta)
      .def_property_readonly("dim", &StateLayout::dim);

  py::class_<LinearPowerFlowModel>(m, "LinearPowerFlowModel")
      .def_readonly("m_wye", &LinearPowerFlowModel::m_wye)
      .def_readonly("m_delta", &LinearPowerFlowModel::m_delta)
      .def_readonly("offset", &LinearPowerFlowModel::offset)
      .def_readonly("anchor", &LinearPowerFlowModel::anchor)
      .def_readonly("layout", &LinearPowerFlowModel::layout)
      .def("evaluate", &LinearPowerFlowModel::evaluate, py::arg("u"))
      .def("full_matrix", &LinearPowerFlowModel::full_matrix);

  m.def(
      "linearize",
      [](std::shared_ptr<const NetworkModel> net, const Eigen::VectorXcd& anchor) {
        return linearize(*net, anchor);
      },
      py::arg("net"), py::arg("anchor"),
      "Sensitivity model of the voltage profile anchored at the given voltage.");

  m.def(
      "pack_state",
      [](std::shared_ptr<const NetworkModel> net, const Eigen::VectorXcd& wye,
         const Eigen::VectorXcd& delta) {
        return pack_state(state_layout(*net), make_injection(wye, delta));
      },
      py::arg("net"), py::arg("wye"), py::arg("delta"));

  m.def("stack_voltage", &stack_voltage, py::arg("v"));
  m.def("unstack_voltage", &unstack_voltage, py::arg("z"));

  m.def("huber", &huber, py::arg("eps"), py::arg("delta"));
  m.def("huber_grad", &huber_grad, py::arg("eps"), py::arg("delta"));
  m.def("huber_curv", &huber_curv, py::arg("eps"), py::arg("delta"));

  py::class_<ConvergenceCertificate>(m, "ConvergenceCertificate")
      .def_readonly("rho_p", &ConvergenceCertificate::rho_p)
      .def_readonly("rho_c", &ConvergenceCertificate::rho_c)
      .def_readonly("tau0", &ConvergenceCertificate::tau0)
      .def_readonly("valid", &ConvergenceCertificate::valid)
      .def_readonly("min_correction_steps", &ConvergenceCertificate::min_correction_steps)
      .def("__repr__", [](const ConvergenceCertificate& c) {
        return "ConvergenceCertificate(rho_p=" + std::to_string(c.rho_p) +
               ", rho_c=" + std::to_string(c.rho_c) + ", tau0=" + std::to_string(c.tau0) +
               ", valid=" + (c.valid ? std::string("True") : std::string("False")) + ")";
      });

  m.def(
      "certify",
      [](int prediction_steps, int correction_steps, double alpha, double beta, double gamma,
         double nu, double smoothness) {
        FopcConfig cfg;
        cfg.prediction_steps = prediction_steps;
        cfg.correction_steps = correction_steps;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.gamma = gamma;
        ConvexityBounds b;
        b.strong_convexity = nu;
        b.smoothness = smoothness;
        return certify(cfg, b);
      },
      py::arg("prediction_steps"), py::arg("correction_steps"), py::arg("alpha"), py::arg("beta"),
      py::arg("gamma"), py::arg("nu"), py::arg("smoothness"),
      "Linear-convergence certificate for the given stepsizes and bounds.");

  py::class_<MeasurementFrame>(m, "MeasurementFrame")
      .def(py::init([](int k, double t, Eigen::VectorXd y_v, Eigen::VectorXd y_u_wye,
                       Eigen::VectorXd y_u_delta) {
             MeasurementFrame f;
             f.k = k;
             f.t = t;
             f.y_v = std::move(y_v);
             f.y_u_wye = std::move(y_u_wye);
             f.y_u_delta = std::move(y_u_delta);
             return f;
           }),
           py::arg("k"), py::arg("t"), py::arg("y_v"), py::arg("y_u_wye"), py::arg("y_u_delta"))
      .def_readonly("k", &MeasurementFrame::k)
      .def_readonly("t", &MeasurementFrame::t)
      .def_readonly("y_v", &MeasurementFrame::y_v)
      .def_readonly("y_u_wye", &MeasurementFrame::y_u_wye)
      .def_readonly("y_u_delta", &MeasurementFrame::y_u_delta);

  py::class_<FopcEstimator>(m, "FopcEstimator")
      .def(py::init([](std::shared_ptr<const NetworkModel> net, std::vector<int> pmu_nodes,
                       std::vector<int> metered_wye, std::vector<int> metered_delta,
                       int prediction_steps, int correction_steps, double alpha, double beta,
                       double gamma, double h, double voltage_weight, double huber_delta,
                       double reg_weight, std::optional<Eigen::VectorXd> prior) {
             SelectionSets sets;
             sets.pmu_nodes = std::move(pmu_nodes);
             sets.metered_wye = std::move(metered_wye);
             sets.metered_delta = std::move(metered_delta);
             FopcConfig cfg;
             cfg.prediction_steps = prediction_steps;
             cfg.correction_steps = correction_steps;
             cfg.alpha = alpha;
             cfg.beta = beta;
             cfg.gamma = gamma;
             cfg.h = h;
             CostParams params;
             params.voltage_weight = voltage_weight;
             params.huber_delta = huber_delta;
             params.reg_weight = reg_weight;
             if (prior) params.prior = *prior;
             return std::make_unique<FopcEstimator>(net, build_selection(*net, sets), cfg,
                                                    params);
           }),
           py::arg("net"), py::arg("pmu_nodes"), py::arg("metered_wye") = std::vector<int>{},
           py::arg("metered_delta") = std::vector<int>{}, py::arg("prediction_steps") = 0,
           py::arg("correction_steps") = 5, py::arg("alpha") = -1.0, py::arg("beta") = -1.0,
           py::arg("gamma") = 0.0, py::arg("h") = 1.0, py::arg("voltage_weight") = 1e3,
           py::arg("huber_delta") = 8e-4, py::arg("reg_weight") = 1.0,
           py::arg("prior") = std::nullopt)
      .def("step",
           [](FopcEstimator& self, const MeasurementFrame& frame) { return self.step(frame); })
      .def_property_readonly("k", [](const FopcEstimator& e) { return e.state().k; })
      .def_property_readonly("u_hat", [](const FopcEstimator& e) { return e.state().u_hat; })
      .def_property_readonly("z_hat", [](const FopcEstimator& e) { return e.state().z_hat; })
      .def_property_readonly("u_pred", [](const FopcEstimator& e) { return e.state().u_pred; })
      .def("certificate", &FopcEstimator::certificate);

  py::class_<StepTiming>(m, "StepTiming")
      .def_readonly("predict_seconds", &StepTiming::predict_seconds)
      .def_readonly("model_seconds", &StepTiming::model_seconds)
      .def_readonly("correct_seconds", &StepTiming::correct_seconds);

  m.def(
      "run_scenario_json",
      [](const std::string& text, const std::string& base_dir) {
        const Scenario scenario = Scenario::from_json(nlohmann::json::parse(text), base_dir);
        const RunResult result = run_scenario(scenario);
        nlohmann::json summary = result.summary_json();
        nlohmann::json steps = nlohmann::json::array();
        for (const auto& r : result.steps) {
          steps.push_back({{"k", r.k},
                           {"t", r.t},
                           {"tracking_err", r.tracking_err},
                           {"u_err", r.u_err},
                           {"v_err", r.v_err}});
        }
        summary["steps"] = std::move(steps);
        return summary.dump();
      },
      py::arg("text"), py::arg("base_dir") = std::string{},
      "Run a scenario given as a JSON string; returns the summary as JSON.");
}
