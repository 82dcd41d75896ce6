#include "ddse/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ddse/json_io.hpp"

namespace ddse {

namespace {

namespace fs = std::filesystem;

double relative_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& reference) {
  const double den = reference.norm();
  const double num = (estimate - reference).norm();
  return num / std::max(den, 1e-15);
}

double mean_tail(const std::vector<StepRecord>& records,
                 double (*field)(const StepRecord&)) {
  const std::size_t start = records.size() / 2;  // final 50% of the horizon
  double acc = 0.0;
  for (std::size_t i = start; i < records.size(); ++i) acc += field(records[i]);
  return acc / static_cast<double>(records.size() - start);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

nlohmann::json certificate_json(const ConvergenceCertificate& cert) {
  return {{"rho_P", cert.rho_p},
          {"rho_C", cert.rho_c},
          {"tau0", cert.tau0},
          {"valid", cert.valid},
          {"min_C", cert.min_correction_steps}};
}

nlohmann::json bounds_json(const ConvexityBounds& b) {
  return {{"nu", b.strong_convexity},
          {"L", b.smoothness},
          {"power_iteration_converged", b.power_iteration_converged}};
}

std::vector<int> parse_node_list(const nlohmann::json& j, bool* all_flag) {
  *all_flag = false;
  if (j.is_string()) {
    if (j.get<std::string>() == "all") {
      *all_flag = true;
      return {};
    }
    throw std::invalid_argument("node selection must be a list or \"all\"");
  }
  std::vector<int> nodes;
  for (const auto& n : j) nodes.push_back(n.get<int>());
  return nodes;
}

}  // namespace

Scenario Scenario::from_json(const nlohmann::json& j, const std::string& base_dir) {
  Scenario s;
  s.feeder_path = j.at("feeder").get<std::string>();
  if (!base_dir.empty() && !fs::path(s.feeder_path).is_absolute()) {
    s.feeder_path = (fs::path(base_dir) / s.feeder_path).string();
  }

  const auto& fopc = j.at("fopc");
  s.fopc.prediction_steps = fopc.value("P", 0);
  s.fopc.correction_steps = fopc.value("C", 1);
  s.fopc.alpha = fopc.value("alpha", -1.0);
  s.fopc.beta = fopc.value("beta", -1.0);
  s.fopc.gamma = fopc.value("gamma", 0.0);
  s.fopc.h = fopc.value("h", 1.0);

  if (j.contains("profile")) {
    const auto& p = j.at("profile");
    const std::string kind = p.value("kind", "synthetic");
    if (kind == "csv") {
      s.profile.synthetic = false;
      s.profile.csv_path = p.at("path").get<std::string>();
      if (!base_dir.empty() && !fs::path(s.profile.csv_path).is_absolute()) {
        s.profile.csv_path = (fs::path(base_dir) / s.profile.csv_path).string();
      }
      s.profile.synth.power_factor = p.value("power_factor", 0.95);
      s.profile.synth.resolution = p.value("resolution", s.fopc.h);
    } else if (kind == "synthetic") {
      auto& c = s.profile.synth;
      c.loads = p.value("loads", 0);
      c.samples = p.value("samples", 0);
      c.resolution = p.value("resolution", s.fopc.h);
      c.base = p.value("base", -0.02);
      c.spread = p.value("spread", 0.3);
      c.amplitude = p.value("amplitude", 0.005);
      c.components = p.value("components", 3);
      c.period = p.value("period_s", 3600.0);
      c.noise = p.value("noise", 0.0);
      c.smooth_window = p.value("smooth_window", 21);
      c.power_factor = p.value("power_factor", 0.95);
      c.seed = p.value("seed", std::uint64_t{1});
    } else {
      throw std::invalid_argument("profile kind must be \"synthetic\" or \"csv\"");
    }
  }

  if (j.contains("selection")) {
    const auto& sel = j.at("selection");
    bool all = false;
    if (sel.contains("pmu_nodes")) {
      s.pmu_nodes = parse_node_list(sel.at("pmu_nodes"), &all);
      if (all) throw std::invalid_argument("pmu_nodes must be an explicit list");
    }
    if (sel.contains("metered_wye")) {
      s.metered_wye = parse_node_list(sel.at("metered_wye"), &s.meter_all_wye);
    } else {
      s.meter_all_wye = true;
    }
    if (sel.contains("metered_delta")) {
      s.metered_delta = parse_node_list(sel.at("metered_delta"), &s.meter_all_delta);
    } else {
      s.meter_all_delta = true;
    }
  }

  if (j.contains("cost")) {
    const auto& c = j.at("cost");
    s.cost.voltage_weight = c.value("w_v", 1e3);
    s.cost.huber_delta = c.value("delta", 8e-4);
    s.cost.reg_weight = c.value("reg_a", 1.0);
    s.prior_mode = c.value("prior_mode", "zero");
    if (s.prior_mode != "zero" && s.prior_mode != "first_window") {
      throw std::invalid_argument("prior_mode must be \"zero\" or \"first_window\"");
    }
    if (c.contains("prior")) s.cost.prior = vector_from_json(c.at("prior"));
  }

  if (j.contains("sensing")) {
    const auto& m = j.at("sensing");
    s.sigma_v = m.value("sigma_v", 0.0);
    s.sigma_u = m.value("sigma_u", 0.0);
    s.window = m.value("window_s", 0.0);
    s.outlier_prob = m.value("outlier_prob", 0.0);
    s.outlier_mag = m.value("outlier_mag", 0.0);
  }

  s.steps = j.at("steps").get<int>();
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("batch")) {
    s.batch_tol = j["batch"].value("tol", 1e-9);
    s.batch_max_iter = j["batch"].value("max_iter", 200000);
  }
  s.oracle_mode = j.value("oracle_mode", false);
  s.out_dir = j.value("out", std::string{});
  return s;
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json j;
  j["feeder"] = feeder_path;
  if (profile.synthetic) {
    const auto& c = profile.synth;
    j["profile"] = {{"kind", "synthetic"},
                    {"loads", c.loads},
                    {"samples", c.samples},
                    {"resolution", c.resolution},
                    {"base", c.base},
                    {"spread", c.spread},
                    {"amplitude", c.amplitude},
                    {"components", c.components},
                    {"period_s", c.period},
                    {"noise", c.noise},
                    {"smooth_window", c.smooth_window},
                    {"power_factor", c.power_factor},
                    {"seed", c.seed}};
  } else {
    j["profile"] = {{"kind", "csv"},
                    {"path", profile.csv_path},
                    {"resolution", profile.synth.resolution},
                    {"power_factor", profile.synth.power_factor}};
  }
  nlohmann::json sel;
  sel["pmu_nodes"] = pmu_nodes;
  if (meter_all_wye) sel["metered_wye"] = "all";
  else sel["metered_wye"] = metered_wye;
  if (meter_all_delta) sel["metered_delta"] = "all";
  else sel["metered_delta"] = metered_delta;
  j["selection"] = sel;
  j["fopc"] = {{"P", fopc.prediction_steps}, {"C", fopc.correction_steps},
               {"alpha", fopc.alpha},        {"beta", fopc.beta},
               {"gamma", fopc.gamma},        {"h", fopc.h}};
  j["cost"] = {{"w_v", cost.voltage_weight},
               {"delta", cost.huber_delta},
               {"reg_a", cost.reg_weight},
               {"prior_mode", prior_mode}};
  if (cost.prior.size()) j["cost"]["prior"] = ddse::to_json(cost.prior);
  j["sensing"] = {{"sigma_v", sigma_v},
                  {"sigma_u", sigma_u},
                  {"window_s", window},
                  {"outlier_prob", outlier_prob},
                  {"outlier_mag", outlier_mag}};
  j["steps"] = steps;
  j["seed"] = seed;
  j["batch"] = {{"tol", batch_tol}, {"max_iter", batch_max_iter}};
  j["oracle_mode"] = oracle_mode;
  if (!out_dir.empty()) j["out"] = out_dir;
  return j;
}

Scenario load_scenario(const std::string& path) {
  return Scenario::from_json(load_json_file(path), fs::path(path).parent_path().string());
}

std::uint64_t scenario_hash(const Scenario& scenario) {
  // FNV-1a over the canonical JSON dump
  const std::string dump = scenario.to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string RunResult::errors_csv() const {
  std::string csv = "k,t,tracking,u_err,v_err\n";
  for (const auto& r : steps) {
    csv += std::to_string(r.k) + "," + format_double(r.t) + "," + format_double(r.tracking_err) +
           "," + format_double(r.u_err) + "," + format_double(r.v_err) + "\n";
  }
  return csv;
}

nlohmann::json RunResult::summary_json() const {
  nlohmann::json j;
  j["scenario"] = scenario_echo;
  char hash_hex[32];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(scenario_hash));
  j["scenario_hash"] = hash_hex;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["certificate"] = certificate_json(certificate);
  j["certificate_measured"] = certificate_json(certificate_measured);
  j["bounds"] = bounds_json(bounds);
  j["bounds_measured"] = bounds_json(bounds_measured);
  j["steady_state"] = {{"tracking", ss_tracking}, {"u_err", ss_u_err}, {"v_err", ss_v_err}};
  j["timing"] = {{"mean_step_ms", mean_step_ms},
                 {"median_step_ms", median_step_ms},
                 {"median_predict_correct_ms", median_predict_correct_ms}};
  if (!steps.empty()) {
    const auto& last = steps.back();
    j["final"] = {{"tracking", last.tracking_err}, {"u_err", last.u_err}, {"v_err", last.v_err}};
  }
  return j;
}

RunResult run_scenario(const Scenario& scenario) {
  if (scenario.steps < 1) throw std::invalid_argument("horizon must be at least one step");
  Scenario s = scenario;  // materialize derived fields so the echo reproduces the run

  auto net = std::make_shared<const NetworkModel>(build_network(load_feeder(s.feeder_path)));

  SelectionSets sets;
  sets.pmu_nodes = s.pmu_nodes;
  if (s.meter_all_wye) {
    s.metered_wye.clear();
    for (int node : net->node_ids()) {
      if (!net->node_wye_entries(node).empty()) s.metered_wye.push_back(node);
    }
  }
  if (s.meter_all_delta) {
    s.metered_delta.clear();
    for (int node : net->node_ids()) {
      if (!net->node_delta_entries(node).empty()) s.metered_delta.push_back(node);
    }
  }
  sets.metered_wye = s.metered_wye;
  sets.metered_delta = s.metered_delta;
  const RowSelection sel = build_selection(*net, sets);

  LoadProfile profile;
  if (s.profile.synthetic) {
    auto& c = s.profile.synth;
    if (c.loads == 0) c.loads = net->wye_count() + net->delta_count();
    if (c.resolution <= 0) c.resolution = s.fopc.h;
    if (c.samples == 0) {
      const int stride = static_cast<int>(std::llround(s.fopc.h / c.resolution));
      c.samples = s.steps * std::max(1, stride);
    }
    profile = synth_profile(c);
  } else {
    profile = load_profile_csv(s.profile.csv_path, s.profile.synth.resolution,
                               s.profile.synth.power_factor);
  }

  StreamConfig stream;
  stream.sigma_v = s.sigma_v;
  stream.sigma_u = s.sigma_u;
  stream.window = s.window;
  stream.h = s.fopc.h;
  stream.seed = s.seed;
  stream.steps = s.steps;
  stream.outlier_prob = s.outlier_prob;
  stream.outlier_magnitude = s.outlier_mag;
  const SimulationResult sim = simulate_scenario(*net, sel, profile, stream);

  if (s.prior_mode == "first_window" && !s.cost.prior.size()) {
    // a-priori load guess: the first frame's metered powers scattered into u
    const StateLayout layout = state_layout(*net);
    Eigen::VectorXd prior = Eigen::VectorXd::Zero(layout.dim());
    Eigen::VectorXd wye_block = Eigen::VectorXd::Zero(2 * layout.wye);
    Eigen::VectorXd delta_block = Eigen::VectorXd::Zero(2 * layout.delta);
    scatter_add(sel.wye_rows, sim.frames.front().y_u_wye, wye_block);
    scatter_add(sel.delta_rows, sim.frames.front().y_u_delta, delta_block);
    prior.head(2 * layout.wye) = wye_block;
    prior.tail(2 * layout.delta) = delta_block;
    s.cost.prior = prior;
    s.prior_mode = "zero";  // the echo carries the materialized vector
  }

  FopcEstimator estimator(net, sel, s.fopc, s.cost);

  RunResult result;
  result.steps.reserve(static_cast<std::size_t>(s.steps));
  int batch_exhausted = 0;
  int anchor_fallbacks = 0;

  Eigen::VectorXd u_star = Eigen::VectorXd::Zero(state_layout(*net).dim());
  for (int k = 0; k < s.steps; ++k) {
    const StepTiming timing = estimator.step(sim.frames[static_cast<std::size_t>(k)]);
    if (estimator.state().anchor_fallback) ++anchor_fallbacks;

    if (k == 0) {
      result.bounds = estimator.initial_bounds();
      result.bounds_measured = estimator.current_cost().bounds_with_min_eig();
      result.certificate = estimator.certificate();
      result.certificate_measured = certify(estimator.config(), result.bounds_measured);
      result.alpha = estimator.config().alpha;
      result.beta = estimator.config().beta;
    }

    const BatchResult batch =
        batch_solve(estimator.current_cost(), u_star, s.batch_tol, s.batch_max_iter);
    if (!batch.converged) ++batch_exhausted;
    u_star = batch.u;

    if (s.oracle_mode) estimator.override_estimate(u_star);

    const Eigen::VectorXd u_true = sim.u_true.row(k);
    const Eigen::VectorXd z_true = stack_voltage(sim.v_true.row(k));

    StepRecord rec;
    rec.k = k;
    rec.t = sim.frames[static_cast<std::size_t>(k)].t;
    rec.tracking_err = relative_error(estimator.state().u_hat, u_star);
    rec.u_err = relative_error(estimator.state().u_hat, u_true);
    rec.v_err = relative_error(estimator.state().z_hat, z_true);
    rec.predict_ms = timing.predict_seconds * 1e3;
    rec.model_ms = timing.model_seconds * 1e3;
    rec.correct_ms = timing.correct_seconds * 1e3;
    result.steps.push_back(rec);
  }

  result.scenario_echo = s.to_json();
  result.scenario_hash = ddse::scenario_hash(s);
  result.ss_tracking = mean_tail(result.steps, [](const StepRecord& r) { return r.tracking_err; });
  result.ss_u_err = mean_tail(result.steps, [](const StepRecord& r) { return r.u_err; });
  result.ss_v_err = mean_tail(result.steps, [](const StepRecord& r) { return r.v_err; });

  std::vector<double> step_ms, pc_ms;
  double total_ms = 0.0;
  for (const auto& r : result.steps) {
    const double full = r.predict_ms + r.model_ms + r.correct_ms;
    step_ms.push_back(full);
    pc_ms.push_back(r.predict_ms + r.correct_ms);
    total_ms += full;
  }
  result.mean_step_ms = total_ms / static_cast<double>(result.steps.size());
  result.median_step_ms = median(step_ms);
  result.median_predict_correct_ms = median(pc_ms);

  nlohmann::json summary = result.summary_json();
  summary["batch_exhausted"] = batch_exhausted;
  summary["anchor_fallbacks"] = anchor_fallbacks;

  if (!s.out_dir.empty()) {
    fs::create_directories(s.out_dir);
    std::ofstream csv(fs::path(s.out_dir) / "errors.csv");
    csv << result.errors_csv();
    std::ofstream jsonl(fs::path(s.out_dir) / "run.jsonl");
    const nlohmann::json cert = certificate_json(result.certificate);
    for (const auto& r : result.steps) {
      jsonl << nlohmann::json{{"k", r.k},
                              {"t", r.t},
                              {"tracking_err", r.tracking_err},
                              {"u_err", r.u_err},
                              {"v_err", r.v_err},
                              {"pred_ms", r.predict_ms},
                              {"corr_ms", r.correct_ms},
                              {"model_ms", r.model_ms},
                              {"cert", cert}}
                   .dump()
            << '\n';
    }
    save_json_file((fs::path(s.out_dir) / "summary.json").string(), summary);
  }
  return result;
}

CompareMode compare_mode_from_string(const std::string& str) {
  if (str == "fixed_C" || str == "fixed_c") return CompareMode::fixed_c;
  if (str == "fixed_time") return CompareMode::fixed_time;
  if (str == "pmu_sweep") return CompareMode::pmu_sweep;
  throw std::invalid_argument("unknown compare mode: " + str);
}

std::vector<CompareVariant> load_variants(const std::string& path) {
  const nlohmann::json j = load_json_file(path);
  const nlohmann::json& list = j.is_array() ? j : j.at("variants");
  std::vector<CompareVariant> variants;
  for (const auto& v : list) {
    CompareVariant variant;
    variant.label = v.value("label", "variant" + std::to_string(variants.size()));
    variant.patch = v.value("patch", nlohmann::json::object());
    variants.push_back(std::move(variant));
  }
  return variants;
}

nlohmann::json CompareReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"label", r.label},
                         {"tracking", r.ss_tracking},
                         {"u_err", r.ss_u_err},
                         {"v_err", r.ss_v_err},
                         {"mean_step_ms", r.mean_step_ms},
                         {"median_step_ms", r.median_step_ms},
                         {"cost_matched", r.cost_matched}});
  }
  return {{"rows", rows_json}, {"ordering_ok", ordering_ok}, {"verdict", verdict}};
}

std::string CompareReport::table() const {
  std::ostringstream out;
  out << "label                tracking      u_err         v_err         step_ms\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-20s %-13.4e %-13.4e %-13.4e %-10.4f%s\n",
                  r.label.c_str(), r.ss_tracking, r.ss_u_err, r.ss_v_err, r.median_step_ms,
                  r.cost_matched ? "" : "  [cost mismatch]");
    out << line;
  }
  out << "verdict: " << verdict << '\n';
  return out.str();
}

CompareReport compare(CompareMode mode, const Scenario& base,
                      const std::vector<CompareVariant>& variants) {
  if (variants.empty()) throw std::invalid_argument("compare needs at least one variant");

  CompareReport report;
  report.mode = mode;
  const nlohmann::json base_json = base.to_json();
  for (const auto& variant : variants) {
    nlohmann::json patched = base_json;
    patched.merge_patch(variant.patch);
    Scenario scenario = Scenario::from_json(patched);
    if (!base.out_dir.empty()) {
      scenario.out_dir = (fs::path(base.out_dir) / variant.label).string();
    } else {
      scenario.out_dir.clear();
    }
    const RunResult run = run_scenario(scenario);
    CompareRow row;
    row.label = variant.label;
    row.ss_tracking = run.ss_tracking;
    row.ss_u_err = run.ss_u_err;
    row.ss_v_err = run.ss_v_err;
    row.mean_step_ms = run.mean_step_ms;
    row.median_step_ms = run.median_step_ms;
    report.rows.push_back(row);
  }

  if (report.rows.size() == 1) {
    report.ordering_ok = true;
    report.verdict = "single variant: no comparison";
    return report;
  }

  switch (mode) {
    case CompareMode::fixed_c: {
      for (std::size_t i = 1; i < report.rows.size(); ++i) {
        if (report.rows[i].ss_tracking > report.rows[i - 1].ss_tracking * (1.0 + 1e-9)) {
          report.ordering_ok = false;
        }
      }
      report.verdict = report.ordering_ok
                           ? "steady-state tracking error is non-increasing across variants"
                           : "tracking error ordering violated";
      break;
    }
    case CompareMode::pmu_sweep: {
      for (std::size_t i = 1; i < report.rows.size(); ++i) {
        if (report.rows[i].ss_v_err > report.rows[i - 1].ss_v_err * (1.0 + 1e-9)) {
          report.ordering_ok = false;
        }
      }
      report.verdict = report.ordering_ok
                           ? "steady-state voltage error is non-increasing across variants"
                           : "voltage error ordering violated";
      break;
    }
    case CompareMode::fixed_time: {
      const double reference = report.rows.front().median_step_ms;
      for (auto& row : report.rows) {
        row.cost_matched = std::abs(row.median_step_ms - reference) <= 0.2 * reference;
        if (!row.cost_matched) report.ordering_ok = false;
      }
      const auto best = std::min_element(
          report.rows.begin(), report.rows.end(),
          [](const CompareRow& a, const CompareRow& b) { return a.ss_tracking < b.ss_tracking; });
      report.verdict = "best tracking: " + best->label +
                       (report.ordering_ok ? " (per-step cost matched within 20%)"
                                           : " (per-step cost NOT matched within 20%)");
      break;
    }
  }
  return report;
}

}  // namespace ddse
