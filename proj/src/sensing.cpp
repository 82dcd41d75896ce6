#include "ddse/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ddse/json_io.hpp"
#include "ddse/rng.hpp"

namespace ddse {

RowSelection build_selection(const NetworkModel& net, const SelectionSets& sets) {
  RowSelection sel;
  const int n_phi = net.phase_count();

  auto sorted_unique = [](std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };

  std::vector<int> re_rows;
  for (int node : sorted_unique(sets.pmu_nodes)) {
    const auto flats = net.node_flat_indices(node);  // throws for unknown nodes
    re_rows.insert(re_rows.end(), flats.begin(), flats.end());
  }
  sel.v_rows = re_rows;
  for (int f : re_rows) sel.v_rows.push_back(n_phi + f);

  std::vector<int> p_rows;
  for (int node : sorted_unique(sets.metered_wye)) {
    const auto entries = net.node_wye_entries(node);
    if (entries.empty()) {
      throw ModelError("node " + std::to_string(node) + " has no wye load to meter");
    }
    p_rows.insert(p_rows.end(), entries.begin(), entries.end());
  }
  sel.wye_rows = p_rows;
  for (int j : p_rows) sel.wye_rows.push_back(net.wye_count() + j);

  p_rows.clear();
  for (int node : sorted_unique(sets.metered_delta)) {
    const auto entries = net.node_delta_entries(node);
    if (entries.empty()) {
      throw ModelError("node " + std::to_string(node) + " has no delta load to meter");
    }
    p_rows.insert(p_rows.end(), entries.begin(), entries.end());
  }
  sel.delta_rows = p_rows;
  for (int j : p_rows) sel.delta_rows.push_back(net.delta_count() + j);

  return sel;
}

Eigen::VectorXd gather(const std::vector<int>& rows, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = x[rows[i]];
  return out;
}

void scatter_add(const std::vector<int>& rows, const Eigen::VectorXd& values,
                 Eigen::VectorXd& target) {
  if (values.size() != static_cast<Eigen::Index>(rows.size())) {
    throw std::invalid_argument("scatter_add: size mismatch");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    target[rows[i]] += values[static_cast<Eigen::Index>(i)];
  }
}

nlohmann::json MeasurementFrame::to_json() const {
  return nlohmann::json{{"k", k},
                        {"t", t},
                        {"y_v", ddse::to_json(y_v)},
                        {"y_uY", ddse::to_json(y_u_wye)},
                        {"y_uD", ddse::to_json(y_u_delta)}};
}

MeasurementFrame MeasurementFrame::from_json(const nlohmann::json& j) {
  MeasurementFrame f;
  f.k = j.at("k").get<int>();
  f.t = j.at("t").get<double>();
  f.y_v = vector_from_json(j.at("y_v"));
  f.y_u_wye = vector_from_json(j.at("y_uY"));
  f.y_u_delta = vector_from_json(j.at("y_uD"));
  return f;
}

bool operator==(const MeasurementFrame& a, const MeasurementFrame& b) {
  return a.k == b.k && a.t == b.t && a.y_v == b.y_v && a.y_u_wye == b.y_u_wye &&
         a.y_u_delta == b.y_u_delta;
}

void write_stream(const std::string& path, const std::vector<MeasurementFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& f : frames) out << f.to_json().dump() << '\n';
}

std::vector<MeasurementFrame> read_stream(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<MeasurementFrame> frames;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    frames.push_back(MeasurementFrame::from_json(nlohmann::json::parse(line)));
  }
  return frames;
}

LoadProfile downsample_average(const LoadProfile& profile, double window_seconds) {
  const double ratio = window_seconds / profile.resolution;
  const int m = static_cast<int>(std::llround(ratio));
  if (m < 1 || std::abs(ratio - m) > 1e-9) {
    throw std::invalid_argument("window must be an integer multiple of the profile resolution");
  }
  LoadProfile out = profile;
  if (m == 1) return out;
  const int n = profile.samples();
  for (int start = 0; start < n; start += m) {
    const int len = std::min(m, n - start);
    out.p.middleRows(start, len) =
        profile.p.middleRows(start, len).colwise().mean().replicate(len, 1);
    out.q.middleRows(start, len) =
        profile.q.middleRows(start, len).colwise().mean().replicate(len, 1);
  }
  return out;
}

LoadProfile synth_profile(const SyntheticProfileConfig& cfg) {
  if (cfg.loads <= 0 || cfg.samples <= 0) {
    throw std::invalid_argument("profile needs at least one load and one sample");
  }
  Rng rng(cfg.seed);
  LoadProfile profile;
  profile.resolution = cfg.resolution;
  profile.power_factor = cfg.power_factor;
  profile.p.resize(cfg.samples, cfg.loads);
  profile.q.resize(cfg.samples, cfg.loads);

  const double tan_phi = std::tan(std::acos(cfg.power_factor));
  for (int l = 0; l < cfg.loads; ++l) {
    const double level = cfg.base * rng.uniform(1.0 - cfg.spread, 1.0 + cfg.spread);
    std::vector<double> amp(static_cast<std::size_t>(cfg.components));
    std::vector<double> phase(amp.size());
    for (int c = 0; c < cfg.components; ++c) {
      amp[static_cast<std::size_t>(c)] = cfg.amplitude / (c + 1) * rng.uniform(0.5, 1.0);
      phase[static_cast<std::size_t>(c)] = rng.uniform(0.0, 2.0 * M_PI);
    }
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(cfg.samples);
    if (cfg.noise > 0) {
      for (int s = 0; s < cfg.samples; ++s) noise[s] = rng.gaussian(cfg.noise);
      // moving average keeps the wiggle but kills step-to-step jumps
      const int w = std::max(1, cfg.smooth_window);
      Eigen::VectorXd smooth(cfg.samples);
      double acc = 0;
      int count = 0;
      for (int s = 0; s < cfg.samples; ++s) {
        acc += noise[s];
        ++count;
        if (s >= w) {
          acc -= noise[s - w];
          --count;
        }
        smooth[s] = acc / count;
      }
      noise = smooth;
    }
    for (int s = 0; s < cfg.samples; ++s) {
      const double t = s * cfg.resolution;
      double v = level + noise[s];
      for (int c = 0; c < cfg.components; ++c) {
        v += amp[static_cast<std::size_t>(c)] *
             std::sin(2.0 * M_PI * (c + 1) * t / cfg.period + phase[static_cast<std::size_t>(c)]);
      }
      profile.p(s, l) = v;
      profile.q(s, l) = v * tan_phi;
    }
  }
  return profile;
}

LoadProfile load_profile_csv(const std::string& path, double resolution, double power_factor) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {  // header: t,p0,...,q0,...
      first = false;
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("profile CSV has no data rows: " + path);
  const std::size_t cols = rows.front().size();
  if (cols < 3 || (cols - 1) % 2 != 0) {
    throw std::runtime_error("profile CSV must have columns t,p...,q...");
  }
  const int loads = static_cast<int>((cols - 1) / 2);
  LoadProfile profile;
  profile.resolution = resolution;
  profile.power_factor = power_factor;
  profile.p.resize(static_cast<int>(rows.size()), loads);
  profile.q.resize(static_cast<int>(rows.size()), loads);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw std::runtime_error("ragged profile CSV row");
    for (int l = 0; l < loads; ++l) {
      profile.p(static_cast<int>(r), l) = rows[r][1 + static_cast<std::size_t>(l)];
      profile.q(static_cast<int>(r), l) = rows[r][1 + static_cast<std::size_t>(loads + l)];
    }
  }
  return profile;
}

SimulationResult simulate_scenario(const NetworkModel& net, const RowSelection& sel,
                                   const LoadProfile& profile, const StreamConfig& cfg) {
  if (cfg.steps <= 0) throw std::invalid_argument("steps must be positive");
  if (profile.load_count() != net.wye_count() + net.delta_count()) {
    throw std::invalid_argument("profile has wrong number of load columns");
  }
  const double sample_ratio = cfg.h / profile.resolution;
  const int stride = static_cast<int>(std::llround(sample_ratio));
  if (stride < 1 || std::abs(sample_ratio - stride) > 1e-9) {
    throw std::invalid_argument("sampling period must be an integer multiple of the resolution");
  }
  if ((cfg.steps - 1) * stride >= profile.samples()) {
    throw std::invalid_argument("profile does not cover the requested horizon");
  }

  LoadProfile averaged =
      cfg.window > cfg.h ? downsample_average(profile, cfg.window) : profile;

  Rng rng(cfg.seed);
  if (cfg.outlier_prob > 0) {
    // a corrupted meter reading persists until the next report, so
    // contamination is drawn once per averaging window and entry
    const int stride_w = std::max(
        1, static_cast<int>(std::llround(std::max(cfg.window, cfg.h) / profile.resolution)));
    for (int start = 0; start < averaged.samples(); start += stride_w) {
      const int len = std::min(stride_w, averaged.samples() - start);
      for (int l = 0; l < averaged.load_count(); ++l) {
        if (rng.bernoulli(cfg.outlier_prob)) {
          averaged.p.block(start, l, len, 1).array() +=
              (rng.bernoulli(0.5) ? 1.0 : -1.0) * cfg.outlier_magnitude;
        }
        if (rng.bernoulli(cfg.outlier_prob)) {
          averaged.q.block(start, l, len, 1).array() +=
              (rng.bernoulli(0.5) ? 1.0 : -1.0) * cfg.outlier_magnitude;
        }
      }
    }
  }

  const StateLayout layout = state_layout(net);
  const int n_wye = layout.wye;
  const int n_delta = layout.delta;

  SimulationResult result;
  result.u_true.resize(cfg.steps, layout.dim());
  result.v_true.resize(cfg.steps, net.phase_count());
  result.frames.reserve(static_cast<std::size_t>(cfg.steps));

  Eigen::VectorXcd v = net.zero_load_voltage();
  for (int k = 0; k < cfg.steps; ++k) {
    const int s = k * stride;
    ComplexInjection inj;
    inj.wye.resize(n_wye);
    inj.delta.resize(n_delta);
    for (int j = 0; j < n_wye; ++j) inj.wye[j] = {profile.p(s, j), profile.q(s, j)};
    for (int j = 0; j < n_delta; ++j) {
      inj.delta[j] = {profile.p(s, n_wye + j), profile.q(s, n_wye + j)};
    }
    v = solve_power_flow(net, inj, v, cfg.pf_tol, cfg.pf_max_iter);  // warm start

    const Eigen::VectorXd u = pack_state(layout, inj);
    result.u_true.row(k) = u;
    result.v_true.row(k) = v;

    MeasurementFrame frame;
    frame.k = k;
    frame.t = k * cfg.h;
    frame.sigma_v = cfg.sigma_v;
    frame.sigma_u = cfg.sigma_u;

    frame.y_v = gather(sel.v_rows, stack_voltage(v));
    for (Eigen::Index i = 0; i < frame.y_v.size(); ++i) {
      if (cfg.sigma_v > 0) frame.y_v[i] += rng.gaussian(cfg.sigma_v);
    }

    Eigen::VectorXd u_avg(layout.dim());
    for (int j = 0; j < n_wye; ++j) {
      u_avg[layout.p_wye(j)] = averaged.p(s, j);
      u_avg[layout.q_wye(j)] = averaged.q(s, j);
    }
    for (int j = 0; j < n_delta; ++j) {
      u_avg[layout.p_delta(j)] = averaged.p(s, n_wye + j);
      u_avg[layout.q_delta(j)] = averaged.q(s, n_wye + j);
    }
    frame.y_u_wye = gather(sel.wye_rows, u_avg.head(2 * n_wye));
    frame.y_u_delta = gather(sel.delta_rows, u_avg.tail(2 * n_delta));
    if (cfg.sigma_u > 0) {
      for (Eigen::Index i = 0; i < frame.y_u_wye.size(); ++i) {
        frame.y_u_wye[i] += rng.gaussian(cfg.sigma_u);
      }
      for (Eigen::Index i = 0; i < frame.y_u_delta.size(); ++i) {
        frame.y_u_delta[i] += rng.gaussian(cfg.sigma_u);
      }
    }
    result.frames.push_back(std::move(frame));
  }
  return result;
}

std::vector<MeasurementFrame> simulate_stream(const NetworkModel& net, const RowSelection& sel,
                                              const LoadProfile& profile,
                                              const StreamConfig& cfg) {
  return simulate_scenario(net, sel, profile, cfg).frames;
}

}  // namespace ddse
