#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ddse/linear_model.hpp"
#include "ddse/network.hpp"

namespace ddse {

/// Which nodes carry a PMU and which load connections are metered.
struct SelectionSets {
  std::vector<int> pmu_nodes;
  std::vector<int> metered_wye;
  std::vector<int> metered_delta;
};

/// Unit-row selection operators derived from SelectionSets. Each list
/// holds the source row per selected row; the voltage rows pick from the
/// stacked z = [Re v; Im v] with all real-part rows before imaginary-part
/// rows, and the load rows pick from u^Y / u^D with p rows before q rows.
struct RowSelection {
  std::vector<int> v_rows;
  std::vector<int> wye_rows;
  std::vector<int> delta_rows;
};

RowSelection build_selection(const NetworkModel& net, const SelectionSets& sets);

Eigen::VectorXd gather(const std::vector<int>& rows, const Eigen::VectorXd& x);
void scatter_add(const std::vector<int>& rows, const Eigen::VectorXd& values,
                 Eigen::VectorXd& target);

/// One time-step bundle of measurements. Frames arrive with strictly
/// increasing k; the noise scales are bookkeeping and are not part of the
/// wire format.
struct MeasurementFrame {
  int k = 0;
  double t = 0.0;
  Eigen::VectorXd y_v;
  Eigen::VectorXd y_u_wye;
  Eigen::VectorXd y_u_delta;
  double sigma_v = 0.0;
  double sigma_u = 0.0;

  nlohmann::json to_json() const;
  static MeasurementFrame from_json(const nlohmann::json& j);
};

bool operator==(const MeasurementFrame& a, const MeasurementFrame& b);

void write_stream(const std::string& path, const std::vector<MeasurementFrame>& frames);
std::vector<MeasurementFrame> read_stream(const std::string& path);

/// Per-load (p, q) time series at a fixed base resolution. Columns are in
/// injection order: all wye entries, then all delta entries.
struct LoadProfile {
  double resolution = 1.0;  // seconds between samples
  double power_factor = 0.95;
  Eigen::MatrixXd p;  // samples x loads
  Eigen::MatrixXd q;

  int samples() const { return static_cast<int>(p.rows()); }
  int load_count() const { return static_cast<int>(p.cols()); }
};

/// Replace every sample by the mean of its averaging window. The output
/// keeps the input's length and timestamps.
LoadProfile downsample_average(const LoadProfile& profile, double window_seconds);

/// Synthetic load shapes standing in for metered consumption data: a base
/// level per load, a few slow sinusoids, and smoothed noise, all seeded.
/// Reactive power follows from a constant power factor.
struct SyntheticProfileConfig {
  int loads = 0;
  int samples = 0;
  double resolution = 1.0;
  double base = -0.02;       // per-unit; negative = consumption
  double spread = 0.3;       // relative spread of base levels across loads
  double amplitude = 0.005;  // per-unit sinusoid amplitude
  int components = 3;
  double period = 3600.0;  // seconds, slowest sinusoid
  double noise = 0.0;      // per-unit white-noise scale before smoothing
  int smooth_window = 21;  // samples
  double power_factor = 0.95;
  std::uint64_t seed = 1;
};

LoadProfile synth_profile(const SyntheticProfileConfig& cfg);
LoadProfile load_profile_csv(const std::string& path, double resolution, double power_factor);

struct StreamConfig {
  double sigma_v = 0.0;
  double sigma_u = 0.0;
  double window = 0.0;  // seconds; <= h means no averaging
  double h = 1.0;       // sampling period
  std::uint64_t seed = 0;
  int steps = 0;
  double pf_tol = 1e-10;
  int pf_max_iter = 200;
  // contamination hooks for robustness studies (off by default)
  double outlier_prob = 0.0;
  double outlier_magnitude = 0.0;
};

/// Frames plus the ground truth behind them, one row per step.
struct SimulationResult {
  std::vector<MeasurementFrame> frames;
  Eigen::MatrixXd u_true;   // steps x dim(u)
  Eigen::MatrixXcd v_true;  // steps x N_phi
};

/// Simulate the measurement stream: per step the true voltage comes from
/// the nonlinear power flow at the true loads, PMU rows get additive
/// gaussian noise, and load rows report the window-averaged profile.
/// Deterministic given the seed.
SimulationResult simulate_scenario(const NetworkModel& net, const RowSelection& sel,
                                   const LoadProfile& profile, const StreamConfig& cfg);

std::vector<MeasurementFrame> simulate_stream(const NetworkModel& net, const RowSelection& sel,
                                              const LoadProfile& profile, const StreamConfig& cfg);

}  // namespace ddse
