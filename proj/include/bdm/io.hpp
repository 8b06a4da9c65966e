#pragma once

// File formats: model parameters and run configs as JSON, distributions,
// trajectories and curves as CSV, and the calibration dataset reader.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdm/calibrate.hpp"
#include "bdm/metastability.hpp"
#include "bdm/model.hpp"
#include "bdm/simulate.hpp"
#include "bdm/spectral.hpp"

namespace bdm::io {

using nlohmann::json;

/// Model parameters with their rate family.
struct ModelSpec {
  ModelParams params;
  RateFamily family = Logit{};
};

/// Flat object {F, J, alpha, beta, gamma, N, family, epsilon, mu}; epsilon and
/// mu are written only for the Kirman family.
json to_json(const ModelSpec& spec);
/// Strict: unknown keys, wrong types and invalid values throw InvalidArgument.
/// `allow_zero_gamma` admits gamma = 0 (a frozen chain) for simulation.
ModelSpec model_from_json(const json& j, bool allow_zero_gamma = false);

/// Rate table of a spec, with gamma = 0 giving all-zero rates.
RateTable rate_table(const ModelSpec& spec);

json to_json(const ZeitgeistSchedule& schedule);
ZeitgeistSchedule schedule_from_json(const json& j);

/// Everything one CLI invocation needs. Blocks a command does not use are ignored.
struct RunConfig {
  ModelSpec model;
  bool has_model = false;               ///< every command except calibrate needs it
  std::optional<ZeitgeistSchedule> schedule;
  std::vector<double> times;             ///< solve: output times
  std::optional<int> n0;                 ///< fixed initial state
  std::optional<double> p0;              ///< binomial initial state (one of n0 / p0)
  bool write_steady = false;             ///< solve: also write steady.csv
  int ensemble = 1;                      ///< simulate: E
  double dt = 1.0;                       ///< simulate: grid step
  double t_max = 0.0;                    ///< simulate: final time
  std::uint64_t seed = 0;
  std::string out = ".";
  bool plot = false;
  // calibrate
  std::string data;                      ///< CSV traj_id,t,m (relative to the config file)
  std::string sidecar;                   ///< JSON {N, beta, alpha}
  ParamBounds bounds;
  int pop_size = 50;
  int steps = 100;
  int threads = 1;
  std::optional<Theta> truth;

  InitialCondition initial_condition() const;
};

/// Parses a config; unknown keys at any level throw InvalidArgument. Relative
/// data paths are resolved against `base_dir`.
RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

/// Shortest decimal that round-trips a double.
std::string format_number(double x);

/// `t,n,m,prob`, one row per (t, n).
void write_distributions(std::ostream& os, std::span<const DistributionVector> series);
std::vector<DistributionVector> read_distributions(std::istream& is);

/// `traj_id,t,n,m`, one row per grid point.
void write_trajectories(std::ostream& os, std::span<const Trajectory> trajectories);

/// `t,mean_n,var_n,mean_m,var_m` per grid time.
void write_ensemble_stats(std::ostream& os, const EnsembleStats& stats);
/// `t,n,m,freq`, long format.
void write_histogram(std::ostream& os, const EnsembleStats& stats);

/// fpt.json: passage times, equilibria and both relaxation-time estimates.
json to_json(const MetastabilityReport& report, double lambda2_spectral);
/// `n,m,tau,log_tau` and `n,m,phi`.
void write_tau_curve(std::ostream& os, const FirstPassageResult& passage);
void write_fixation_curve(std::ostream& os, const MetastabilityReport& report);

json to_json(const CalibrationResult& result, const std::optional<Theta>& truth);

/// Reads `traj_id,t,m` rows (extra columns ignored) grouped by traj_id in
/// order of first appearance. Errors name the offending line.
Dataset read_dataset(std::istream& csv, const json& sidecar);
Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& sidecar);
json dataset_sidecar(int N);

}  // namespace bdm::io
