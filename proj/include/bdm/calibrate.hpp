#pragma once

// Likelihood of observed trajectories under the analytic transition
// probabilities, a self-adaptive differential evolution optimizer and the
// recovery error metrics.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bdm/model.hpp"
#include "bdm/simulate.hpp"

namespace bdm {

/// The inferable parameters; beta = 1 and alpha = 0 are fixed.
struct Theta {
  double F = 0.0;
  double J = 0.0;
  double gamma = 1.0;

  ModelParams to_params(int N) const;
};

/// One observed path: increasing times and the integer states n read off m.
struct ObservedPath {
  std::vector<double> times;
  std::vector<int> states;
};

struct Dataset {
  int N = 0;
  std::vector<ObservedPath> trajectories;

  /// Maps each m reading to n = N (m + 1) / 2, which must be an integer within 1e-9.
  static Dataset from_readings(int N, std::span<const std::vector<double>> times,
                               std::span<const std::vector<double>> m_values);
  /// Throws InvalidArgument on fewer than two points, decreasing times or states outside [0, N].
  void validate() const;
  std::size_t points() const;
};

/// Samples a dataset from the SSA: `trajectories` paths observed at `points`
/// equally spaced times on [0, t_max].
Dataset synthetic_dataset(const ModelParams& params, const InitialCondition& init, int trajectories, int points,
                          double t_max, std::uint64_t seed);

/// Search box. F is searched linearly, J and gamma in log space.
struct ParamBounds {
  std::array<double, 2> F{-2.0, 2.0};
  std::array<double, 2> J{0.1353352832366127, 7.38905609893065};     // e^-2, e^2
  std::array<double, 2> gamma{0.36787944117144233, 2.718281828459045};  // e^-1, e

  /// lo <= hi per dimension (equal pins the coordinate); J and gamma bounds > 0.
  void validate() const;
  bool contains(const Theta& theta) const;
};

struct DEConfig {
  int pop_size = 50;
  int steps = 100;
  std::uint64_t seed = 0;
  int threads = 1;  ///< concurrent objective evaluations per generation
};

struct CalibrationResult {
  Theta theta_star;
  double nll = 0.0;
  long evaluations = 0;
  std::uint64_t seed = 0;
  std::vector<double> best_history;  ///< best objective after initialization and after each generation
};

/// -sum over consecutive pairs of ln P_theta(n_i, t_i - t_{i-1} | n_{i-1}); the first
/// point of each path is conditioned on. Probabilities are floored at 1e-300.
double neg_log_likelihood(const Theta& theta, const Dataset& data);

/// One search coordinate of the generic optimizer.
struct SearchDimension {
  double lo = 0.0;
  double hi = 0.0;
  bool log_scale = false;
};

struct DEResult {
  std::vector<double> x;
  double value = 0.0;
  long evaluations = 0;
  std::vector<double> best_history;
};

using VectorObjective = std::function<double(std::span<const double>)>;

/// Self-adaptive rand/1/bin differential evolution. Each member carries its own
/// mutation factor and crossover rate, regenerated with probability 0.1 before
/// each trial; trials outside the box are reflected back. Non-finite or throwing
/// objectives count as +inf. Deterministic given the seed and independent of
/// `threads`.
DEResult minimize_de(const VectorObjective& objective, std::span<const SearchDimension> dims, const DEConfig& config);

using ThetaObjective = std::function<double(const Theta&)>;

CalibrationResult differential_evolution(const ThetaObjective& objective, const ParamBounds& bounds,
                                         const DEConfig& config);

/// Minimizes neg_log_likelihood over the bounds.
CalibrationResult calibrate(const Dataset& data, const ParamBounds& bounds, const DEConfig& config);

struct ErrorMetrics {
  double E_tot = 0.0;  ///< sum of relative errors over F, J, gamma
  double f = 0.0;      ///< relative error of F / J
};

/// Throws InvalidArgument when a true component (or F/J) is zero.
ErrorMetrics error_metrics(const Theta& truth, const Theta& estimate);

}  // namespace bdm
