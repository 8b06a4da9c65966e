#pragma once

// Direct-method stochastic simulation of the birth-death chain, ensembles and
// their empirical statistics.

#include <cstdint>
#include <span>
#include <vector>

#include "bdm/model.hpp"
#include "bdm/spectral.hpp"

namespace bdm {

/// Starting state: a fixed n0, or each agent independently right with probability p0.
struct InitialCondition {
  bool binomial = false;
  int n0 = 0;
  double p0 = 0.5;

  static InitialCondition fixed(int n) { return {false, n, 0.0}; }
  static InitialCondition bernoulli(double p) { return {true, 0, p}; }
};

/// States sampled on the grid t_k = k dt, k = 0..M.
struct Trajectory {
  int N = 0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> states;

  int M() const { return static_cast<int>(states.size()) - 1; }
  double time(int k) const { return k * dt; }
};

struct EnsembleStats {
  int N = 0;
  int E = 0;
  double dt = 0.0;
  std::vector<double> mean;       ///< <n> per grid time
  std::vector<double> variance;   ///< Var(n) per grid time (population form, divides by E)
  std::vector<DistributionVector> distributions;

  double time(int k) const { return k * dt; }
};

/// Seed of ensemble member `index`, a splitmix64 hash of (master, index).
std::uint64_t trajectory_seed(std::uint64_t master, std::uint64_t index);

/// Number of grid steps M = t_max / dt; throws unless t_max is a multiple of dt.
int grid_steps(double t_max, double dt);

Trajectory simulate(const RateTable& rates, const InitialCondition& init, double t_max, double dt,
                    std::uint64_t seed);

EnsembleStats simulate_ensemble(const RateTable& rates, const InitialCondition& init, double t_max, double dt,
                                int E, std::uint64_t seed);

/// SSA restarted at every breakpoint of a piecewise-constant zeitgeist; a
/// waiting time that crosses a breakpoint is discarded and redrawn there.
Trajectory simulate_piecewise(const ZeitgeistSchedule& schedule, const ModelParams& base, const RateFamily& family,
                              const InitialCondition& init, double t_max, double dt, std::uint64_t seed);

EnsembleStats simulate_piecewise_ensemble(const ZeitgeistSchedule& schedule, const ModelParams& base,
                                          const RateFamily& family, const InitialCondition& init, double t_max,
                                          double dt, int E, std::uint64_t seed);

/// Mean, variance and histograms over trajectories sharing one grid.
EnsembleStats summarize(std::span<const Trajectory> trajectories);

/// Waiting times spent in state n before the next jump, drawn as the SSA does.
std::vector<double> sample_holding_times(const RateTable& rates, int n, int count, std::uint64_t seed);

}  // namespace bdm
