#include "bdm/simulate.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bdm/error.hpp"

namespace bdm {

namespace {

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // (0, 1], safe under log.
  double uniform_open_low() { return 1.0 - uniform(); }

 private:
  std::mt19937_64 engine_;
};

int draw_initial(const InitialCondition& init, int N, Stream& rng) {
  if (!init.binomial) {
    if (init.n0 < 0 || init.n0 > N) throw InvalidArgument("initial state n0 outside [0, N]");
    return init.n0;
  }
  if (!(init.p0 >= 0.0 && init.p0 <= 1.0)) throw InvalidArgument("initial p0 must lie in [0, 1]");
  int n = 0;
  for (int i = 0; i < N; ++i) n += rng.uniform() < init.p0 ? 1 : 0;
  return n;
}

void check_table(const RateTable& rates) {
  if (rates.N < 1 || static_cast<int>(rates.birth.size()) != rates.N + 1 ||
      static_cast<int>(rates.death.size()) != rates.N + 1) {
    throw InvalidArgument("malformed rate table");
  }
  for (int n = 0; n <= rates.N; ++n) {
    if (!(rates.birth[n] >= 0.0) || !(rates.death[n] >= 0.0) || !std::isfinite(rates.birth[n]) ||
        !std::isfinite(rates.death[n])) {
      throw InvalidArgument("rates must be finite and >= 0");
    }
  }
}

// Writes grid states in order; grid point k holds the state occupying time k dt.
class GridWriter {
 public:
  GridWriter(std::vector<int>& states, double dt) : states_(states), dt_(dt) {}

  void fill_before(double t_end, int n) {
    while (k_ < static_cast<int>(states_.size()) && k_ * dt_ < t_end) states_[k_++] = n;
  }
  void fill_rest(int n) {
    while (k_ < static_cast<int>(states_.size())) states_[k_++] = n;
  }

 private:
  std::vector<int>& states_;
  double dt_;
  int k_ = 0;
};

// Direct-method steps on [t0, t1) with fixed rates; a waiting time that reaches
// t1 is dropped (the exponential clock is memoryless). Returns the state at t1.
int run_segment(const RateTable& rates, int n, double t0, double t1, Stream& rng, GridWriter& grid) {
  double t = t0;
  while (true) {
    const double up = rates.birth[n];
    const double f = up + rates.death[n];
    if (!(f > 0.0)) break;
    const double u = std::log(1.0 / rng.uniform_open_low()) / f;
    const double r2 = rng.uniform();
    if (t + u >= t1) break;
    t += u;
    grid.fill_before(t, n);
    n += up > r2 * f ? 1 : -1;
  }
  grid.fill_before(t1, n);
  return n;
}

struct Accumulator {
  int N;
  int steps;
  std::vector<long long> counts;  // (k, n) -> occurrences
  int E = 0;

  Accumulator(int N_, int M) : N(N_), steps(M + 1), counts(static_cast<size_t>(M + 1) * (N_ + 1), 0) {}

  void add(const Trajectory& tr) {
    for (int k = 0; k < steps; ++k) ++counts[static_cast<size_t>(k) * (N + 1) + tr.states[k]];
    ++E;
  }

  EnsembleStats finish(double dt) const {
    EnsembleStats s;
    s.N = N;
    s.E = E;
    s.dt = dt;
    s.mean.resize(steps);
    s.variance.resize(steps);
    s.distributions.resize(steps);
    for (int k = 0; k < steps; ++k) {
      auto& d = s.distributions[k];
      d.time = k * dt;
      d.probs.resize(N + 1);
      double m1 = 0.0;
      double m2 = 0.0;
      for (int n = 0; n <= N; ++n) {
        const double c = static_cast<double>(counts[static_cast<size_t>(k) * (N + 1) + n]);
        d.probs[n] = c / E;
        m1 += n * c;
        m2 += static_cast<double>(n) * n * c;
      }
      m1 /= E;
      s.mean[k] = m1;
      s.variance[k] = std::max(0.0, m2 / E - m1 * m1);
    }
    return s;
  }
};

void check_ensemble_size(int E) {
  if (E < 1) throw InvalidArgument("ensemble size must be >= 1");
}

}  // namespace

std::uint64_t trajectory_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int grid_steps(double t_max, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be > 0");
  if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw InvalidArgument("t_max must be >= 0");
  const double ratio = t_max / dt;
  const double M = std::round(ratio);
  if (std::fabs(ratio - M) > 1e-9 * std::max(1.0, M)) {
    throw InvalidArgument("t_max must be an integer multiple of dt");
  }
  if (M > 1e8) throw InvalidArgument("grid too large");
  return static_cast<int>(M);
}

Trajectory simulate(const RateTable& rates, const InitialCondition& init, double t_max, double dt,
                    std::uint64_t seed) {
  check_table(rates);
  const int M = grid_steps(t_max, dt);
  Stream rng(seed);
  Trajectory tr;
  tr.N = rates.N;
  tr.dt = dt;
  tr.seed = seed;
  tr.states.assign(M + 1, 0);
  GridWriter grid(tr.states, dt);
  const int n0 = draw_initial(init, rates.N, rng);
  const int n = run_segment(rates, n0, 0.0, M * dt, rng, grid);
  grid.fill_rest(n);
  return tr;
}

EnsembleStats simulate_ensemble(const RateTable& rates, const InitialCondition& init, double t_max, double dt,
                                int E, std::uint64_t seed) {
  check_ensemble_size(E);
  Accumulator acc(rates.N, grid_steps(t_max, dt));
  for (int i = 0; i < E; ++i) acc.add(simulate(rates, init, t_max, dt, trajectory_seed(seed, i)));
  return acc.finish(dt);
}

Trajectory simulate_piecewise(const ZeitgeistSchedule& schedule, const ModelParams& base, const RateFamily& family,
                              const InitialCondition& init, double t_max, double dt, std::uint64_t seed) {
  schedule.validate();
  const int M = grid_steps(t_max, dt);
  const double end = M * dt;
  if (end > schedule.end() * (1.0 + 1e-12)) throw InvalidArgument("t_max lies beyond the last schedule breakpoint");
  Stream rng(seed);
  Trajectory tr;
  tr.N = base.N;
  tr.dt = dt;
  tr.seed = seed;
  tr.states.assign(M + 1, 0);
  GridWriter grid(tr.states, dt);
  int n = draw_initial(init, base.N, rng);
  double start = 0.0;
  for (size_t j = 0; j < schedule.breakpoints.size() && start < end; ++j) {
    const double stop = std::min(end, schedule.breakpoints[j]);
    ModelParams p = base;
    p.F = schedule.values[j];
    const auto rates = build_rate_table(p, family);
    n = run_segment(rates, n, start, stop, rng, grid);
    start = stop;
  }
  grid.fill_rest(n);
  return tr;
}

EnsembleStats simulate_piecewise_ensemble(const ZeitgeistSchedule& schedule, const ModelParams& base,
                                          const RateFamily& family, const InitialCondition& init, double t_max,
                                          double dt, int E, std::uint64_t seed) {
  check_ensemble_size(E);
  Accumulator acc(base.N, grid_steps(t_max, dt));
  for (int i = 0; i < E; ++i) {
    acc.add(simulate_piecewise(schedule, base, family, init, t_max, dt, trajectory_seed(seed, i)));
  }
  return acc.finish(dt);
}

EnsembleStats summarize(std::span<const Trajectory> trajectories) {
  if (trajectories.empty()) throw InvalidArgument("no trajectories to summarize");
  const auto& first = trajectories.front();
  Accumulator acc(first.N, first.M());
  for (const auto& tr : trajectories) {
    if (tr.N != first.N || tr.M() != first.M() || tr.dt != first.dt) {
      throw InvalidArgument("trajectories do not share one grid");
    }
    acc.add(tr);
  }
  return acc.finish(first.dt);
}

std::vector<double> sample_holding_times(const RateTable& rates, int n, int count, std::uint64_t seed) {
  check_table(rates);
  if (n < 0 || n > rates.N) throw InvalidArgument("state outside [0, N]");
  if (count < 0) throw InvalidArgument("count must be >= 0");
  const double f = rates.birth[n] + rates.death[n];
  if (!(f > 0.0)) throw PreconditionError("state " + std::to_string(n) + " has no exit");
  Stream rng(seed);
  std::vector<double> out(count);
  for (auto& u : out) {
    u = std::log(1.0 / rng.uniform_open_low()) / f;
    rng.uniform();
  }
  return out;
}

}  // namespace bdm
