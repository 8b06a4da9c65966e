#include "bdm/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <thread>

#include "bdm/error.hpp"
#include "bdm/spectral.hpp"

namespace bdm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kProbabilityFloor = 1e-300;

class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int below(int n) { return std::min(n - 1, static_cast<int>((*this)() * n)); }

 private:
  std::mt19937_64 engine_;
};

// Folds v back into [lo, hi] by repeated reflection at the walls.
double reflect(double v, double lo, double hi) {
  const double w = hi - lo;
  if (!(w > 0.0)) return lo;
  double y = std::fmod(v - lo, 2.0 * w);
  if (y < 0.0) y += 2.0 * w;
  return lo + (y <= w ? y : 2.0 * w - y);
}

double safe_eval(const VectorObjective& objective, std::span<const double> x) {
  try {
    const double v = objective(x);
    return std::isnan(v) ? kInf : v;
  } catch (const std::exception&) {
    return kInf;
  }
}

void evaluate_all(const VectorObjective& objective, const std::vector<std::vector<double>>& xs,
                  std::vector<double>& out, int threads) {
  const int n = static_cast<int>(xs.size());
  out.resize(n);
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) out[i] = safe_eval(objective, xs[i]);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) out[i] = safe_eval(objective, xs[i]);
    });
  }
  for (auto& t : pool) t.join();
}

void check_theta(const Theta& theta) {
  if (!std::isfinite(theta.F)) throw InvalidArgument("F must be finite");
  if (!(theta.J >= 0.0) || !std::isfinite(theta.J)) throw InvalidArgument("J must be finite and >= 0");
  if (!(theta.gamma > 0.0) || !std::isfinite(theta.gamma)) throw InvalidArgument("gamma must be finite and > 0");
}

void check_range(const std::array<double, 2>& r, const char* name, bool positive) {
  if (!std::isfinite(r[0]) || !std::isfinite(r[1]) || !(r[0] <= r[1])) {
    throw InvalidArgument(std::string("bounds for ") + name + " must satisfy lo <= hi");
  }
  if (positive && !(r[0] > 0.0)) throw InvalidArgument(std::string("bounds for ") + name + " must be > 0");
}

}  // namespace

ModelParams Theta::to_params(int N) const {
  ModelParams p;
  p.F = F;
  p.J = J;
  p.alpha = 0.0;
  p.beta = 1.0;
  p.gamma = gamma;
  p.N = N;
  return p;
}

Dataset Dataset::from_readings(int N, std::span<const std::vector<double>> times,
                               std::span<const std::vector<double>> m_values) {
  if (N < 1) throw InvalidArgument("N must be >= 1");
  if (times.size() != m_values.size()) throw InvalidArgument("times and readings differ in trajectory count");
  Dataset d;
  d.N = N;
  for (size_t j = 0; j < times.size(); ++j) {
    if (times[j].size() != m_values[j].size()) throw InvalidArgument("times and readings differ in length");
    ObservedPath path;
    path.times = times[j];
    for (double m : m_values[j]) {
      const double x = N * (m + 1.0) / 2.0;
      const double n = std::round(x);
      if (!std::isfinite(x) || std::fabs(x - n) > 1e-9) {
        throw InvalidArgument("reading m = " + std::to_string(m) + " does not map to an integer n");
      }
      path.states.push_back(static_cast<int>(n));
    }
    d.trajectories.push_back(std::move(path));
  }
  d.validate();
  return d;
}

void Dataset::validate() const {
  if (N < 1) throw InvalidArgument("N must be >= 1");
  if (trajectories.empty()) throw InvalidArgument("dataset has no trajectories");
  for (const auto& path : trajectories) {
    if (path.times.size() != path.states.size()) throw InvalidArgument("path times and states differ in length");
    if (path.times.size() < 2) throw InvalidArgument("each trajectory needs at least two points");
    for (size_t i = 0; i < path.times.size(); ++i) {
      if (!std::isfinite(path.times[i])) throw InvalidArgument("observation times must be finite");
      if (i > 0 && path.times[i] < path.times[i - 1]) throw InvalidArgument("observation times must not decrease");
      if (path.states[i] < 0 || path.states[i] > N) throw InvalidArgument("observed state outside [0, N]");
    }
  }
}

std::size_t Dataset::points() const {
  std::size_t n = 0;
  for (const auto& p : trajectories) n += p.states.size();
  return n;
}

Dataset synthetic_dataset(const ModelParams& params, const InitialCondition& init, int trajectories, int points,
                          double t_max, std::uint64_t seed) {
  if (trajectories < 1) throw InvalidArgument("need at least one trajectory");
  if (points < 2) throw InvalidArgument("need at least two points per trajectory");
  if (!(t_max > 0.0)) throw InvalidArgument("t_max must be > 0");
  const auto rates = build_rate_table(params, Logit{});
  const double dt = t_max / (points - 1);
  Dataset d;
  d.N = params.N;
  for (int j = 0; j < trajectories; ++j) {
    const auto tr = simulate(rates, init, t_max, dt, trajectory_seed(seed, j));
    ObservedPath path;
    for (int k = 0; k <= tr.M(); ++k) {
      path.times.push_back(tr.time(k));
      path.states.push_back(tr.states[k]);
    }
    d.trajectories.push_back(std::move(path));
  }
  return d;
}

void ParamBounds::validate() const {
  check_range(F, "F", false);
  check_range(J, "J", true);
  check_range(gamma, "gamma", true);
}

bool ParamBounds::contains(const Theta& t) const {
  return t.F >= F[0] && t.F <= F[1] && t.J >= J[0] && t.J <= J[1] && t.gamma >= gamma[0] && t.gamma <= gamma[1];
}

double neg_log_likelihood(const Theta& theta, const Dataset& data) {
  check_theta(theta);
  data.validate();

  // Transition counts grouped by time gap, so each gap is evaluated once per distinct pair.
  std::map<double, std::map<std::pair<int, int>, long>> by_gap;
  for (const auto& path : data.trajectories) {
    for (size_t i = 1; i < path.states.size(); ++i) {
      ++by_gap[path.times[i] - path.times[i - 1]][{path.states[i], path.states[i - 1]}];
    }
  }

  // Gaps that differ only by rounding (t_i = i dt) share one evaluation.
  std::vector<std::pair<double, std::map<std::pair<int, int>, long>>> groups;
  for (auto& [gap, counts] : by_gap) {
    if (!groups.empty() && gap - groups.back().first <= 1e-12 * gap) {
      for (const auto& [pair, c] : counts) groups.back().second[pair] += c;
    } else {
      groups.emplace_back(gap, std::move(counts));
    }
  }

  double nll = 0.0;
  std::unique_ptr<TransitionKernel> kernel;
  for (const auto& [gap, counts] : groups) {
    if (gap == 0.0) {
      for (const auto& [pair, c] : counts) {
        if (pair.first != pair.second) nll -= c * std::log(kProbabilityFloor);
      }
      continue;
    }
    if (!kernel) kernel = std::make_unique<TransitionKernel>(build_rate_table(theta.to_params(data.N), Logit{}));
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(counts.size());
    for (const auto& kv : counts) pairs.push_back(kv.first);
    const auto probs = kernel->probabilities(pairs, gap);
    size_t k = 0;
    for (const auto& kv : counts) nll -= kv.second * std::log(std::max(probs[k++], kProbabilityFloor));
  }
  return nll;
}

DEResult minimize_de(const VectorObjective& objective, std::span<const SearchDimension> dims, const DEConfig& config) {
  if (dims.empty()) throw InvalidArgument("search space has no dimensions");
  if (config.pop_size < 8) throw InvalidArgument("population size must be >= 8");
  if (config.steps < 1) throw InvalidArgument("steps must be >= 1");
  const int D = static_cast<int>(dims.size());
  std::vector<double> lo(D), hi(D);
  bool collapsed = true;
  for (int d = 0; d < D; ++d) {
    const auto& s = dims[d];
    if (!std::isfinite(s.lo) || !std::isfinite(s.hi) || !(s.lo <= s.hi)) {
      throw InvalidArgument("search bounds must satisfy lo <= hi");
    }
    if (s.log_scale && !(s.lo > 0.0)) throw InvalidArgument("log-scale bounds must be > 0");
    lo[d] = s.log_scale ? std::log(s.lo) : s.lo;
    hi[d] = s.log_scale ? std::log(s.hi) : s.hi;
    collapsed = collapsed && lo[d] == hi[d];
  }
  auto to_x = [&](const std::vector<double>& u) {
    std::vector<double> x(D);
    for (int d = 0; d < D; ++d) {
      if (lo[d] == hi[d]) x[d] = dims[d].lo;
      else x[d] = dims[d].log_scale ? std::exp(u[d]) : u[d];
    }
    return x;
  };
  VectorObjective in_box = [&](std::span<const double> u) {
    return objective(to_x(std::vector<double>(u.begin(), u.end())));
  };

  DEResult result;
  if (collapsed) {
    result.x = to_x(lo);
    result.value = safe_eval(objective, result.x);
    result.evaluations = 1;
    result.best_history = {result.value};
    return result;
  }

  const int P = config.pop_size;
  Uniform rng(config.seed);
  std::vector<std::vector<double>> pop(P, std::vector<double>(D));
  for (auto& u : pop) {
    for (int d = 0; d < D; ++d) u[d] = lo[d] + (hi[d] - lo[d]) * rng();
  }
  std::vector<double> value;
  evaluate_all(in_box, pop, value, config.threads);
  result.evaluations = P;
  std::vector<double> scale(P, 0.5), cross(P, 0.9);

  auto best_index = [&] {
    return static_cast<int>(std::min_element(value.begin(), value.end()) - value.begin());
  };
  result.best_history.push_back(value[best_index()]);

  std::vector<std::vector<double>> trial(P, std::vector<double>(D));
  std::vector<double> trial_scale(P), trial_cross(P), trial_value;
  for (int step = 0; step < config.steps; ++step) {
    for (int i = 0; i < P; ++i) {
      trial_scale[i] = rng() < 0.1 ? 0.1 + 0.9 * rng() : scale[i];
      trial_cross[i] = rng() < 0.1 ? rng() : cross[i];
      int r1, r2, r3;
      do r1 = rng.below(P); while (r1 == i);
      do r2 = rng.below(P); while (r2 == i || r2 == r1);
      do r3 = rng.below(P); while (r3 == i || r3 == r1 || r3 == r2);
      const int forced = rng.below(D);
      for (int d = 0; d < D; ++d) {
        const bool take = d == forced || rng() < trial_cross[i];
        const double v = take ? pop[r1][d] + trial_scale[i] * (pop[r2][d] - pop[r3][d]) : pop[i][d];
        trial[i][d] = reflect(v, lo[d], hi[d]);
      }
    }
    evaluate_all(in_box, trial, trial_value, config.threads);
    result.evaluations += P;
    for (int i = 0; i < P; ++i) {
      if (trial_value[i] <= value[i]) {
        pop[i] = trial[i];
        value[i] = trial_value[i];
        scale[i] = trial_scale[i];
        cross[i] = trial_cross[i];
      }
    }
    result.best_history.push_back(value[best_index()]);
  }
  const int b = best_index();
  result.x = to_x(pop[b]);
  result.value = value[b];
  return result;
}

CalibrationResult differential_evolution(const ThetaObjective& objective, const ParamBounds& bounds,
                                         const DEConfig& config) {
  bounds.validate();
  const std::array<SearchDimension, 3> dims{SearchDimension{bounds.F[0], bounds.F[1], false},
                                            SearchDimension{bounds.J[0], bounds.J[1], true},
                                            SearchDimension{bounds.gamma[0], bounds.gamma[1], true}};
  const auto r = minimize_de([&](std::span<const double> x) { return objective(Theta{x[0], x[1], x[2]}); }, dims,
                             config);
  CalibrationResult out;
  // exp(log(x)) can step just outside the box; clamp to keep the reported point inside.
  out.theta_star = Theta{std::clamp(r.x[0], bounds.F[0], bounds.F[1]), std::clamp(r.x[1], bounds.J[0], bounds.J[1]),
                         std::clamp(r.x[2], bounds.gamma[0], bounds.gamma[1])};
  out.nll = r.value;
  out.evaluations = r.evaluations;
  out.seed = config.seed;
  out.best_history = r.best_history;
  return out;
}

CalibrationResult calibrate(const Dataset& data, const ParamBounds& bounds, const DEConfig& config) {
  data.validate();
  auto result = differential_evolution([&](const Theta& t) { return neg_log_likelihood(t, data); }, bounds, config);
  if (!std::isfinite(result.nll)) throw NumericalError("no finite likelihood found within the bounds");
  return result;
}

ErrorMetrics error_metrics(const Theta& truth, const Theta& estimate) {
  if (truth.F == 0.0 || truth.J == 0.0 || truth.gamma == 0.0) {
    throw InvalidArgument("error metrics are undefined for a zero true parameter");
  }
  ErrorMetrics m;
  m.E_tot = std::fabs((truth.F - estimate.F) / truth.F) + std::fabs((truth.J - estimate.J) / truth.J) +
            std::fabs((truth.gamma - estimate.gamma) / truth.gamma);
  const double ratio = truth.F / truth.J;
  if (estimate.J == 0.0) throw InvalidArgument("error metric f is undefined for J* = 0");
  m.f = std::fabs((ratio - estimate.F / estimate.J) / ratio);
  return m;
}

}  // namespace bdm
