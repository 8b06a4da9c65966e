#include "bdm/model.hpp"

#include <cmath>
#include <string>

#include "bdm/error.hpp"

namespace bdm {

namespace {

constexpr int kBracketGrid = 10000;
constexpr double kRootTolerance = 1e-12;

void check_state(int n, int N) {
  if (n < 0 || n > N) {
    throw InvalidArgument("state n=" + std::to_string(n) + " outside [0, " + std::to_string(N) + "]");
  }
}

double logistic(double x) {
  // Stable for large |x|.
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void ModelParams::validate() const {
  if (N < 1) throw InvalidArgument("N must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be > 0");
  if (!(J >= 0.0)) throw InvalidArgument("J must be >= 0");
  if (!std::isfinite(F)) throw InvalidArgument("F must be finite");
}

double order_parameter(int n, int N) {
  if (N < 1) throw InvalidArgument("N must be >= 1");
  check_state(n, N);
  return static_cast<double>(2 * n - N) / N;
}

double gain(const ModelParams& params, int s, int n) {
  check_state(n, params.N);
  if (s != 1 && s != -1) throw InvalidArgument("decision s must be +1 or -1");
  if (s == 1 && n < 1) throw InvalidArgument("no right-deciding agent can flip at n=0");
  if (s == -1 && n > params.N - 1) throw InvalidArgument("no left-deciding agent can flip at n=N");
  const double coupling = params.J * (1.0 + params.alpha);
  const double m = order_parameter(n, params.N);
  return -2.0 * s * (params.F + coupling * m) + 2.0 * coupling / params.N;
}

std::pair<double, double> per_agent_rates(const ModelParams& params, const RateFamily& family, int n) {
  check_state(n, params.N);
  const int N = params.N;
  const double m = order_parameter(n, N);
  const double coupling = params.J * (1.0 + params.alpha);

  if (const auto* k = std::get_if<Kirman>(&family)) {
    if (N < 2) throw InvalidArgument("Kirman rates need N >= 2");
    const double r = k->epsilon + k->mu * n / (N - 1);
    const double l = k->epsilon + k->mu * (N - n) / (N - 1);
    return {r, l};
  }

  // Gains for a left agent (s = -1) and a right agent (s = +1) at state n.
  // Evaluated even at the boundaries where no such agent exists; the mass
  // action factors (N - n) and n zero those propensities.
  const double self = 2.0 * coupling / N;
  const double gain_left = 2.0 * (params.F + coupling * m) + self;
  const double gain_right = -2.0 * (params.F + coupling * m) + self;

  if (std::holds_alternative<Logit>(family)) {
    return {params.gamma * logistic(params.beta * gain_left), params.gamma * logistic(params.beta * gain_right)};
  }
  // Arrhenius: utility of the flipping agent after the flip.
  const double after_left = params.F + coupling * (m + 2.0 / N);
  const double after_right = -(params.F + coupling * (m - 2.0 / N));
  return {params.gamma * std::exp(params.beta * after_left), params.gamma * std::exp(params.beta * after_right)};
}

RateTable build_rate_table(const ModelParams& params, const RateFamily& family) {
  params.validate();
  if (const auto* k = std::get_if<Kirman>(&family)) {
    if (!(k->epsilon > 0.0)) throw InvalidArgument("Kirman epsilon must be > 0");
    if (!(k->mu >= 0.0)) throw InvalidArgument("Kirman mu must be >= 0");
  }
  const int N = params.N;
  RateTable table;
  table.N = N;
  table.birth.assign(N + 1, 0.0);
  table.death.assign(N + 1, 0.0);
  for (int n = 0; n <= N; ++n) {
    const auto [r, l] = per_agent_rates(params, family, n);
    if (n < N) table.birth[n] = (N - n) * r;
    if (n > 0) table.death[n] = n * l;
  }
  return table;
}

double hamiltonian(const ModelParams& params, int n) {
  const double m = order_parameter(n, params.N);
  return params.N * m * (params.F + 0.5 * (params.alpha + 1.0) * params.J * m);
}

double critical_rationality(const ModelParams& params) {
  if (!(params.J > 0.0)) throw PreconditionError("J = 0: no phase transition, critical rationality undefined");
  return 1.0 / (params.J * (1.0 + params.alpha));
}

EquilibriumSet mean_field_equilibria(const ModelParams& params) {
  params.validate();
  const double coupling = params.J * (1.0 + params.alpha);
  auto residual = [&](double m) { return std::tanh(params.beta * (params.F + coupling * m)) - m; };
  auto slope = [&](double m) {
    const double th = std::tanh(params.beta * (params.F + coupling * m));
    return params.beta * coupling * (1.0 - th * th) - 1.0;
  };

  EquilibriumSet out;
  auto add_root = [&](double m) { out.roots.push_back({m, slope(m) < 0.0}); };

  double x_prev = -1.0;
  double g_prev = residual(x_prev);
  if (g_prev == 0.0) add_root(x_prev);
  for (int k = 1; k <= kBracketGrid; ++k) {
    const double x = -1.0 + 2.0 * k / kBracketGrid;
    const double g = residual(x);
    if (g == 0.0) {
      add_root(x);
    } else if (g_prev != 0.0 && (g_prev < 0.0) != (g < 0.0)) {
      double lo = x_prev;
      double hi = x;
      double g_lo = g_prev;
      while (hi - lo > kRootTolerance) {
        const double mid = 0.5 * (lo + hi);
        const double g_mid = residual(mid);
        if (g_mid == 0.0) {
          lo = hi = mid;
          break;
        }
        if ((g_mid < 0.0) == (g_lo < 0.0)) {
          lo = mid;
          g_lo = g_mid;
        } else {
          hi = mid;
        }
      }
      add_root(0.5 * (lo + hi));
    }
    x_prev = x;
    g_prev = g;
  }
  return out;
}

}  // namespace bdm
