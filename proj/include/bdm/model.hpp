#pragma once

// Mean-field binary decision model: parameters, per-agent transition rates
// for the supported rate families, the gain/utility algebra and the
// deterministic (large-N) equilibria.

#include <utility>
#include <variant>
#include <vector>

namespace bdm {

/// The five model constants plus the number of agents.
struct ModelParams {
  double F = 0.0;      ///< zeitgeist (global influence)
  double J = 0.0;      ///< interaction strength, >= 0
  double alpha = 0.0;  ///< altruism weight in [0, 1]
  double beta = 0.0;   ///< rationality, >= 0
  double gamma = 1.0;  ///< rate scale, > 0
  int N = 1;           ///< number of agents, >= 1

  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
};

/// Glauber/logit rates: gamma / (1 + exp(-beta * gain)).
struct Logit {};

/// Arrhenius rates: gamma * exp(beta * utility after the flip). Unbounded.
struct Arrhenius {};

/// Kirman's ant recruitment model. Ignores F, J, alpha, beta and gamma.
struct Kirman {
  double epsilon = 0.0;  ///< random switching rate, > 0
  double mu = 0.0;       ///< recruitment rate, >= 0
};

using RateFamily = std::variant<Logit, Arrhenius, Kirman>;

/// Total birth/death propensities of the chain over n = 0..N.
///
/// Both vectors have length N + 1. birth[n] is the rate n -> n+1 and
/// death[n] the rate n -> n-1; birth[N] and death[0] are always zero.
struct RateTable {
  int N = 0;
  std::vector<double> birth;
  std::vector<double> death;

  /// 1-based propensities: a_n = birth[n-1] for n = 1..N.
  double a(int n) const { return birth[n - 1]; }
  /// b_n = death[n+1] for n = 0..N-1.
  double b(int n) const { return death[n + 1]; }
};

/// One fixed point of m = tanh(beta (F + J (1 + alpha) m)).
struct EquilibriumRoot {
  double m = 0.0;
  bool stable = false;
};

struct EquilibriumSet {
  std::vector<EquilibriumRoot> roots;  ///< sorted by m
  int count() const { return static_cast<int>(roots.size()); }
};

/// m = (2n - N) / N.
double order_parameter(int n, int N);

/// Gain of one agent with current decision s (+1 right, -1 left) flipping
/// while n agents decide right. Includes the 2(1+alpha)J/N self-interaction.
double gain(const ModelParams& params, int s, int n);

/// Per-agent rates (r = left -> right, l = right -> left) at state n.
std::pair<double, double> per_agent_rates(const ModelParams& params, const RateFamily& family, int n);

/// birth[n] = (N - n) r(n), death[n] = n l(n).
RateTable build_rate_table(const ModelParams& params, const RateFamily& family);

/// H = N m (F + (alpha + 1) J m / 2).
double hamiltonian(const ModelParams& params, int n);

/// beta_c = 1 / (J (1 + alpha)); throws PreconditionError when J = 0.
double critical_rationality(const ModelParams& params);

/// All roots of the mean-field self-consistency equation on [-1, 1].
EquilibriumSet mean_field_equilibria(const ModelParams& params);

}  // namespace bdm
