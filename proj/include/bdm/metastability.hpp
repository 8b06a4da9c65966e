#pragma once

// Bistable regime: equilibria read off the steady state, exact mean first
// passage times to the unstable point, fixation probabilities, the two-state
// relaxation-rate estimate and large-N escape-time asymptotics.

#include <vector>

#include "bdm/model.hpp"
#include "bdm/spectral.hpp"

namespace bdm {

struct EquilibriaIndices {
  int n_minus = 0;
  int n_u = 0;
  int n_plus = 0;
};

struct FirstPassageResult {
  std::vector<double> tau;      ///< tau[n], mean time to first reach n_u from n; tau[n_u] = 0
  std::vector<double> log_tau;  ///< log tau[n] (-inf at n_u), finite where tau overflows
  double tau_lr = 0.0;
  double tau_rl = 0.0;
  double phi_R = 0.0;
  double lambda2_approx = 0.0;  ///< positive rate
};

/// Two maxima and the interior minimum between them, by neighbor comparison.
/// Plateaus report their leftmost index. Throws PreconditionError otherwise.
EquilibriaIndices find_equilibria(const DistributionVector& steady);

/// Local maxima of a distribution whose prominence is at least
/// `min_relative_prominence` times their height (0 counts every maximum).
int count_modes(const DistributionVector& dist, double min_relative_prominence = 0.0);

/// Exact mean first passage times to n_u, from the left with a reflecting
/// boundary at 0 and from the right with one at N.
std::vector<double> mfpt_to_unstable(const RateTable& rates, int n_u);
/// Same, as natural logarithms (entry n_u is -inf).
std::vector<double> log_mfpt_to_unstable(const RateTable& rates, int n_u);

/// tau_lr and tau_rl: tau weighted by the steady state restricted to each side of n_u.
std::pair<double, double> mode_escape_times(const DistributionVector& steady, const std::vector<double>& tau, int n_u);

/// Probability of absorbing at n_plus before n_minus, starting from i.
double fixation_probability(const RateTable& rates, int n_minus, int n_plus, int i);
/// phi_i for i = n_minus..n_plus.
std::vector<double> fixation_curve(const RateTable& rates, int n_minus, int n_plus);

/// lambda2 ~ phi_R / tau_lr + (1 - phi_R) / tau_rl.
double relaxation_rate(double tau_lr, double tau_rl, double phi_R);

/// Equilibria, passage times, fixation and the relaxation estimate in one pass.
struct MetastabilityReport {
  EquilibriaIndices equilibria;
  FirstPassageResult passage;
  std::vector<double> fixation;  ///< phi_i over [n_minus, n_plus]
};
MetastabilityReport analyze_metastability(const RateTable& rates);

/// Saddle-point escape times from the diffusion approximation of the chain.
struct AsymptoticEscape {
  double tau_lr = 0.0;
  double tau_rl = 0.0;
  double log_tau_lr = 0.0;
  double log_tau_rl = 0.0;
  double exponent_lr = 0.0;  ///< N (1 - F / (J (1 + alpha)))
  double exponent_rl = 0.0;  ///< N (1 + F / (J (1 + alpha)))
  double prefactor_lr = 0.0;
  double prefactor_rl = 0.0;
  double phi_minus = 0.0;    ///< stable minima and saddle of the potential, as fractions n / N
  double phi_u = 0.0;
  double phi_plus = 0.0;
  double barrier_lr = 0.0;   ///< finite-beta potential differences
  double barrier_rl = 0.0;
};

/// Potential Phi(y) = -2N int_0^y a1/a2 on [0, 1].
double escape_potential(const ModelParams& params, double y);

AsymptoticEscape asymptotic_escape_times(const ModelParams& params);

/// Only the exponents N (1 -+ F / (J (1 + alpha))).
std::pair<double, double> asymptotic_escape_exponents(const ModelParams& params);

}  // namespace bdm
