#pragma once

// Master operator of the birth-death chain, its spectrum, the analytic
// time-dependent solution and derived propagators.

#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "bdm/model.hpp"

namespace bdm {

/// Tridiagonal generator A of dP/dt = A P over n = 0..N.
///
/// Column n0 holds the outflow of state n0: sub[n] = A(n+1, n) = birth[n],
/// super[n] = A(n, n+1) = death[n+1], diag[n] = -(birth[n] + death[n]).
struct MasterOperator {
  std::vector<double> sub;
  std::vector<double> diag;
  std::vector<double> super;

  int dim() const { return static_cast<int>(diag.size()); }
  /// Sum of column n (zero up to rounding).
  double column_sum(int n) const;
  /// A(row, col) as a dense lookup.
  double at(int row, int col) const;
};

/// Probability mass over n = 0..N at one time.
struct DistributionVector {
  std::vector<double> probs;
  double time = 0.0;

  int N() const { return static_cast<int>(probs.size()) - 1; }
  double total() const;
  double mean() const;
  double variance() const;
};

/// Eigenvalues of the master operator, sorted descending, eigenvalues[0] == 0.
struct Spectrum {
  std::vector<double> eigenvalues;
  double raw_lambda1 = 0.0;  ///< leading eigenvalue before it was pinned to zero

  double lambda2() const { return eigenvalues.size() > 1 ? eigenvalues[1] : 0.0; }
  double spread() const { return eigenvalues.empty() ? 0.0 : eigenvalues.front() - eigenvalues.back(); }
};

/// Piecewise-constant zeitgeist: F = values[j] on [breakpoints[j-1], breakpoints[j]),
/// with an implicit breakpoint at t = 0.
struct ZeitgeistSchedule {
  std::vector<double> breakpoints;
  std::vector<double> values;

  void validate() const;
  double end() const { return breakpoints.empty() ? 0.0 : breakpoints.back(); }
  /// Index of the interval containing t (the last one for t == end()).
  int interval_at(double t) const;
};

MasterOperator build_master_operator(const RateTable& rates);

/// Kirchhoff steady state, evaluated in log space. Throws PreconditionError
/// for a reducible chain (some interior rate is zero).
DistributionVector steady_state(const RateTable& rates);

/// All-real spectrum via the detailed-balance symmetrization of the generator.
Spectrum compute_spectrum(const MasterOperator& op, const DistributionVector& steady);

/// Convenience: steady state and spectrum straight from the rates.
Spectrum compute_spectrum(const RateTable& rates);

/// Binomial(N, p0) initial condition.
DistributionVector binomial_distribution(int N, double p0);
/// Point mass at n0.
DistributionVector point_mass(int N, int n0);

/// Diagnostics of one propagation call.
struct PropagationInfo {
  int precision_bits = 53;     ///< 53 means plain double (sign/log-magnitude) arithmetic
  double mass_defect = 0.0;    ///< |sum - 1| before renormalization
  double negative_mass = 0.0;  ///< total magnitude of clipped negative entries
  double error_bound = 0.0;    ///< a priori bound on the absolute error per entry
};

/// Options for the analytic propagator.
struct KernelOptions {
  /// Target absolute accuracy per probability entry.
  double tolerance = 1e-12;
  /// Upper limit for the extended-precision fallback.
  int max_precision_bits = 16384;
  /// Start the extended-precision ladder at this many bits (0 = decide automatically).
  int min_precision_bits = 0;
};

/// Analytic transition probabilities P(n, t | n0, 0) from the resolvent
/// residue expansion over the generator's eigenvalues, with characteristic
/// polynomials of the leading and trailing principal blocks.
///
/// The expansion cancels heavily when eigenvalues nearly coincide or the
/// chain is strongly metastable. The kernel estimates the cancellation from
/// the magnitude of the residue terms; when double precision (with sign and
/// log-magnitude storage) cannot meet the tolerance, or two eigenvalues are
/// closer than 1e-12 of the spectral spread, it recomputes the eigenvalues and
/// the expansion in extended precision, doubling the precision until the
/// estimate is met. The kernel is immutable and safe to share across threads.
class TransitionKernel {
 public:
  TransitionKernel(const RateTable& rates, const Spectrum& spectrum, KernelOptions options = {});
  /// Builds its own spectrum; ill-conditioned eigenvalues are resolved only
  /// once, at the kernel's working precision.
  explicit TransitionKernel(const RateTable& rates, KernelOptions options = {});

  int N() const;
  int precision_bits() const;
  /// max over (n, n0) of sum_i |residue term|, the cancellation magnitude.
  double condition() const;
  double error_bound() const;

  /// P(., t | n0, 0), renormalized.
  DistributionVector from_state(int n0, double t, PropagationInfo* info = nullptr) const;
  /// sum_{n0} q0(n0) P(., t | n0, 0), renormalized.
  DistributionVector evolve(const DistributionVector& q0, double t, PropagationInfo* info = nullptr) const;
  /// Raw entries P(n, t | n0, 0) for (n, n0) pairs; negatives clipped to zero.
  std::vector<double> probabilities(std::span<const std::pair<int, int>> pairs, double t) const;
  double probability(int n, int n0, double t) const;

  struct Impl;

 private:
  std::shared_ptr<const Impl> impl_;
};

DistributionVector transition_probability(const RateTable& rates, const Spectrum& spectrum, int n0, double t);
DistributionVector evolve(const RateTable& rates, const Spectrum& spectrum, const DistributionVector& q0, double t);

/// Chained propagation through a piecewise-constant zeitgeist. `base` supplies
/// every parameter except F.
DistributionVector evolve_piecewise(const ZeitgeistSchedule& schedule, const ModelParams& base,
                                    const RateFamily& family, const DistributionVector& q0, double t);

/// Eigenvector of the generator for its second eigenvalue, normalized to
/// unit Euclidean norm with zero sum.
std::vector<double> second_eigenvector(const RateTable& rates, const Spectrum& spectrum);

/// Two-eigenvalue metastable form P_s + exp(lambda2 t) phi2. lambda2 is the
/// (negative) second eigenvalue; phi2 must sum to zero.
DistributionVector metastable_approximation(const DistributionVector& steady, double lambda2,
                                            std::span<const double> phi2, double t);

/// phi2 scaled by least squares so the metastable form matches the exact
/// solution from q0 at the reference time t* = 5 / |lambda3|.
struct MetastableProfile {
  double lambda2 = 0.0;
  double reference_time = 0.0;
  std::vector<double> phi2;
};
MetastableProfile fit_metastable_profile(const RateTable& rates, const Spectrum& spectrum,
                                         const TransitionKernel& kernel, const DistributionVector& q0);

/// Total variation distance, 0.5 * sum |p - q|.
double total_variation(std::span<const double> p, std::span<const double> q);

}  // namespace bdm
