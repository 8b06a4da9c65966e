#include "bdm/metastability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include "bdm/error.hpp"

namespace bdm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void check_rates(const RateTable& rates) {
  if (rates.N < 1 || static_cast<int>(rates.birth.size()) != rates.N + 1 ||
      static_cast<int>(rates.death.size()) != rates.N + 1) {
    throw InvalidArgument("malformed rate table");
  }
}

struct Run {
  int first;
  int last;
  double value;
};

std::vector<Run> plateau_runs(const std::vector<double>& p) {
  std::vector<Run> runs;
  for (int n = 0; n < static_cast<int>(p.size()); ++n) {
    if (!runs.empty() && p[n] == runs.back().value) {
      runs.back().last = n;
    } else {
      runs.push_back({n, n, p[n]});
    }
  }
  return runs;
}

// Indices into `runs` of local maxima (boundaries count as lower ground).
std::vector<int> maxima_runs(const std::vector<Run>& runs) {
  std::vector<int> out;
  const int R = static_cast<int>(runs.size());
  for (int r = 0; r < R; ++r) {
    const bool left = r == 0 || runs[r - 1].value < runs[r].value;
    const bool right = r == R - 1 || runs[r + 1].value < runs[r].value;
    if (left && right) out.push_back(r);
  }
  return out;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::fabs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 50);
}

struct Drift {
  ModelParams p;

  double sigma(double y) const {
    const double f = 2.0 * (p.F + p.J * (p.alpha + 1.0) * (2.0 * y - 1.0));
    const double x = p.beta * f;
    // 1 / (1 + e^x), stable both ways
    return x > 0 ? std::exp(-x) / (1.0 + std::exp(-x)) : 1.0 / (1.0 + std::exp(x));
  }
  double a1(double y) const { return p.gamma * ((1.0 - y) - sigma(y)); }
  double a2(double y) const {
    const double s = sigma(y);
    return p.gamma * ((1.0 - y) * (1.0 - s) + y * s);
  }
  double ratio(double y) const { return a1(y) / a2(y); }
  double ratio_slope(double y) const {
    const double s = sigma(y);
    const double ds = -s * (1.0 - s) * p.beta * 4.0 * p.J * (p.alpha + 1.0);
    const double da1 = p.gamma * (-1.0 - ds);
    const double da2 = p.gamma * ((2.0 * s - 1.0) + ds * (2.0 * y - 1.0));
    const double b = a2(y);
    return (da1 * b - a1(y) * da2) / (b * b);
  }
};

}  // namespace

EquilibriaIndices find_equilibria(const DistributionVector& steady) {
  const auto runs = plateau_runs(steady.probs);
  const auto maxima = maxima_runs(runs);
  if (maxima.size() != 2) {
    throw PreconditionError("no metastability: steady state has " + std::to_string(maxima.size()) +
                            " maxima (needs beta > beta_c and |F| < J (1 + alpha))");
  }
  int lowest = -1;
  for (int r = maxima[0] + 1; r < maxima[1]; ++r) {
    if (lowest < 0 || runs[r].value < runs[lowest].value) lowest = r;
  }
  if (lowest < 0) throw PreconditionError("no metastability: no interior minimum between the modes");
  return {runs[maxima[0]].first, runs[lowest].first, runs[maxima[1]].first};
}

int count_modes(const DistributionVector& dist, double min_relative_prominence) {
  const auto runs = plateau_runs(dist.probs);
  const auto maxima = maxima_runs(runs);
  const int R = static_cast<int>(runs.size());
  int count = 0;
  for (int r : maxima) {
    const double h = runs[r].value;
    // Lowest ground on each side before reaching higher terrain; a side is
    // open when it reaches the boundary without meeting a higher maximum.
    // Ties go to the leftmost peak, so equal twin peaks still share one col.
    double left_min = h;
    bool left_open = true;
    for (int k = r - 1; k >= 0; --k) {
      if (runs[k].value >= h) {
        left_open = false;
        break;
      }
      left_min = std::min(left_min, runs[k].value);
    }
    double right_min = h;
    bool right_open = true;
    for (int k = r + 1; k < R; ++k) {
      if (runs[k].value > h) {
        right_open = false;
        break;
      }
      right_min = std::min(right_min, runs[k].value);
    }
    // Key col: the higher of the two bases, ignoring a side with no higher peak.
    double base;
    if (left_open && right_open) {
      base = std::min(left_min, right_min);
    } else if (left_open) {
      base = right_min;
    } else if (right_open) {
      base = left_min;
    } else {
      base = std::max(left_min, right_min);
    }
    if (h - base >= min_relative_prominence * h) ++count;
  }
  return count;
}

std::vector<double> log_mfpt_to_unstable(const RateTable& rates, int n_u) {
  check_rates(rates);
  const int N = rates.N;
  if (n_u <= 0 || n_u >= N) throw InvalidArgument("n_u must satisfy 0 < n_u < N");
  for (int n = 0; n < N; ++n) {
    if (!(rates.birth[n] > 0.0) || !(rates.death[n + 1] > 0.0)) throw PreconditionError("reducible chain");
  }
  std::vector<double> out(N + 1, kNegInf);
  // Left side: h_i = tau_{i-1} - tau_i > 0, h_1 = 1 / birth[0], h_i = (1 + death[i-1] h_{i-1}) / birth[i-1].
  std::vector<double> log_h(N + 2, kNegInf);
  log_h[1] = -std::log(rates.birth[0]);
  for (int i = 2; i <= n_u; ++i) {
    log_h[i] = log_add(0.0, std::log(rates.death[i - 1]) + log_h[i - 1]) - std::log(rates.birth[i - 1]);
  }
  double acc = kNegInf;
  for (int n = n_u - 1; n >= 0; --n) {
    acc = log_add(acc, log_h[n + 1]);
    out[n] = acc;
  }
  // Right side: g_i = tau_i - tau_{i-1} > 0, g_N = 1 / death[N], g_i = (1 + birth[i] g_{i+1}) / death[i].
  std::vector<double> log_g(N + 2, kNegInf);
  log_g[N] = -std::log(rates.death[N]);
  for (int i = N - 1; i > n_u; --i) {
    log_g[i] = log_add(0.0, std::log(rates.birth[i]) + log_g[i + 1]) - std::log(rates.death[i]);
  }
  acc = kNegInf;
  for (int n = n_u + 1; n <= N; ++n) {
    acc = log_add(acc, log_g[n]);
    out[n] = acc;
  }
  return out;
}

std::vector<double> mfpt_to_unstable(const RateTable& rates, int n_u) {
  auto logs = log_mfpt_to_unstable(rates, n_u);
  for (double& v : logs) v = std::exp(v);
  return logs;
}

std::pair<double, double> mode_escape_times(const DistributionVector& steady, const std::vector<double>& tau,
                                            int n_u) {
  const int N = steady.N();
  if (static_cast<int>(tau.size()) != N + 1) throw InvalidArgument("tau length differs from the steady state");
  if (n_u <= 0 || n_u >= N) throw InvalidArgument("n_u must satisfy 0 < n_u < N");
  double wl = 0.0;
  double sl = 0.0;
  for (int n = 0; n < n_u; ++n) {
    wl += steady.probs[n];
    sl += steady.probs[n] * tau[n];
  }
  double wr = 0.0;
  double sr = 0.0;
  for (int n = n_u + 1; n <= N; ++n) {
    wr += steady.probs[n];
    sr += steady.probs[n] * tau[n];
  }
  if (!(wl > 0.0) || !(wr > 0.0)) throw PreconditionError("a metastable side carries no steady-state mass");
  return {sl / wl, sr / wr};
}

std::vector<double> fixation_curve(const RateTable& rates, int n_minus, int n_plus) {
  check_rates(rates);
  if (n_minus < 0 || n_plus > rates.N || n_minus >= n_plus) {
    throw InvalidArgument("fixation needs 0 <= n_minus < n_plus <= N");
  }
  for (int n = n_minus + 1; n < n_plus; ++n) {
    if (!(rates.birth[n] > 0.0)) throw PreconditionError("zero birth rate inside the fixation window");
  }
  // nu_k = phi_k - phi_{k-1}; nu_{k+1} / nu_k = death[k] / birth[k] for interior k.
  const int L = n_plus - n_minus;
  std::vector<double> log_nu(L + 1, kNegInf);
  log_nu[1] = 0.0;
  for (int j = 2; j <= L; ++j) {
    const int k = n_minus + j - 1;
    log_nu[j] = log_nu[j - 1] + std::log(rates.death[k]) - std::log(rates.birth[k]);
  }
  std::vector<double> log_cum(L + 1, kNegInf);
  for (int j = 1; j <= L; ++j) log_cum[j] = log_add(log_cum[j - 1], log_nu[j]);
  std::vector<double> phi(L + 1, 0.0);
  for (int j = 1; j < L; ++j) phi[j] = std::exp(log_cum[j] - log_cum[L]);
  phi[L] = 1.0;
  return phi;
}

double fixation_probability(const RateTable& rates, int n_minus, int n_plus, int i) {
  if (i < n_minus || i > n_plus) throw InvalidArgument("i outside [n_minus, n_plus]");
  return fixation_curve(rates, n_minus, n_plus)[i - n_minus];
}

double relaxation_rate(double tau_lr, double tau_rl, double phi_R) {
  if (!(tau_lr > 0.0) || !(tau_rl > 0.0)) throw InvalidArgument("escape times must be > 0");
  if (!(phi_R >= 0.0 && phi_R <= 1.0)) throw InvalidArgument("phi_R must lie in [0, 1]");
  return phi_R / tau_lr + (1.0 - phi_R) / tau_rl;
}

MetastabilityReport analyze_metastability(const RateTable& rates) {
  const auto steady = steady_state(rates);
  MetastabilityReport rep;
  rep.equilibria = find_equilibria(steady);
  const auto& eq = rep.equilibria;
  auto& fp = rep.passage;
  fp.log_tau = log_mfpt_to_unstable(rates, eq.n_u);
  fp.tau.resize(fp.log_tau.size());
  for (size_t n = 0; n < fp.tau.size(); ++n) fp.tau[n] = std::exp(fp.log_tau[n]);
  std::tie(fp.tau_lr, fp.tau_rl) = mode_escape_times(steady, fp.tau, eq.n_u);
  rep.fixation = fixation_curve(rates, eq.n_minus, eq.n_plus);
  fp.phi_R = rep.fixation[eq.n_u - eq.n_minus];
  fp.lambda2_approx = relaxation_rate(fp.tau_lr, fp.tau_rl, fp.phi_R);
  return rep;
}

double escape_potential(const ModelParams& params, double y) {
  params.validate();
  if (!(y >= 0.0 && y <= 1.0)) throw InvalidArgument("y must lie in [0, 1]");
  const Drift d{params};
  return -2.0 * params.N * integrate([&](double x) { return d.ratio(x); }, 0.0, y, 1e-10);
}

std::pair<double, double> asymptotic_escape_exponents(const ModelParams& params) {
  params.validate();
  const double coupling = params.J * (1.0 + params.alpha);
  if (!(coupling > 0.0)) throw PreconditionError("J = 0: no bistability");
  if (!(std::fabs(params.F) < coupling)) throw PreconditionError("|F| >= J (1 + alpha): single equilibrium");
  return {params.N * (1.0 - params.F / coupling), params.N * (1.0 + params.F / coupling)};
}

AsymptoticEscape asymptotic_escape_times(const ModelParams& params) {
  const auto [exp_lr, exp_rl] = asymptotic_escape_exponents(params);
  if (!(params.beta > critical_rationality(params))) throw PreconditionError("beta <= beta_c: single equilibrium");
  const Drift d{params};

  // Zeros of a1: stable, unstable, stable.
  constexpr int kGrid = 20000;
  std::vector<double> roots;
  double y_prev = 0.0;
  double a_prev = d.a1(y_prev);
  for (int k = 1; k <= kGrid; ++k) {
    const double y = static_cast<double>(k) / kGrid;
    const double a = d.a1(y);
    if ((a_prev > 0.0) != (a > 0.0)) {
      double lo = y_prev;
      double hi = y;
      for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((d.a1(mid) > 0.0) == (a_prev > 0.0)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    y_prev = y;
    a_prev = a;
  }
  if (roots.size() != 3) throw PreconditionError("drift has " + std::to_string(roots.size()) + " zeros, not 3");

  AsymptoticEscape out;
  out.phi_minus = roots[0];
  out.phi_u = roots[1];
  out.phi_plus = roots[2];
  out.exponent_lr = exp_lr;
  out.exponent_rl = exp_rl;

  const double scale = -2.0 * params.N;
  auto second = [&](double y) { return scale * d.ratio_slope(y); };
  const double c_minus = second(out.phi_minus);
  const double c_u = std::fabs(second(out.phi_u));
  const double c_plus = second(out.phi_plus);
  if (!(c_minus > 0.0) || !(c_plus > 0.0) || !(c_u > 0.0)) throw NumericalError("degenerate potential curvature");
  out.prefactor_lr = 2.0 * std::numbers::pi / std::sqrt(c_minus * c_u);
  out.prefactor_rl = 2.0 * std::numbers::pi / std::sqrt(c_plus * c_u);
  out.log_tau_lr = std::log(out.prefactor_lr) + exp_lr;
  out.log_tau_rl = std::log(out.prefactor_rl) + exp_rl;
  out.tau_lr = std::exp(out.log_tau_lr);
  out.tau_rl = std::exp(out.log_tau_rl);

  auto ratio = [&](double x) { return d.ratio(x); };
  const double phi_u = scale * integrate(ratio, 0.0, out.phi_u, 1e-10);
  out.barrier_lr = phi_u - scale * integrate(ratio, 0.0, out.phi_minus, 1e-10);
  out.barrier_rl = phi_u - scale * integrate(ratio, 0.0, out.phi_plus, 1e-10);
  return out;
}

}  // namespace bdm
