#include "bdm/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>

#include "bdm/detail/bigfloat.hpp"
#include "bdm/detail/signed_log.hpp"
#include "bdm/error.hpp"

namespace bdm {

using detail::BigFloat;
using detail::PrecisionScope;
using detail::SignedLog;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.69314718055994530942;
constexpr double kDegenerateGap = 1e-12;
constexpr double kMaxMassDefect = 1e-6;

void check_rates(const RateTable& rates) {
  if (rates.N < 1) throw InvalidArgument("rate table needs N >= 1");
  if (static_cast<int>(rates.birth.size()) != rates.N + 1 || static_cast<int>(rates.death.size()) != rates.N + 1) {
    throw InvalidArgument("rate table vectors must have length N + 1");
  }
}

void check_irreducible(const RateTable& rates) {
  for (int n = 0; n < rates.N; ++n) {
    if (!(rates.birth[n] > 0.0) || !(rates.death[n + 1] > 0.0)) {
      throw PreconditionError("reducible chain: zero rate between states " + std::to_string(n) + " and " +
                              std::to_string(n + 1));
    }
  }
}

double log_sum_exp(std::span<const double> x) {
  double mx = kNegInf;
  for (double v : x) mx = std::max(mx, v);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

// Neumaier summation of exponent-aligned terms.
double compensated_sum(std::span<const SignedLog> terms) {
  double mx = kNegInf;
  for (const auto& t : terms) {
    if (t.sign != 0) mx = std::max(mx, t.log_mag);
  }
  if (mx == kNegInf) return 0.0;
  double s = 0.0;
  double c = 0.0;
  for (const auto& t : terms) {
    if (t.sign == 0) continue;
    const double x = t.sign * std::exp(t.log_mag - mx);
    const double u = s + x;
    c += std::fabs(s) >= std::fabs(x) ? (s - u) + x : (x - u) + s;
    s = u;
  }
  const double v = s + c;
  if (v == 0.0) return 0.0;
  return std::copysign(std::exp(std::log(std::fabs(v)) + mx), v);
}

double plain_sum(std::span<const BigFloat> terms) {
  BigFloat s(0.0);
  for (const auto& t : terms) s += t;
  return s.to_double();
}

SignedLog exp_term(double lambda, double t) { return SignedLog::from_log(lambda * t, 1); }

// Residue expansion of the transition matrix over the eigenvalues, factored so
// that entry (n, n0) = sum_i E_i(t) * (n >= n0 ? lhi_i(n) rlo_i(n0) : llo_i(n) rhi_i(n0)).
template <class T>
struct Expansion {
  int N = 0;
  std::vector<T> lambda;
  std::vector<double> lambda_d;
  std::vector<T> lhi, rlo, llo, rhi;  // index i * (N + 1) + n
  // Sign/log-magnitude roundings of the four factors (extended precision only),
  // for entries whose own cancellation is mild enough for double sums.
  std::vector<SignedLog> lhi_s, rlo_s, llo_s, rhi_s;
  double log_condition = 0.0;

  double condition() const { return std::exp(std::min(log_condition, 709.0)); }
  int dim() const { return N + 1; }
  const T& at(const std::vector<T>& v, int i, int n) const { return v[static_cast<size_t>(i) * dim() + n]; }
};

template <class T>
Expansion<T> build_expansion(const RateTable& rates, std::vector<T> lambda) {
  const int N = rates.N;
  const int K = N + 1;
  Expansion<T> ex;
  ex.N = N;
  ex.lambda_d.resize(K);
  for (int i = 0; i < K; ++i) ex.lambda_d[i] = lambda[i].to_double();

  std::vector<T> birth, death, coupling;
  birth.reserve(K);
  death.reserve(K);
  for (int n = 0; n <= N; ++n) {
    birth.emplace_back(rates.birth[n]);
    death.emplace_back(rates.death[n]);
  }
  for (int n = 0; n < N; ++n) coupling.push_back(birth[n] * death[n + 1]);

  std::vector<T> cb(K), cd(K);
  cb[0] = T(1.0);
  cd[0] = T(1.0);
  for (int n = 1; n <= N; ++n) {
    cb[n] = cb[n - 1] * birth[n - 1];
    cd[n] = cd[n - 1] * death[n];
  }

  const size_t total = static_cast<size_t>(K) * K;
  ex.lhi.resize(total);
  ex.rlo.resize(total);
  ex.llo.resize(total);
  ex.rhi.resize(total);

  std::vector<T> theta(K + 1), phi(K + 2);
  for (int i = 0; i < K; ++i) {
    const T& z = lambda[i];
    auto shifted = [&](int k) {
      if constexpr (std::is_same_v<T, SignedLog>) {
        return T(ex.lambda_d[i] + rates.birth[k] + rates.death[k]);
      } else {
        return z + birth[k] + death[k];
      }
    };
    // Leading minors theta_k of (zI - A) over rows 0..k-1.
    theta[0] = T(1.0);
    theta[1] = shifted(0);
    for (int k = 2; k <= N; ++k) theta[k] = shifted(k - 1) * theta[k - 1] - coupling[k - 2] * theta[k - 2];
    // Trailing minors phi_k over rows k..N.
    phi[N + 1] = T(1.0);
    phi[N] = shifted(N);
    for (int k = N - 1; k >= 1; --k) phi[k] = shifted(k) * phi[k + 1] - coupling[k] * phi[k + 2];

    T denom(1.0);
    for (int j = 0; j < K; ++j) {
      if (j == i) continue;
      if constexpr (std::is_same_v<T, SignedLog>) {
        denom *= T(ex.lambda_d[i] - ex.lambda_d[j]);
      } else {
        denom *= z - lambda[j];
      }
    }
    const T inv = T(1.0) / denom;

    const size_t row = static_cast<size_t>(i) * K;
    for (int n = 0; n <= N; ++n) {
      ex.lhi[row + n] = cb[n] * phi[n + 1] * inv;
      ex.rlo[row + n] = theta[n] / cb[n];
      ex.llo[row + n] = theta[n] / cd[n] * inv;
      ex.rhi[row + n] = cd[n] * phi[n + 1];
    }
  }
  ex.lambda = std::move(lambda);

  // Largest sum_i |term| over all entries at t = 0: the cancellation the sum has to absorb.
  std::vector<double> lhi(total), rlo(total), llo(total), rhi(total);
  for (size_t k = 0; k < total; ++k) {
    lhi[k] = ex.lhi[k].log_abs();
    rlo[k] = ex.rlo[k].log_abs();
    llo[k] = ex.llo[k].log_abs();
    rhi[k] = ex.rhi[k].log_abs();
  }
  if constexpr (std::is_same_v<T, BigFloat>) {
    auto round = [&](const std::vector<T>& src, const std::vector<double>& logs, std::vector<SignedLog>& dst) {
      dst.resize(total);
      for (size_t k = 0; k < total; ++k) dst[k] = src[k].is_zero() ? SignedLog() : SignedLog::from_log(logs[k], src[k].sign() > 0 ? 1 : -1);
    };
    round(ex.lhi, lhi, ex.lhi_s);
    round(ex.rlo, rlo, ex.rlo_s);
    round(ex.llo, llo, ex.llo_s);
    round(ex.rhi, rhi, ex.rhi_s);
  }
  std::vector<double> logs(K);
  double worst = kNegInf;
  for (int n = 0; n <= N; ++n) {
    for (int n0 = 0; n0 <= N; ++n0) {
      for (int i = 0; i < K; ++i) {
        const size_t r = static_cast<size_t>(i) * K;
        logs[i] = n >= n0 ? lhi[r + n] + rlo[r + n0] : llo[r + n] + rhi[r + n0];
      }
      worst = std::max(worst, log_sum_exp(logs));
    }
  }
  ex.log_condition = worst;
  return ex;
}

// ---- extended-precision eigenvalues of the symmetrized tridiagonal ----

struct SturmProbe {
  int below = 0;  // eigenvalues strictly below x
  BigFloat g;     // p'/p for p(x) = det(T - x I)
  BigFloat l;     // p''/p
};

class TridiagonalSturm {
 public:
  explicit TridiagonalSturm(const MasterOperator& op) : K_(op.dim()) {
    // Diagonal rebuilt exactly from the off-diagonal rates so columns sum to zero at any precision.
    for (int n = 0; n < K_; ++n) {
      BigFloat out(0.0);
      if (n + 1 < K_) out += BigFloat(op.sub[n]);
      if (n > 0) out += BigFloat(op.super[n - 1]);
      diag_.push_back(-out);
    }
    for (int n = 0; n + 1 < K_; ++n) offsq_.push_back(BigFloat(op.sub[n]) * BigFloat(op.super[n]));
  }

  // Ratios q_k = p_k / p_{k-1} of leading minors and their first two
  // derivatives, accumulating g = sum q_k'/q_k and g' = sum (q_k''/q_k - (q_k'/q_k)^2).
  SturmProbe probe(const BigFloat& x) const {
    constexpr mpfr_rnd_t rnd = MPFR_RNDN;
    SturmProbe p;
    BigFloat q, dq(-1.0), ddq(0.0), inv, e_inv, dq_inv, r, tmp, gp;
    mpfr_sub(q.raw(), diag_[0].raw(), x.raw(), rnd);
    if (q.is_zero()) q = tiny();
    if (q.sign() < 0) ++p.below;
    mpfr_ui_div(inv.raw(), 1, q.raw(), rnd);
    mpfr_mul(p.g.raw(), dq.raw(), inv.raw(), rnd);
    mpfr_sqr(gp.raw(), p.g.raw(), rnd);
    mpfr_neg(gp.raw(), gp.raw(), rnd);
    for (int k = 1; k < K_; ++k) {
      mpfr_mul(e_inv.raw(), offsq_[k - 1].raw(), inv.raw(), rnd);
      mpfr_mul(dq_inv.raw(), dq.raw(), inv.raw(), rnd);
      // ddq <- e_inv (ddq inv - 2 dq_inv^2)
      mpfr_mul(ddq.raw(), ddq.raw(), inv.raw(), rnd);
      mpfr_sqr(tmp.raw(), dq_inv.raw(), rnd);
      mpfr_mul_2ui(tmp.raw(), tmp.raw(), 1, rnd);
      mpfr_sub(ddq.raw(), ddq.raw(), tmp.raw(), rnd);
      mpfr_mul(ddq.raw(), ddq.raw(), e_inv.raw(), rnd);
      // dq <- e_inv dq_inv - 1
      mpfr_mul(dq.raw(), e_inv.raw(), dq_inv.raw(), rnd);
      mpfr_sub_ui(dq.raw(), dq.raw(), 1, rnd);
      // q <- d_k - x - e_inv
      mpfr_sub(q.raw(), diag_[k].raw(), x.raw(), rnd);
      mpfr_sub(q.raw(), q.raw(), e_inv.raw(), rnd);
      if (q.is_zero()) q = tiny();
      if (q.sign() < 0) ++p.below;
      mpfr_ui_div(inv.raw(), 1, q.raw(), rnd);
      mpfr_mul(r.raw(), dq.raw(), inv.raw(), rnd);
      mpfr_add(p.g.raw(), p.g.raw(), r.raw(), rnd);
      mpfr_mul(tmp.raw(), ddq.raw(), inv.raw(), rnd);
      mpfr_add(gp.raw(), gp.raw(), tmp.raw(), rnd);
      mpfr_sqr(tmp.raw(), r.raw(), rnd);
      mpfr_sub(gp.raw(), gp.raw(), tmp.raw(), rnd);
    }
    mpfr_sqr(tmp.raw(), p.g.raw(), rnd);
    mpfr_add(p.l.raw(), gp.raw(), tmp.raw(), rnd);
    return p;
  }

  int dim() const { return K_; }

 private:
  static BigFloat tiny() {
    BigFloat t(1.0);
    mpfr_mul_2si(t.raw(), t.raw(), -(PrecisionScope::current() + 64), MPFR_RNDN);
    return t;
  }

  int K_;
  std::vector<BigFloat> diag_;
  std::vector<BigFloat> offsq_;
};

BigFloat pow2(long e) {
  BigFloat t(1.0);
  mpfr_mul_2si(t.raw(), t.raw(), e, MPFR_RNDN);
  return t;
}

BigFloat sqrt(const BigFloat& a) {
  BigFloat r;
  mpfr_sqrt(r.raw(), a.raw(), MPFR_RNDN);
  return r;
}

// Steps to the roots of the local quadratic model 1 + g d + l d^2 / 2 = 0,
// nearest first; falls back to the Newton step when the model has no real root.
std::pair<BigFloat, BigFloat> model_steps(const SturmProbe& p) {
  const BigFloat disc = p.g * p.g - BigFloat(2.0) * p.l;
  if (disc.sign() < 0 || p.l.is_zero()) {
    BigFloat newton = p.g.is_zero() ? BigFloat(0.0) : -(BigFloat(1.0) / p.g);
    return {newton, newton};
  }
  BigFloat den = p.g;
  if (den.sign() >= 0) {
    den += sqrt(disc);
  } else {
    den -= sqrt(disc);
  }
  if (den.is_zero()) return {BigFloat(0.0), BigFloat(0.0)};
  return {-(BigFloat(2.0) / den), -(den / p.l)};
}

// Eigenvalues in descending order, or an empty vector when two of them cannot
// be separated at the current precision.
std::vector<BigFloat> extended_eigenvalues(const MasterOperator& op, std::span<const double> seeds_desc, long bits) {
  const TridiagonalSturm sturm(op);
  const int K = sturm.dim();
  double bound = 0.0;
  for (int n = 0; n < K; ++n) bound = std::max(bound, -2.0 * op.diag[n]);
  bound = bound * 1.5 + 1.0;
  const BigFloat scale(bound);
  const BigFloat resolution = scale * pow2(-(bits - 8));
  const BigFloat half(0.5);
  const int max_iter = 200 + 2 * static_cast<int>(bits);

  // Split points between the double-precision estimates; exact counts come from Sturm sequences.
  std::vector<double> seeds(seeds_desc.rbegin(), seeds_desc.rend());
  std::vector<BigFloat> cuts;
  std::vector<int> counts;
  cuts.emplace_back(-bound);
  counts.push_back(0);
  for (int k = 0; k + 1 < K; ++k) {
    const double mid = 0.5 * (seeds[k] + seeds[k + 1]);
    if (mid > seeds[k] && mid < seeds[k + 1]) {
      BigFloat x(mid);
      const int c = sturm.probe(x).below;
      if (c >= counts.back() && c <= K) {
        cuts.push_back(std::move(x));
        counts.push_back(c);
      }
    }
  }
  cuts.emplace_back(bound);
  counts.push_back(K);

  struct Interval {
    BigFloat lo, hi;
    int clo, chi;
  };
  std::vector<Interval> work;
  for (size_t j = 0; j + 1 < cuts.size(); ++j) {
    if (counts[j + 1] > counts[j]) work.push_back({cuts[j], cuts[j + 1], counts[j], counts[j + 1]});
  }

  auto start_point = [&](const Interval& iv) {
    double s = 0.0;
    for (int k = iv.clo; k < iv.chi; ++k) s += seeds[std::min(k, K - 1)];
    BigFloat x(s / (iv.chi - iv.clo));
    if (!(x > iv.lo && x < iv.hi)) x = (iv.lo + iv.hi) * half;
    return x;
  };

  std::vector<BigFloat> ascending(K);
  while (!work.empty()) {
    Interval iv = std::move(work.back());
    work.pop_back();
    const int inside = iv.chi - iv.clo;
    if (inside <= 0) continue;
    if (iv.hi - iv.lo < resolution) return {};

    BigFloat x = start_point(iv);
    if (inside > 1) {
      // Newton on p' heads for a critical point, which lies between two roots of the cluster.
      bool split = false;
      for (int it = 0; it < max_iter && !split; ++it) {
        const SturmProbe p = sturm.probe(x);
        if (p.below > iv.clo && p.below < iv.chi) {
          work.push_back({iv.lo, x, iv.clo, p.below});
          work.push_back({x, iv.hi, p.below, iv.chi});
          split = true;
          break;
        }
        if (p.below <= iv.clo) {
          iv.lo = x;
        } else {
          iv.hi = x;
        }
        if (iv.hi - iv.lo < resolution) return {};
        BigFloat next = p.l.is_zero() ? (iv.lo + iv.hi) * half : x - p.g / p.l;
        x = (next > iv.lo && next < iv.hi && !(next - x).is_zero()) ? std::move(next) : (iv.lo + iv.hi) * half;
      }
      if (!split) return {};
      continue;
    }

    // Single root: quadratic-model steps safeguarded by the Sturm bracket.
    for (int it = 0; it < max_iter; ++it) {
      const SturmProbe p = sturm.probe(x);
      if (p.below > iv.clo) {
        iv.hi = x;
      } else {
        iv.lo = x;
      }
      auto [near, far] = model_steps(p);
      BigFloat next = x + near;
      // A model root just past a bracket end means that end has already converged.
      if (next <= iv.lo && iv.lo - next < resolution) {
        x = iv.lo;
        break;
      }
      if (next >= iv.hi && next - iv.hi < resolution) {
        x = iv.hi;
        break;
      }
      if (!(next > iv.lo && next < iv.hi)) next = x + far;
      const bool inside_bracket = next > iv.lo && next < iv.hi;
      if (inside_bracket && abs(next - x) < resolution) {
        x = std::move(next);
        break;
      }
      if (iv.hi - iv.lo < resolution) {
        x = (iv.lo + iv.hi) * half;
        break;
      }
      x = inside_bracket ? std::move(next) : (iv.lo + iv.hi) * half;
    }
    ascending[iv.clo] = std::move(x);
  }

  std::vector<BigFloat> out(ascending.rbegin(), ascending.rend());
  out[0] = BigFloat(0.0);
  const BigFloat min_gap = scale * pow2(-(bits - 32));
  for (int k = 0; k + 1 < K; ++k) {
    if (out[k] - out[k + 1] < min_gap) return {};
  }
  return out;
}

double min_relative_gap(const Spectrum& s) {
  const double spread = s.spread();
  if (spread <= 0.0) return 0.0;
  double g = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k + 1 < s.eigenvalues.size(); ++k) g = std::min(g, s.eigenvalues[k] - s.eigenvalues[k + 1]);
  return g / spread;
}

long round_up_bits(double b) { return static_cast<long>(std::ceil(b / 64.0)) * 64; }

// log2 of max/min steady-state probability; the cancellation depth of the
// residue expansion and the eigenvalue splittings both scale with it.
double steady_range_bits(const DistributionVector& steady) {
  double lo = 0.0;
  double hi = kNegInf;
  for (double p : steady.probs) {
    lo = std::min(lo, std::log2(p));
    hi = std::max(hi, std::log2(p));
  }
  return hi - lo;
}

}  // namespace

// ---- operator, steady state and spectrum ----

double MasterOperator::column_sum(int n) const {
  // Outflows first, so the sum cancels diag = -(birth + death) exactly.
  double s = 0.0;
  if (n + 1 < dim()) s += sub[n];
  if (n > 0) s += super[n - 1];
  return s + diag.at(n);
}

double MasterOperator::at(int row, int col) const {
  if (row == col) return diag.at(row);
  if (row == col + 1) return sub.at(col);
  if (col == row + 1) return super.at(row);
  return 0.0;
}

double DistributionVector::total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

double DistributionVector::mean() const {
  double s = 0.0;
  for (size_t n = 0; n < probs.size(); ++n) s += static_cast<double>(n) * probs[n];
  return s;
}

double DistributionVector::variance() const {
  const double mu = mean();
  double s = 0.0;
  for (size_t n = 0; n < probs.size(); ++n) s += (n - mu) * (n - mu) * probs[n];
  return s;
}

void ZeitgeistSchedule::validate() const {
  if (breakpoints.empty()) throw InvalidArgument("schedule needs at least one interval");
  if (breakpoints.size() != values.size()) throw InvalidArgument("schedule needs one F value per interval");
  double prev = 0.0;
  for (double b : breakpoints) {
    if (!(b > prev)) throw InvalidArgument("schedule breakpoints must be strictly increasing and positive");
    prev = b;
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("schedule values must be finite");
  }
}

int ZeitgeistSchedule::interval_at(double t) const {
  for (size_t j = 0; j < breakpoints.size(); ++j) {
    if (t < breakpoints[j]) return static_cast<int>(j);
  }
  return static_cast<int>(breakpoints.size()) - 1;
}

MasterOperator build_master_operator(const RateTable& rates) {
  check_rates(rates);
  MasterOperator op;
  const int N = rates.N;
  op.diag.resize(N + 1);
  op.sub.resize(N);
  op.super.resize(N);
  for (int n = 0; n <= N; ++n) op.diag[n] = -(rates.birth[n] + rates.death[n]);
  for (int n = 0; n < N; ++n) {
    op.sub[n] = rates.birth[n];
    op.super[n] = rates.death[n + 1];
  }
  return op;
}

DistributionVector steady_state(const RateTable& rates) {
  check_rates(rates);
  check_irreducible(rates);
  const int N = rates.N;
  std::vector<double> logw(N + 1, 0.0);
  for (int n = 1; n <= N; ++n) logw[n] = logw[n - 1] + std::log(rates.birth[n - 1]) - std::log(rates.death[n]);
  const double z = log_sum_exp(logw);
  DistributionVector out;
  out.probs.resize(N + 1);
  for (int n = 0; n <= N; ++n) out.probs[n] = std::exp(logw[n] - z);
  return out;
}

namespace {

// Eigenvalues from the double tridiagonal solver, leading one pinned to zero.
Spectrum double_spectrum(const MasterOperator& op) {
  const int K = op.dim();
  Spectrum s;
  if (K == 1) {
    s.eigenvalues = {0.0};
    return s;
  }
  Eigen::VectorXd d(K);
  Eigen::VectorXd e(K - 1);
  for (int n = 0; n < K; ++n) d[n] = op.diag[n];
  for (int n = 0; n + 1 < K; ++n) e[n] = std::sqrt(op.sub[n] * op.super[n]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("tridiagonal eigensolver did not converge");
  const Eigen::VectorXd& ev = solver.eigenvalues();
  s.eigenvalues.assign(ev.data(), ev.data() + K);
  std::sort(s.eigenvalues.begin(), s.eigenvalues.end(), std::greater<>());
  s.raw_lambda1 = s.eigenvalues[0];
  double max_abs = 0.0;
  for (double v : s.eigenvalues) max_abs = std::max(max_abs, std::fabs(v));
  if (std::fabs(s.raw_lambda1) >= 1e-8 * max_abs) {
    throw NumericalError("leading eigenvalue " + std::to_string(s.raw_lambda1) + " is not zero");
  }
  s.eigenvalues[0] = 0.0;
  return s;
}

// Eigenvalues near zero or in near-degenerate pairs carry only absolute double accuracy.
bool needs_refinement(const Spectrum& s) {
  return s.eigenvalues.size() > 2 && (min_relative_gap(s) < kDegenerateGap || s.eigenvalues[1] > -1e-8 * s.spread());
}

}  // namespace

Spectrum compute_spectrum(const MasterOperator& op, const DistributionVector& steady) {
  const int K = op.dim();
  if (steady.N() + 1 != K) throw InvalidArgument("steady state and operator dimensions differ");
  for (double p : steady.probs) {
    if (!(p > 0.0)) throw PreconditionError("steady state has a zero entry: chain is not irreducible");
  }
  Spectrum s = double_spectrum(op);
  // Resolve the poorly conditioned ones with Sturm sequences in extended precision.
  if (needs_refinement(s)) {
    for (long bits = round_up_bits(64.0 + steady_range_bits(steady)); bits <= 16384; bits *= 2) {
      PrecisionScope scope(bits);
      const auto refined = extended_eigenvalues(op, s.eigenvalues, bits);
      if (refined.empty()) continue;
      for (int k = 1; k < K; ++k) s.eigenvalues[k] = refined[k].to_double();
      break;
    }
  }
  return s;
}

Spectrum compute_spectrum(const RateTable& rates) {
  return compute_spectrum(build_master_operator(rates), steady_state(rates));
}

DistributionVector binomial_distribution(int N, double p0) {
  if (N < 1) throw InvalidArgument("N must be >= 1");
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw InvalidArgument("p0 must lie in [0, 1]");
  DistributionVector out;
  out.probs.assign(N + 1, 0.0);
  if (p0 == 0.0 || p0 == 1.0) {
    out.probs[p0 == 0.0 ? 0 : N] = 1.0;
    return out;
  }
  for (int n = 0; n <= N; ++n) {
    const double lw = std::lgamma(N + 1.0) - std::lgamma(n + 1.0) - std::lgamma(N - n + 1.0) + n * std::log(p0) +
                      (N - n) * std::log1p(-p0);
    out.probs[n] = std::exp(lw);
  }
  return out;
}

DistributionVector point_mass(int N, int n0) {
  if (N < 1) throw InvalidArgument("N must be >= 1");
  if (n0 < 0 || n0 > N) throw InvalidArgument("n0 outside [0, N]");
  DistributionVector out;
  out.probs.assign(N + 1, 0.0);
  out.probs[n0] = 1.0;
  return out;
}

// ---- transition kernel ----

struct TransitionKernel::Impl {
  int N = 0;
  long bits = 53;
  double condition = 0.0;
  double error_bound = 0.0;
  double tolerance = 1e-12;
  std::variant<Expansion<SignedLog>, Expansion<BigFloat>> expansion;

  template <class T>
  std::vector<double> column(const Expansion<T>& ex, int n0, double t) const;
  template <class T>
  std::vector<double> mixture(const Expansion<T>& ex, std::span<const double> q0, double t) const;
  template <class T>
  double entry(const Expansion<T>& ex, int n, int n0, double t) const;
};

namespace {

template <class T>
std::vector<T> time_factors(const Expansion<T>& ex, double t) {
  std::vector<T> e;
  e.reserve(ex.dim());
  if constexpr (std::is_same_v<T, SignedLog>) {
    for (double l : ex.lambda_d) e.push_back(exp_term(l, t));
  } else {
    const BigFloat tt(t);
    for (const auto& l : ex.lambda) e.push_back(exp(l * tt));
  }
  return e;
}

template <class T>
double sum_terms(std::span<const T> terms) {
  if constexpr (std::is_same_v<T, SignedLog>) {
    return compensated_sum(terms);
  } else {
    return plain_sum(terms);
  }
}

// Entries of an extended-precision expansion at one time. An entry whose own
// sum of term magnitudes keeps the double rounding error below the tolerance
// is summed from the sign/log roundings; the others in full precision.
class ExtendedEntries {
 public:
  ExtendedEntries(const Expansion<BigFloat>& ex, double t, double tolerance)
      : ex_(ex), e_(time_factors(ex, t)), terms_(ex.dim()) {
    const int K = ex.dim();
    e_s_.reserve(K);
    for (const auto& e : e_) e_s_.push_back(SignedLog::from_log(e.log_abs(), 1));
    log_budget_ = std::log(tolerance) - std::log(4.0 * K) + 52.0 * kLn2;
  }

  double operator()(int n, int n0) {
    const int K = ex_.dim();
    const bool lower = n >= n0;
    const auto& a_s = lower ? ex_.lhi_s : ex_.llo_s;
    const auto& b_s = lower ? ex_.rlo_s : ex_.rhi_s;
    double mx = kNegInf;
    double spread = 0.0;
    for (int i = 0; i < K; ++i) {
      const size_t r = static_cast<size_t>(i) * K;
      const SignedLog& a = a_s[r + n];
      const SignedLog& b = b_s[r + n0];
      terms_[i] = e_s_[i] * a * b;
      if (terms_[i].is_zero()) continue;
      mx = std::max(mx, terms_[i].log_mag);
      spread = std::max(spread, std::fabs(e_s_[i].log_mag) + std::fabs(a.log_mag) + std::fabs(b.log_mag));
    }
    // Each rounded term carries relative error about (2 + spread) 2^-52.
    if (mx + std::log(static_cast<double>(K)) + std::log(2.0 + spread) <= log_budget_) return compensated_sum(terms_);

    const auto& a = lower ? ex_.lhi : ex_.llo;
    const auto& b = lower ? ex_.rlo : ex_.rhi;
    mpfr_set_zero(acc_.raw(), 1);
    for (int i = 0; i < K; ++i) {
      const size_t r = static_cast<size_t>(i) * K;
      mpfr_mul(tmp_.raw(), e_[i].raw(), a[r + n].raw(), MPFR_RNDN);
      mpfr_mul(tmp_.raw(), tmp_.raw(), b[r + n0].raw(), MPFR_RNDN);
      mpfr_add(acc_.raw(), acc_.raw(), tmp_.raw(), MPFR_RNDN);
    }
    return acc_.to_double();
  }

 private:
  const Expansion<BigFloat>& ex_;
  std::vector<BigFloat> e_;
  std::vector<SignedLog> e_s_;
  std::vector<SignedLog> terms_;
  BigFloat acc_;
  BigFloat tmp_;
  double log_budget_ = 0.0;
};

}  // namespace

template <class T>
double TransitionKernel::Impl::entry(const Expansion<T>& ex, int n, int n0, double t) const {
  const auto e = time_factors(ex, t);
  std::vector<T> terms;
  terms.reserve(ex.dim());
  for (int i = 0; i < ex.dim(); ++i) {
    terms.push_back(n >= n0 ? e[i] * ex.at(ex.lhi, i, n) * ex.at(ex.rlo, i, n0)
                            : e[i] * ex.at(ex.llo, i, n) * ex.at(ex.rhi, i, n0));
  }
  return sum_terms<T>(terms);
}

template <class T>
std::vector<double> TransitionKernel::Impl::column(const Expansion<T>& ex, int n0, double t) const {
  const int K = ex.dim();
  if constexpr (std::is_same_v<T, BigFloat>) {
    ExtendedEntries entries(ex, t, tolerance);
    std::vector<double> out(K);
    for (int n = 0; n < K; ++n) out[n] = entries(n, n0);
    return out;
  }
  const auto e = time_factors(ex, t);
  std::vector<T> lo_w(K), hi_w(K);
  for (int i = 0; i < K; ++i) {
    lo_w[i] = e[i] * ex.at(ex.rlo, i, n0);
    hi_w[i] = e[i] * ex.at(ex.rhi, i, n0);
  }
  std::vector<double> out(K);
  std::vector<T> terms(K);
  for (int n = 0; n < K; ++n) {
    for (int i = 0; i < K; ++i) terms[i] = n >= n0 ? ex.at(ex.lhi, i, n) * lo_w[i] : ex.at(ex.llo, i, n) * hi_w[i];
    out[n] = sum_terms<T>(terms);
  }
  return out;
}

template <class T>
std::vector<double> TransitionKernel::Impl::mixture(const Expansion<T>& ex, std::span<const double> q0,
                                                    double t) const {
  const auto e = time_factors(ex, t);
  const int K = ex.dim();
  std::vector<double> out(K);
  // lower[i] = E_i sum_{n0 <= n} q0 rlo_i(n0); upper[i] = E_i sum_{n0 > n} q0 rhi_i(n0).
  std::vector<std::vector<T>> upper(K, std::vector<T>(K));
  for (int i = 0; i < K; ++i) {
    T acc(0.0);
    for (int n = K - 1; n >= 0; --n) {
      upper[n][i] = acc * e[i];
      if (q0[n] != 0.0) acc += T(q0[n]) * ex.at(ex.rhi, i, n);
    }
  }
  std::vector<T> lower(K, T(0.0));
  std::vector<T> terms(2 * K);
  for (int n = 0; n < K; ++n) {
    if (q0[n] != 0.0) {
      for (int i = 0; i < K; ++i) lower[i] += T(q0[n]) * ex.at(ex.rlo, i, n);
    }
    for (int i = 0; i < K; ++i) {
      terms[2 * i] = ex.at(ex.lhi, i, n) * lower[i] * e[i];
      terms[2 * i + 1] = ex.at(ex.llo, i, n) * upper[n][i];
    }
    out[n] = sum_terms<T>(terms);
  }
  return out;
}

namespace {

std::shared_ptr<TransitionKernel::Impl> make_impl(const RateTable& rates, const Spectrum& spectrum,
                                                  const KernelOptions& options, bool seeds_only = false) {
  auto impl = std::make_shared<TransitionKernel::Impl>();
  impl->N = rates.N;
  impl->tolerance = options.tolerance;
  const int K = rates.N + 1;
  const double growth = 4.0 * K / options.tolerance;

  long next_bits = options.min_precision_bits > 53 ? options.min_precision_bits : 0;
  if (next_bits == 0) {
    if (!seeds_only && min_relative_gap(spectrum) >= kDegenerateGap) {
      auto ex = build_expansion<SignedLog>(rates, std::vector<SignedLog>(spectrum.eigenvalues.begin(),
                                                                         spectrum.eigenvalues.end()));
      const double log2_bound = -53.0 + ex.log_condition / kLn2 + std::log2(4.0 * K);
      const double bound = std::exp2(log2_bound);
      if (log2_bound <= std::log2(options.tolerance)) {
        impl->bits = 53;
        impl->condition = ex.condition();
        impl->error_bound = bound;
        impl->expansion = std::move(ex);
        return impl;
      }
      next_bits = round_up_bits(64.0 + std::max(ex.log_condition / kLn2, 0.0) + std::log2(growth));
    }
    next_bits = std::max(next_bits, round_up_bits(64.0 + steady_range_bits(steady_state(rates)) + std::log2(growth)));
  }

  long bits = std::max<long>(next_bits, 128);
  while (true) {
    bits = std::min<long>(bits, options.max_precision_bits);
    PrecisionScope scope(bits);
    auto lambda = extended_eigenvalues(build_master_operator(rates), spectrum.eigenvalues, bits);
    if (!lambda.empty()) {
      auto ex = build_expansion<BigFloat>(rates, std::move(lambda));
      const double log2_bound = -static_cast<double>(bits) + ex.log_condition / kLn2 + std::log2(4.0 * K);
      const double bound = std::exp2(log2_bound);
      if (log2_bound <= std::log2(options.tolerance)) {
        impl->bits = bits;
        impl->condition = ex.condition();
        impl->error_bound = bound;
        impl->expansion = std::move(ex);
        return impl;
      }
      if (bits < options.max_precision_bits) {
        bits = std::max(bits * 3 / 2, round_up_bits(64.0 + std::max(ex.log_condition / kLn2, 0.0) + std::log2(growth)));
        continue;
      }
    } else if (bits < options.max_precision_bits) {
      bits *= 2;
      continue;
    }
    throw NumericalError("transition kernel cannot reach tolerance within " + std::to_string(options.max_precision_bits) +
                         " bits");
  }
}

DistributionVector finish(std::vector<double> raw, double t, const TransitionKernel::Impl& impl,
                          PropagationInfo* info) {
  double total = 0.0;
  double negative = 0.0;
  for (double v : raw) total += v;
  const double defect = std::fabs(total - 1.0);
  if (!(defect < kMaxMassDefect)) {
    throw NumericalError("propagated mass defect " + std::to_string(defect) + " exceeds 1e-6");
  }
  double kept = 0.0;
  for (double& v : raw) {
    if (v < 0.0) {
      negative -= v;
      v = 0.0;
    }
    kept += v;
  }
  if (!(negative < kMaxMassDefect)) {
    throw NumericalError("clipped negative mass " + std::to_string(negative) + " exceeds 1e-6");
  }
  for (double& v : raw) v /= kept;
  if (info) {
    info->precision_bits = static_cast<int>(impl.bits);
    info->mass_defect = defect;
    info->negative_mass = negative;
    info->error_bound = impl.error_bound;
  }
  DistributionVector out;
  out.probs = std::move(raw);
  out.time = t;
  return out;
}

void check_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("time must be finite and >= 0");
}

}  // namespace

TransitionKernel::TransitionKernel(const RateTable& rates, const Spectrum& spectrum, KernelOptions options) {
  check_rates(rates);
  check_irreducible(rates);
  if (static_cast<int>(spectrum.eigenvalues.size()) != rates.N + 1) {
    throw InvalidArgument("spectrum does not match the rate table");
  }
  if (!(options.tolerance > 0.0)) throw InvalidArgument("kernel tolerance must be > 0");
  impl_ = make_impl(rates, spectrum, options);
}

TransitionKernel::TransitionKernel(const RateTable& rates, KernelOptions options) {
  check_rates(rates);
  check_irreducible(rates);
  if (!(options.tolerance > 0.0)) throw InvalidArgument("kernel tolerance must be > 0");
  const Spectrum seeds = double_spectrum(build_master_operator(rates));
  impl_ = make_impl(rates, seeds, options, needs_refinement(seeds));
}

int TransitionKernel::N() const { return impl_->N; }
int TransitionKernel::precision_bits() const { return static_cast<int>(impl_->bits); }
double TransitionKernel::condition() const { return impl_->condition; }
double TransitionKernel::error_bound() const { return impl_->error_bound; }

DistributionVector TransitionKernel::from_state(int n0, double t, PropagationInfo* info) const {
  check_time(t);
  if (n0 < 0 || n0 > impl_->N) throw InvalidArgument("n0 outside [0, N]");
  if (t == 0.0) {
    if (info) *info = PropagationInfo{};
    return point_mass(impl_->N, n0);
  }
  PrecisionScope scope(impl_->bits);
  auto raw = std::visit([&](const auto& ex) { return impl_->column(ex, n0, t); }, impl_->expansion);
  return finish(std::move(raw), t, *impl_, info);
}

DistributionVector TransitionKernel::evolve(const DistributionVector& q0, double t, PropagationInfo* info) const {
  check_time(t);
  if (q0.N() != impl_->N) throw InvalidArgument("initial distribution has the wrong length");
  for (double p : q0.probs) {
    if (!(p >= 0.0)) throw InvalidArgument("initial distribution has a negative entry");
  }
  if (std::fabs(q0.total() - 1.0) > 1e-10) throw InvalidArgument("initial distribution is not normalized");
  if (t == 0.0) {
    if (info) *info = PropagationInfo{};
    return q0;
  }
  PrecisionScope scope(impl_->bits);
  auto raw = std::visit([&](const auto& ex) { return impl_->mixture(ex, q0.probs, t); }, impl_->expansion);
  auto out = finish(std::move(raw), t, *impl_, info);
  out.time = q0.time + t;
  return out;
}

std::vector<double> TransitionKernel::probabilities(std::span<const std::pair<int, int>> pairs, double t) const {
  check_time(t);
  PrecisionScope scope(impl_->bits);
  std::vector<double> out;
  out.reserve(pairs.size());
  std::visit(
      [&](const auto& ex) {
        using T = std::decay_t<decltype(ex.lambda[0])>;
        if constexpr (std::is_same_v<T, BigFloat>) {
          ExtendedEntries entries(ex, t, impl_->tolerance);
          for (const auto& [n, n0] : pairs) {
            if (n < 0 || n > impl_->N || n0 < 0 || n0 > impl_->N) throw InvalidArgument("state outside [0, N]");
            out.push_back(std::max(0.0, entries(n, n0)));
          }
          return;
        }
        const auto e = time_factors(ex, t);
        std::vector<T> terms(ex.dim());
        for (const auto& [n, n0] : pairs) {
          if (n < 0 || n > impl_->N || n0 < 0 || n0 > impl_->N) throw InvalidArgument("state outside [0, N]");
          for (int i = 0; i < ex.dim(); ++i) {
            terms[i] = n >= n0 ? e[i] * ex.at(ex.lhi, i, n) * ex.at(ex.rlo, i, n0)
                               : e[i] * ex.at(ex.llo, i, n) * ex.at(ex.rhi, i, n0);
          }
          out.push_back(std::max(0.0, sum_terms<T>(terms)));
        }
      },
      impl_->expansion);
  return out;
}

double TransitionKernel::probability(int n, int n0, double t) const {
  const std::pair<int, int> p{n, n0};
  return probabilities(std::span<const std::pair<int, int>>(&p, 1), t)[0];
}

DistributionVector transition_probability(const RateTable& rates, const Spectrum& spectrum, int n0, double t) {
  return TransitionKernel(rates, spectrum).from_state(n0, t);
}

DistributionVector evolve(const RateTable& rates, const Spectrum& spectrum, const DistributionVector& q0, double t) {
  return TransitionKernel(rates, spectrum).evolve(q0, t);
}

DistributionVector evolve_piecewise(const ZeitgeistSchedule& schedule, const ModelParams& base,
                                    const RateFamily& family, const DistributionVector& q0, double t) {
  schedule.validate();
  check_time(t);
  if (t > schedule.end()) throw InvalidArgument("time lies beyond the last schedule breakpoint");
  DistributionVector q = q0;
  q.time = 0.0;
  double start = 0.0;
  for (size_t j = 0; j < schedule.breakpoints.size() && start < t; ++j) {
    const double stop = std::min(t, schedule.breakpoints[j]);
    ModelParams p = base;
    p.F = schedule.values[j];
    const auto rates = build_rate_table(p, family);
    const TransitionKernel kernel(rates, compute_spectrum(rates));
    q = kernel.evolve(q, stop - start);
    start = stop;
  }
  q.time = t;
  return q;
}

std::vector<double> second_eigenvector(const RateTable& rates, const Spectrum& spectrum) {
  const auto steady = steady_state(rates);
  const auto op = build_master_operator(rates);
  const int K = op.dim();
  if (K < 2) throw InvalidArgument("second eigenvector needs N >= 1");
  Eigen::VectorXd d(K);
  Eigen::VectorXd e(K - 1);
  for (int n = 0; n < K; ++n) d[n] = op.diag[n];
  for (int n = 0; n + 1 < K; ++n) e[n] = std::sqrt(op.sub[n] * op.super[n]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("tridiagonal eigensolver did not converge");
  // Eigen sorts ascending: the second largest sits at K - 2.
  (void)spectrum;
  const Eigen::VectorXd u = solver.eigenvectors().col(K - 2);
  // Undo the symmetrization: generator eigenvector = sqrt(P_s) * u.
  std::vector<double> v(K);
  for (int n = 0; n < K; ++n) v[n] = std::sqrt(steady.probs[n]) * u[n];
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (int n = 0; n < K; ++n) v[n] -= s * steady.probs[n];
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw NumericalError("second eigenvector vanished");
  // Fix the sign: positive on the right-hand side.
  double tilt = 0.0;
  for (int n = 0; n < K; ++n) tilt += (n - 0.5 * (K - 1)) * v[n];
  const double sign = tilt < 0.0 ? -1.0 : 1.0;
  for (double& x : v) x *= sign / norm;
  return v;
}

DistributionVector metastable_approximation(const DistributionVector& steady, double lambda2,
                                            std::span<const double> phi2, double t) {
  if (!(lambda2 < 0.0)) throw InvalidArgument("lambda2 must be negative");
  check_time(t);
  if (phi2.size() != steady.probs.size()) throw InvalidArgument("phi2 length differs from the steady state");
  double sum = 0.0;
  double scale = 0.0;
  for (double x : phi2) {
    sum += x;
    scale += std::fabs(x);
  }
  if (std::fabs(sum) > 1e-8 * std::max(scale, 1.0)) throw InvalidArgument("phi2 must sum to zero");
  const double decay = std::exp(lambda2 * t);
  DistributionVector out;
  out.time = t;
  out.probs.resize(steady.probs.size());
  double total = 0.0;
  for (size_t n = 0; n < out.probs.size(); ++n) {
    out.probs[n] = std::max(0.0, steady.probs[n] + decay * phi2[n]);
    total += out.probs[n];
  }
  for (double& p : out.probs) p /= total;
  return out;
}

MetastableProfile fit_metastable_profile(const RateTable& rates, const Spectrum& spectrum,
                                         const TransitionKernel& kernel, const DistributionVector& q0) {
  if (spectrum.eigenvalues.size() < 3) throw PreconditionError("metastable profile needs at least three eigenvalues");
  MetastableProfile prof;
  prof.lambda2 = spectrum.eigenvalues[1];
  prof.reference_time = 5.0 / std::fabs(spectrum.eigenvalues[2]);
  const auto steady = steady_state(rates);
  const auto v = second_eigenvector(rates, spectrum);
  const auto exact = kernel.evolve(q0, prof.reference_time);
  double rv = 0.0;
  double vv = 0.0;
  for (size_t n = 0; n < v.size(); ++n) {
    rv += (exact.probs[n] - steady.probs[n]) * v[n];
    vv += v[n] * v[n];
  }
  const double c = rv / (vv * std::exp(prof.lambda2 * prof.reference_time));
  prof.phi2.resize(v.size());
  for (size_t n = 0; n < v.size(); ++n) prof.phi2[n] = c * v[n];
  return prof;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidArgument("distributions have different lengths");
  double s = 0.0;
  for (size_t n = 0; n < p.size(); ++n) s += std::fabs(p[n] - q[n]);
  return 0.5 * s;
}

}  // namespace bdm
