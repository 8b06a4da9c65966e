#pragma once

// Independent reference computations used by the tests: dense generators,
// matrix exponentials, dense eigen and null-space solves, linear MFPT
// systems and a minimal Gillespie loop that shares no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "bdm/model.hpp"

namespace oracle {

inline Eigen::MatrixXd dense_generator(const bdm::RateTable& rates) {
  const int d = rates.N + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  for (int n = 0; n <= rates.N; ++n) {
    if (n < rates.N) {
      A(n + 1, n) += rates.birth[n];
      A(n, n) -= rates.birth[n];
    }
    if (n > 0) {
      A(n - 1, n) += rates.death[n];
      A(n, n) -= rates.death[n];
    }
  }
  return A;
}

/// exp(A t) q0 by Eigen's scaling-and-squaring Pade exponential.
inline std::vector<double> expm_propagate(const bdm::RateTable& rates, const std::vector<double>& q0, double t) {
  const Eigen::MatrixXd A = dense_generator(rates);
  const Eigen::MatrixXd P = (A * t).exp();
  const Eigen::VectorXd q = P * Eigen::Map<const Eigen::VectorXd>(q0.data(), q0.size());
  return {q.data(), q.data() + q.size()};
}

/// Real parts of the eigenvalues of the raw (non-symmetric) generator, descending.
inline std::vector<double> dense_eigenvalues(const bdm::RateTable& rates) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(dense_generator(rates), false);
  std::vector<double> ev;
  for (int i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(es.eigenvalues()[i].real());
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

/// Normalized kernel vector of the generator.
inline std::vector<double> null_space(const bdm::RateTable& rates) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense_generator(rates), Eigen::ComputeFullV);
  Eigen::VectorXd v = svd.matrixV().col(svd.matrixV().cols() - 1);
  v /= v.sum();
  return {v.data(), v.data() + v.size()};
}

/// Mean first passage time to n_u from the backward equation
/// birth[n](tau[n+1] - tau[n]) + death[n](tau[n-1] - tau[n]) = -1, solved by
/// tridiagonal elimination on each side of n_u.
inline std::vector<double> mfpt_linear(const bdm::RateTable& rates, int n_u) {
  // Quad precision: the system's condition number grows like tau itself.
  using Q = __float128;
  const int N = rates.N;
  std::vector<double> tau(N + 1, 0.0);
  auto solve = [&](int lo, int hi) {
    const int d = hi - lo + 1;
    if (d <= 0) return;
    std::vector<Q> sub(d), diag(d), sup(d), rhs(d, Q(-1));
    for (int n = lo; n <= hi; ++n) {
      const int i = n - lo;
      const Q up = n < N ? Q(rates.birth[n]) : Q(0);
      const Q down = n > 0 ? Q(rates.death[n]) : Q(0);
      diag[i] = -(up + down);
      sup[i] = n + 1 <= hi ? up : Q(0);
      sub[i] = n - 1 >= lo ? down : Q(0);
    }
    // Diagonally dominant, so elimination without pivoting is stable.
    for (int i = 1; i < d; ++i) {
      const Q w = sub[i] / diag[i - 1];
      diag[i] -= w * sup[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    std::vector<Q> x(d);
    x[d - 1] = rhs[d - 1] / diag[d - 1];
    for (int i = d - 2; i >= 0; --i) x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
    for (int i = 0; i < d; ++i) tau[lo + i] = static_cast<double>(x[i]);
  };
  solve(0, n_u - 1);
  solve(n_u + 1, N);
  return tau;
}

/// Gillespie direct method with its own generator.
class Gillespie {
 public:
  Gillespie(const bdm::RateTable& rates, std::uint64_t seed) : rates_(rates), rng_(seed) {}

  /// Advances one jump; returns the waiting time, or +inf if the state is absorbing.
  double step(int& n) {
    const double up = n < rates_.N ? rates_.birth[n] : 0.0;
    const double down = n > 0 ? rates_.death[n] : 0.0;
    const double total = up + down;
    if (total <= 0) return INFINITY;
    const double wait = std::exponential_distribution<double>(total)(rng_);
    n += std::uniform_real_distribution<double>(0.0, total)(rng_) < up ? 1 : -1;
    return wait;
  }

  double first_passage(int from, int target) {
    int n = from;
    double t = 0;
    while (n != target) t += step(n);
    return t;
  }

  /// True when the walk from i hits hi before lo.
  bool absorbs_high(int i, int lo, int hi) {
    int n = i;
    while (n != lo && n != hi) step(n);
    return n == hi;
  }

  /// State at time t starting from n0.
  int state_at(int n0, double t) {
    int n = n0;
    double clock = 0;
    for (;;) {
      int next = n;
      const double wait = step(next);
      if (clock + wait > t) return n;
      clock += wait;
      n = next;
    }
  }

 private:
  const bdm::RateTable& rates_;
  std::mt19937_64 rng_;
};

inline double tv(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace oracle
