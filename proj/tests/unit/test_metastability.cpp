#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bdm/error.hpp"
#include "bdm/metastability.hpp"
#include "bdm/model.hpp"
#include "bdm/spectral.hpp"
#include "oracles.hpp"

using namespace bdm;

namespace {

ModelParams params(double F, double J, double beta, int N, double gamma = 1.0, double alpha = 0.0) {
  ModelParams p;
  p.F = F;
  p.J = J;
  p.alpha = alpha;
  p.beta = beta;
  p.gamma = gamma;
  p.N = N;
  return p;
}

RateTable logit(double F, double J, double beta, int N, double gamma = 1.0) {
  return build_rate_table(params(F, J, beta, N, gamma), Logit{});
}

DistributionVector dist(std::vector<double> p) {
  DistributionVector d;
  d.probs = std::move(p);
  return d;
}

}  // namespace

TEST_SUITE("metastability") {

TEST_CASE("equilibria of the F = 0.025, J = 1.5, N = 50 chain") {
  const auto eq = find_equilibria(steady_state(logit(0.025, 1.5, 1, 50)));
  CHECK(eq.n_minus == 3);
  CHECK(eq.n_u == 24);
  CHECK(eq.n_plus == 47);
}

TEST_CASE("monomodal steady state has no metastability") {
  CHECK_THROWS_AS(find_equilibria(steady_state(logit(0, 1.5, 0, 50))), PreconditionError);
  CHECK_THROWS_AS(analyze_metastability(logit(0.5, 0.2, 1, 50)), PreconditionError);
}

TEST_CASE("symmetric bistable chain has n_u = N/2") {
  for (int N : {20, 50, 80}) CHECK(find_equilibria(steady_state(logit(0, 2, 1, N))).n_u == N / 2);
}

TEST_CASE("plateaus report their leftmost index") {
  const auto eq = find_equilibria(dist({0.1, 0.3, 0.3, 0.05, 0.25}));
  CHECK(eq.n_minus == 1);
  CHECK(eq.n_u == 3);
  CHECK(eq.n_plus == 4);
}

TEST_CASE("mode counting") {
  CHECK(count_modes(dist({0.1, 0.3, 0.3, 0.05, 0.25})) == 2);
  CHECK(count_modes(dist({0.1, 0.2, 0.4, 0.2, 0.1})) == 1);
  // A shallow secondary bump disappears under a prominence threshold.
  CHECK(count_modes(dist({0.3, 0.299, 0.3005, 0.1})) == 2);
  CHECK(count_modes(dist({0.3, 0.299, 0.3005, 0.1}), 0.01) == 1);
}

TEST_CASE("MFPT vanishes at n_u and matches the linear recursion system") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uF(-0.3, 0.3), uJ(0.5, 3), uB(0.5, 2);
  for (int N = 3; N <= 30; ++N) {
    const auto rates = logit(uF(rng), uJ(rng), uB(rng), N, 0.5 + N / 30.0);
    for (int n_u : {1, N / 2, N - 1}) {
      if (n_u <= 0 || n_u >= N) continue;
      const auto tau = mfpt_to_unstable(rates, n_u);
      const auto ref = oracle::mfpt_linear(rates, n_u);
      CHECK(tau[n_u] == 0.0);
      for (int n = 0; n <= N; ++n) {
        if (n == n_u) continue;
        CHECK(std::abs(tau[n] - ref[n]) <= 1e-9 * ref[n]);
      }
    }
  }
  CHECK_THROWS_AS(mfpt_to_unstable(logit(0, 1, 1, 10), 0), InvalidArgument);
  CHECK_THROWS_AS(mfpt_to_unstable(logit(0, 1, 1, 10), 10), InvalidArgument);
}

TEST_CASE("MFPT is non-increasing towards the barrier") {
  for (const auto& rates : {logit(0.025, 1.5, 1, 50), logit(0.1, 5, 1, 50), logit(-0.2, 2, 1.5, 40)}) {
    const int n_u = find_equilibria(steady_state(rates)).n_u;
    const auto log_tau = log_mfpt_to_unstable(rates, n_u);
    for (int n = 0; n + 1 < n_u; ++n) CHECK(log_tau[n] >= log_tau[n + 1]);
    for (int n = n_u + 1; n < rates.N; ++n) CHECK(log_tau[n + 1] >= log_tau[n]);
    CHECK(std::isinf(log_tau[n_u]));
  }
}

TEST_CASE("passage times are longer on the favoured side") {
  const auto rates = logit(0.025, 1.5, 1, 50);
  const auto tau = mfpt_to_unstable(rates, 24);
  for (int k = 1; k <= 24; ++k) CHECK(tau[24 + k] > tau[24 - k]);
}

TEST_CASE("mode escape times") {
  SUBCASE("symmetric chain") {
    const auto rates = logit(0, 2, 1, 40);
    const auto steady = steady_state(rates);
    const auto [lr, rl] = mode_escape_times(steady, mfpt_to_unstable(rates, 20), 20);
    CHECK(lr == doctest::Approx(rl).epsilon(1e-10));
  }
  SUBCASE("favoured mode is stickier") {
    const auto rates = logit(0.025, 1.5, 1, 50);
    const auto [lr, rl] = mode_escape_times(steady_state(rates), mfpt_to_unstable(rates, 24), 24);
    CHECK(rl > lr);
  }
  SUBCASE("toy chain against SSA first passage") {
    const auto rates = logit(0.05, 2, 1, 10);
    const auto steady = steady_state(rates);
    const auto eq = find_equilibria(steady);
    const auto [lr, rl] = mode_escape_times(steady, mfpt_to_unstable(rates, eq.n_u), eq.n_u);
    oracle::Gillespie g(rates, 31);
    std::mt19937_64 pick(32);
    for (int side = 0; side < 2; ++side) {
      std::vector<double> w;
      for (int n = 0; n <= 10; ++n) w.push_back((side == 0 ? n < eq.n_u : n > eq.n_u) ? steady.probs[n] : 0.0);
      std::discrete_distribution<int> start(w.begin(), w.end());
      const int runs = 100000;
      double s = 0, s2 = 0;
      for (int i = 0; i < runs; ++i) {
        const double t = g.first_passage(start(pick), eq.n_u);
        s += t;
        s2 += t * t;
      }
      const double mean = s / runs, se = std::sqrt((s2 / runs - mean * mean) / runs);
      CHECK(std::abs(mean - (side == 0 ? lr : rl)) < 3 * se);
    }
  }
}

TEST_CASE("fixation probabilities") {
  SUBCASE("absorbing endpoints and monotonicity") {
    const auto rates = logit(0.025, 1.5, 1, 50);
    const auto phi = fixation_curve(rates, 3, 47);
    CHECK(phi.front() == 0.0);
    CHECK(phi.back() == 1.0);
    for (size_t i = 0; i + 1 < phi.size(); ++i) CHECK(phi[i] <= phi[i + 1]);
    CHECK(fixation_probability(rates, 3, 47, 24) == doctest::Approx(0.534).epsilon(0.005 / 0.534));
    CHECK_THROWS_AS(fixation_probability(rates, 3, 47, 2), InvalidArgument);
  }
  SUBCASE("absorption frequencies of SSA runs") {
    const auto rates = logit(0.1, 1.2, 1, 10);
    oracle::Gillespie g(rates, 5);
    const int runs = 100000;
    for (int i : {3, 5, 7}) {
      int hits = 0;
      for (int k = 0; k < runs; ++k) hits += g.absorbs_high(i, 2, 8) ? 1 : 0;
      const double phi = fixation_probability(rates, 2, 8, i);
      CHECK(std::abs(hits / double(runs) - phi) < 3 * std::sqrt(phi * (1 - phi) / runs));
    }
  }
}

TEST_CASE("relaxation rate") {
  CHECK(relaxation_rate(2.0, 4.0, 0.5) == doctest::Approx(0.5 / 2 + 0.5 / 4));
  CHECK(relaxation_rate(3.0, 3.0, 0.5) == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(relaxation_rate(0.0, 1.0, 0.5), InvalidArgument);

  SUBCASE("N = 50 estimate and its bias against the spectral value") {
    const auto rates = logit(0.025, 1.5, 1, 50);
    const auto report = analyze_metastability(rates);
    const double approx = 1.0 / report.passage.lambda2_approx;
    const double exact = -1.0 / compute_spectrum(rates).lambda2();
    CHECK(approx == doctest::Approx(1279.8).epsilon(0.01));
    CHECK(report.passage.phi_R == doctest::Approx(0.534).epsilon(0.01));
    CHECK(approx <= 1.02 * exact);
    CHECK(approx >= 0.9 * exact);
  }
  SUBCASE("symmetric chain collapses to 1 / tau_lr") {
    const auto report = analyze_metastability(logit(0, 2, 1, 40));
    CHECK(report.passage.phi_R == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(report.passage.lambda2_approx == doctest::Approx(1.0 / report.passage.tau_lr).epsilon(1e-10));
  }
  SUBCASE("N = 20 asymmetric chain within 5% of the spectral rate") {
    const auto rates = logit(0.05, 2, 1, 20);
    const auto report = analyze_metastability(rates);
    CHECK(report.passage.lambda2_approx == doctest::Approx(-compute_spectrum(rates).lambda2()).epsilon(0.05));
  }
}

TEST_CASE("report invariants") {
  const auto report = analyze_metastability(logit(0.1, 5, 1, 50));
  const auto& pr = report.passage;
  CHECK(pr.tau[report.equilibria.n_u] == 0.0);
  for (double t : pr.tau) CHECK(t >= 0.0);
  CHECK(pr.phi_R >= 0.0);
  CHECK(pr.phi_R <= 1.0);
  CHECK(pr.lambda2_approx > 0.0);
  CHECK(report.fixation.front() == 0.0);
  CHECK(report.fixation.back() == 1.0);
  CHECK(static_cast<int>(report.fixation.size()) == report.equilibria.n_plus - report.equilibria.n_minus + 1);
}

TEST_CASE("asymptotic escape times") {
  SUBCASE("symmetric potential gives equal times") {
    const auto a = asymptotic_escape_times(params(0, 2, 3, 40));
    CHECK(a.tau_lr == doctest::Approx(a.tau_rl).epsilon(1e-8));
    CHECK(a.phi_u == doctest::Approx(0.5).epsilon(1e-8));
  }
  SUBCASE("exponents") {
    const auto p = params(0.2, 2, 5, 40, 1.0, 0.5);
    const auto [lr, rl] = asymptotic_escape_exponents(p);
    CHECK(lr == doctest::Approx(40 * (1 - 0.2 / 3.0)));
    CHECK(rl == doctest::Approx(40 * (1 + 0.2 / 3.0)));
    const auto a = asymptotic_escape_times(p);
    CHECK(a.exponent_lr == doctest::Approx(lr));
    CHECK(a.phi_minus < a.phi_u);
    CHECK(a.phi_u < a.phi_plus);
    CHECK(a.tau_rl > a.tau_lr);
  }
  SUBCASE("single-equilibrium regime is rejected") {
    CHECK_THROWS_AS(asymptotic_escape_times(params(0, 1, 0.5, 40)), PreconditionError);
    CHECK_THROWS_AS(asymptotic_escape_times(params(3, 1, 5, 40)), PreconditionError);
  }
  SUBCASE("potential starts at zero") {
    CHECK(escape_potential(params(0.1, 2, 3, 40), 0.0) == 0.0);
    CHECK_THROWS_AS(escape_potential(params(0.1, 2, 3, 40), 1.5), InvalidArgument);
  }
}

}  // TEST_SUITE
