#include <doctest.h>

#include <cmath>
#include <vector>

#include "bdm/error.hpp"
#include "bdm/metastability.hpp"
#include "bdm/model.hpp"
#include "bdm/spectral.hpp"

using namespace bdm;

namespace {

ModelParams params(double F, double J, double alpha, double beta, int N, double gamma = 1.0) {
  ModelParams p;
  p.F = F;
  p.J = J;
  p.alpha = alpha;
  p.beta = beta;
  p.gamma = gamma;
  p.N = N;
  return p;
}

// Utility of one agent with decision s at state n, S_i (F + J m(n)).
double utility(const ModelParams& p, int s, int n) { return s * (p.F + p.J * order_parameter(n, p.N)); }

// Global utility, the sum of all individual utilities.
double global_utility(const ModelParams& p, int n) {
  const double m = order_parameter(n, p.N);
  return p.N * m * (p.F + p.J * m);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("order parameter boundaries and midpoint") {
  CHECK(order_parameter(100, 100) == 1.0);
  CHECK(order_parameter(0, 100) == -1.0);
  CHECK(order_parameter(50, 100) == 0.0);
  CHECK(order_parameter(3, 7) == doctest::Approx(-1.0 / 7));
  CHECK_THROWS_AS(order_parameter(-1, 10), InvalidArgument);
  CHECK_THROWS_AS(order_parameter(11, 10), InvalidArgument);
}

TEST_CASE("parameter validation") {
  CHECK_NOTHROW(params(0.1, 1, 0.5, 1, 10).validate());
  CHECK_THROWS_AS(params(0, 1, 1.5, 1, 10).validate(), InvalidArgument);
  CHECK_THROWS_AS(params(0, 1, 0, -1, 10).validate(), InvalidArgument);
  CHECK_THROWS_AS(params(0, 1, 0, 1, 10, 0.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(params(0, 1, 0, 1, 0).validate(), InvalidArgument);
  CHECK_THROWS_AS(params(0, -1, 0, 1, 10).validate(), InvalidArgument);
}

TEST_CASE("gain at the symmetric midpoint is the self-interaction term") {
  const auto p = params(0, 2.0, 0, 1, 100);
  CHECK(gain(p, +1, 50) == doctest::Approx(2 * 2.0 / 100));
  CHECK(gain(p, -1, 50) == doctest::Approx(2 * 2.0 / 100));
}

TEST_CASE("selfish gain equals the individual utility change") {
  const auto p = params(0.3, 1.7, 0, 1, 25);
  for (int n = 0; n <= p.N; ++n) {
    for (int s : {-1, 1}) {
      if ((s == 1 && n == 0) || (s == -1 && n == p.N)) continue;
      const double dU = utility(p, -s, n - s) - utility(p, s, n);
      CHECK(gain(p, s, n) == doctest::Approx(dU).epsilon(1e-13));
      const double I = p.F + p.J * order_parameter(n, p.N);
      CHECK(gain(p, s, n) == doctest::Approx(-2 * s * I + 2 * p.J / p.N).epsilon(1e-13));
    }
  }
}

TEST_CASE("altruistic gain equals the global utility change") {
  auto p = params(0.3, 1.7, 1.0, 1, 25);
  auto selfish = p;
  selfish.alpha = 0;
  for (int n = 0; n <= p.N; ++n) {
    for (int s : {-1, 1}) {
      if ((s == 1 && n == 0) || (s == -1 && n == p.N)) continue;
      const double dA = global_utility(selfish, n - s) - global_utility(selfish, n);
      CHECK(gain(p, s, n) == doctest::Approx(dA).epsilon(1e-12));
    }
  }
}

TEST_CASE("gain by hand at alpha=1, F=1, J=1, N=100, n=75, s=+1") {
  // m = 0.5: -2 (1 + 0.5 * 2) + 2 * 2 / 100 = -4 + 0.04
  CHECK(gain(params(1, 1, 1, 1, 100), +1, 75) == doctest::Approx(-3.96).epsilon(1e-14));
}

TEST_CASE("gain rejects flips by absent agents") {
  const auto p = params(0, 1, 0, 1, 10);
  CHECK_THROWS_AS(gain(p, +1, 0), InvalidArgument);
  CHECK_THROWS_AS(gain(p, -1, 10), InvalidArgument);
  CHECK_THROWS_AS(gain(p, 0, 5), InvalidArgument);
}

TEST_CASE("logit rates at zero rationality are gamma/2") {
  const auto p = params(0.7, 3, 0.2, 0, 20, 1.6);
  for (int n = 0; n <= p.N; ++n) {
    const auto [r, l] = per_agent_rates(p, Logit{}, n);
    CHECK(r == doctest::Approx(0.8));
    CHECK(l == doctest::Approx(0.8));
  }
  const auto t = build_rate_table(p, Logit{});
  for (int n = 0; n <= p.N; ++n) {
    CHECK(t.birth[n] == doctest::Approx((p.N - n) * 0.8));
    CHECK(t.death[n] == doctest::Approx(n * 0.8));
  }
}

TEST_CASE("logit rates in the rational limit follow the sign of the gain") {
  const auto p = params(0.5, 0, 0, 1e4, 10, 2.0);
  const auto [r, l] = per_agent_rates(p, Logit{}, 5);
  CHECK(r == doctest::Approx(2.0));  // joining the right side gains utility
  CHECK(l < 1e-300);
}

TEST_CASE("Kirman rates") {
  const auto p = params(0, 0, 0, 0, 10);
  const auto [r0, l0] = per_agent_rates(p, Kirman{0.3, 0.0}, 4);
  CHECK(r0 == 0.3);
  CHECK(l0 == 0.3);
  const auto [r, l] = per_agent_rates(p, Kirman{0.1, 0.9}, 4);
  CHECK(r == doctest::Approx(0.1 + 0.9 * 4 / 9.0));
  CHECK(l == doctest::Approx(0.1 + 0.9 * 6 / 9.0));
  CHECK_THROWS_AS(per_agent_rates(params(0, 0, 0, 0, 1), Kirman{0.1, 0.1}, 0), InvalidArgument);
  CHECK_THROWS_AS(build_rate_table(p, Kirman{0.0, 0.1}), InvalidArgument);
}

TEST_CASE("Arrhenius rates satisfy the same detailed balance as logit") {
  const auto p = params(0.2, 1.3, 0.4, 0.9, 12, 0.7);
  const auto t = build_rate_table(p, Arrhenius{});
  for (int n = 0; n < p.N; ++n) {
    const double rn = t.birth[n] / (p.N - n);
    const double ln1 = t.death[n + 1] / (n + 1);
    CHECK(rn / ln1 == doctest::Approx(std::exp(p.beta * gain(p, -1, n))).epsilon(1e-12));
  }
}

TEST_CASE("detailed balance ratio of logit rates") {
  for (double alpha : {0.0, 0.35, 1.0}) {
    const auto p = params(-0.4, 2.1, alpha, 1.3, 30);
    for (int n = 0; n < p.N; ++n) {
      const double w_up = per_agent_rates(p, Logit{}, n).first;       // left agent flips at n
      const double w_back = per_agent_rates(p, Logit{}, n + 1).second;  // it flips back at n+1
      CHECK(w_up / w_back == doctest::Approx(std::exp(p.beta * gain(p, -1, n))).epsilon(1e-12));
    }
  }
}

TEST_CASE("mirror symmetry at F = 0") {
  const auto p = params(0, 2.5, 0.3, 1.2, 31);
  for (const RateFamily& fam : {RateFamily{Logit{}}, RateFamily{Kirman{0.2, 0.6}}}) {
    const auto t = build_rate_table(p, fam);
    for (int n = 0; n <= p.N; ++n) CHECK(t.birth[n] == t.death[p.N - n]);
  }
}

TEST_CASE("rate table layout and 1-based accessors") {
  const auto t = build_rate_table(params(0.1, 1, 0, 1, 8), Logit{});
  CHECK(t.birth.size() == 9);
  CHECK(t.death.size() == 9);
  CHECK(t.birth[8] == 0.0);
  CHECK(t.death[0] == 0.0);
  for (int n = 1; n <= 8; ++n) CHECK(t.a(n) == t.birth[n - 1]);
  for (int n = 0; n < 8; ++n) CHECK(t.b(n) == t.death[n + 1]);
}

TEST_CASE("hamiltonian differences equal the gain") {
  const auto p = params(0.15, 1.1, 0.6, 1, 40);
  CHECK(hamiltonian(p, 20) == 0.0);
  for (int n = 0; n <= p.N; ++n) {
    if (n < p.N) CHECK(hamiltonian(p, n + 1) - hamiltonian(p, n) == doctest::Approx(gain(p, -1, n)).epsilon(1e-12));
    if (n > 0) CHECK(hamiltonian(p, n - 1) - hamiltonian(p, n) == doctest::Approx(gain(p, +1, n)).epsilon(1e-12));
  }
}

TEST_CASE("Boltzmann weights times degeneracy give the steady state") {
  const auto p = params(0.2, 1.4, 0.5, 1.1, 10);
  const auto steady = steady_state(build_rate_table(p, Logit{}));
  std::vector<double> w(p.N + 1);
  double z = 0;
  for (int n = 0; n <= p.N; ++n) {
    w[n] = std::exp(std::lgamma(p.N + 1.0) - std::lgamma(n + 1.0) - std::lgamma(p.N - n + 1.0) +
                    p.beta * hamiltonian(p, n));
    z += w[n];
  }
  for (int n = 0; n <= p.N; ++n) CHECK(steady.probs[n] == doctest::Approx(w[n] / z).epsilon(1e-12));
}

TEST_CASE("critical rationality") {
  CHECK(critical_rationality(params(0, 1, 0, 1, 10)) == 1.0);
  CHECK(critical_rationality(params(0, 1, 1, 1, 10)) == 0.5);
  CHECK(critical_rationality(params(0, 10, 0, 1, 10)) == doctest::Approx(0.1));
  CHECK_THROWS_AS(critical_rationality(params(0, 0, 0, 1, 10)), PreconditionError);
}

TEST_CASE("mean-field equilibria: subcritical symmetric case has one root") {
  for (double beta : {0.0, 0.5, 0.99}) {
    const auto eq = mean_field_equilibria(params(0, 1, 0, beta, 100));
    REQUIRE(eq.count() == 1);
    CHECK(eq.roots[0].m == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(eq.roots[0].stable);
  }
}

TEST_CASE("mean-field equilibria: supercritical case has three roots") {
  const auto p = params(0, 1, 0, 1.1, 100);
  const auto eq = mean_field_equilibria(p);
  REQUIRE(eq.count() == 3);
  CHECK(eq.roots[0].stable);
  CHECK_FALSE(eq.roots[1].stable);
  CHECK(eq.roots[2].stable);
  CHECK(eq.roots[0].m < eq.roots[1].m);
  CHECK(eq.roots[1].m < eq.roots[2].m);
  for (const auto& r : eq.roots) CHECK(std::abs(r.m - std::tanh(p.beta * p.J * r.m)) < 1e-11);
}

TEST_CASE("mean-field equilibria agree with a dense grid sign scan") {
  const auto p = params(0.5, 1, 0, 6, 100);
  const auto eq = mean_field_equilibria(p);
  auto g = [&](double m) { return std::tanh(p.beta * (p.F + p.J * m)) - m; };
  std::vector<double> scan;
  const int M = 1000000;
  double prev = g(-1.0);
  for (int k = 1; k <= M; ++k) {
    const double x = -1.0 + 2.0 * k / M;
    const double cur = g(x);
    if ((prev < 0) != (cur < 0)) scan.push_back(x);
    prev = cur;
  }
  REQUIRE(eq.count() == static_cast<int>(scan.size()));
  for (size_t i = 0; i < scan.size(); ++i) CHECK(std::abs(eq.roots[i].m - scan[i]) < 2.0 / M);
  if (eq.count() == 3) CHECK_FALSE(eq.roots[1].stable);
}

TEST_CASE("steady state of the Appendix F parameters peaks at 3 and 47") {
  const auto steady = steady_state(build_rate_table(params(0.025, 1.5, 0, 1, 50), Logit{}));
  const auto eq = find_equilibria(steady);
  CHECK(eq.n_minus == 3);
  CHECK(eq.n_u == 24);
  CHECK(eq.n_plus == 47);
}

TEST_CASE("steady-state mode count switches across beta_c for N >= 100") {
  const int N = 200;
  int below = 0, above = 0;
  for (double beta : {0.6, 0.8, 0.9}) below = std::max(below, count_modes(steady_state(build_rate_table(params(0, 1, 0, beta, N), Logit{}))));
  for (double beta : {1.1, 1.3, 1.6}) above = std::min(above == 0 ? 99 : above, count_modes(steady_state(build_rate_table(params(0, 1, 0, beta, N), Logit{}))));
  CHECK(below == 1);
  CHECK(above == 2);
}

}  // TEST_SUITE
