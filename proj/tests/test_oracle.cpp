#include <cmath>
#include <vector>

#include "doctest.h"
#include "rtrl/error.hpp"
#include "rtrl/optimizers.hpp"
#include "rtrl/oracle.hpp"

using namespace rtrl;
using namespace rtrl::oracle;

namespace {

// Iterative policy evaluation, independent of the LU solve.
Vec iterate_values(const TabularMdp& mdp, const Vec& pi) {
  Vec v(mdp.n_states, 0.0);
  for (int it = 0; it < 20000; ++it) {
    Vec next(mdp.n_states, 0.0);
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        double q = mdp.r(s, a);
        for (std::size_t t = 0; t < mdp.n_states; ++t) q += mdp.discount * mdp.p(s, a, t) * v[t];
        next[s] += pi[s * mdp.n_actions + a] * q;
      }
    v = next;
  }
  return v;
}

double max_diff(const Vec& a, const Vec& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<SoftmaxTabularPolicy> random_policies(const TabularMdp& mdp, std::size_t n, RngStream& rng) {
  std::vector<SoftmaxTabularPolicy> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(SoftmaxTabularPolicy::random(mdp.n_states, mdp.n_actions, rng));
  return out;
}

}  // namespace

TEST_CASE("exact values") {
  SUBCASE("gamma 0 gives the immediate reward") {
    RngStream rng(1, 1);
    const TabularMdp mdp = make_random_mdp(4, 3, 0.0, rng);
    const SoftmaxTabularPolicy pol = SoftmaxTabularPolicy::random(4, 3, rng);
    const Vec pi = pol.probabilities();
    const ValueTables t = exact_values(mdp, pol);
    for (std::size_t s = 0; s < 4; ++s) {
      double r = 0.0;
      for (std::size_t a = 0; a < 3; ++a) r += pi[s * 3 + a] * mdp.r(s, a);
      CHECK(t.v[s] == doctest::Approx(r).epsilon(1e-14));
    }
    CHECK(max_diff(t.q, mdp.rewards) <= 1e-15);
  }
  SUBCASE("single state") {
    TabularMdp mdp(1, 2, 0.9);
    mdp.p(0, 0, 0) = mdp.p(0, 1, 0) = 1.0;
    mdp.r(0, 0) = 1.0;
    mdp.r(0, 1) = 3.0;
    mdp.initial = {1.0};
    const ValueTables t = exact_values(mdp, Vec{0.5, 0.5});
    CHECK(t.v[0] == doctest::Approx(2.0 / (1.0 - 0.9)).epsilon(1e-13));
    CHECK(t.a[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(t.a[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two-state absorbing chain") {
    TabularMdp mdp(2, 1, 0.5);
    mdp.p(0, 0, 1) = 1.0;
    mdp.p(1, 0, 1) = 1.0;
    mdp.r(0, 0) = 1.0;
    mdp.initial = {1.0, 0.0};
    const ValueTables t = exact_values(mdp, Vec{1.0, 1.0});
    CHECK(t.v[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(t.v[1]) <= 1e-15);
  }
  SUBCASE("agrees with iterative evaluation") {
    RngStream rng(2, 2);
    for (int rep = 0; rep < 20; ++rep) {
      const TabularMdp mdp = make_random_mdp(2 + rep % 5, 2 + rep % 2, 0.9, rng);
      const SoftmaxTabularPolicy pol = SoftmaxTabularPolicy::random(mdp.n_states, mdp.n_actions, rng);
      CHECK(max_diff(exact_values(mdp, pol).v, iterate_values(mdp, pol.probabilities())) <= 1e-10);
    }
  }
}

TEST_CASE("softmax policy tables") {
  const SoftmaxTabularPolicy pol(2, 3, Vec{0.0, 0.0, 0.0, 1.0, 2.0, 3.0});
  const Vec p = pol.probabilities();
  CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[5] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK_THROWS(SoftmaxTabularPolicy(2, 3, Vec{1.0}));
}

TEST_CASE("generalized values") {
  RngStream rng(3, 3);
  const TabularMdp mdp = make_random_mdp(5, 3, 0.9, rng);
  const auto pols = random_policies(mdp, 3, rng);
  const Vec w{0.2, 0.3, 0.5};
  const GeneralizedValues gv = generalized_values(mdp, pols, w);
  for (std::size_t s = 0; s < 5; ++s) {
    double bar = 0.0;
    for (std::size_t n = 0; n < 3; ++n) bar += w[n] * exact_values(mdp, pols[n]).v[s];
    CHECK(gv.v_bar[s] == doctest::Approx(bar).epsilon(1e-13));
  }
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < gv.advantage[n].size(); ++i)
      CHECK(gv.advantage[n][i] == doctest::Approx(gv.each[n].q[i] - gv.v_bar[i / 3]).epsilon(1e-13));

  CHECK_THROWS_AS(generalized_values(mdp, pols, Vec{0.5, 0.5, 0.5}), ConfigError);
  CHECK_THROWS_AS(generalized_values(mdp, pols, Vec{0.5, 0.5}), ConfigError);
}

TEST_CASE("discounted visitation") {
  RngStream rng(4, 4);
  const TabularMdp mdp = make_random_mdp(4, 2, 0.8, rng);
  const Vec pi = SoftmaxTabularPolicy::random(4, 2, rng).probabilities();
  const DiscountedVisitation dv = discounted_visitation(mdp, pi, 300);
  double total = 0.0;
  for (double d : dv.d) total += d;
  CHECK(total == doctest::Approx((1.0 - std::pow(0.8, 300)) / 0.2).epsilon(1e-12));
  CHECK(dv.tail_bound == doctest::Approx(std::pow(0.8, 300) / 0.2));

  // rho0 . V for reward r(s, a) = [s == j] is D(j).
  for (std::size_t j = 0; j < 4; ++j) {
    TabularMdp indicator = mdp;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t a = 0; a < 2; ++a) indicator.r(s, a) = s == j ? 1.0 : 0.0;
    const Vec v = exact_values(indicator, pi).v;
    double ret = 0.0;
    for (std::size_t s = 0; s < 4; ++s) ret += mdp.initial[s] * v[s];
    CHECK(std::abs(dv.d[j] - ret) <= 1e-12);
  }
}

TEST_CASE("horizon from the tail bound") {
  for (double gamma : {0.0, 0.5, 0.9, 0.95}) {
    const std::size_t h = horizon_for_tolerance(gamma, 10.0, 1e-12);
    CHECK(std::pow(gamma, static_cast<double>(h)) / (1.0 - gamma) * 10.0 <= 1e-12);
    if (h > 0) CHECK(std::pow(gamma, static_cast<double>(h - 1)) / (1.0 - gamma) * 10.0 > 1e-12);
  }
}

TEST_CASE("multi-policy gradient") {
  RngStream rng(5, 5);
  const TabularMdp mdp = make_random_mdp(4, 3, 0.9, rng);
  const auto pols = random_policies(mdp, 3, rng);
  const Vec w{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  const GeneralizedValues gv = generalized_values(mdp, pols, w);
  const std::size_t horizon = 600;

  SUBCASE("matches independent central differences") {
    auto f = [&](std::span<const double> x) {
      std::vector<SoftmaxTabularPolicy> p = pols;
      for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t i = 0; i < 12; ++i) p[n].logits[i] = x[n * 12 + i];
      return generalized_return(mdp, p, w);
    };
    Vec x;
    for (const auto& p : pols) x.insert(x.end(), p.logits.begin(), p.logits.end());
    const Vec fd = finite_diff(f, x, 1e-6);
    const Vec g = theorem1_gradient(mdp, pols, w, BiasFunction::zero(mdp, 3), horizon);
    CHECK(max_relative_error(g, fd) <= 1e-6);
  }
  SUBCASE("b = -Q cancels the integrand") {
    const Vec g = theorem1_gradient(mdp, pols, w, BiasFunction::negative_q(gv), horizon);
    double m = 0.0;
    for (double v : g) m = std::max(m, std::abs(v));
    CHECK(m <= 1e-12);
  }
  SUBCASE("state-dependent biases do not change the gradient") {
    const Vec base = theorem1_gradient(mdp, pols, w, BiasFunction::zero(mdp, 3), horizon);
    CHECK(max_diff(theorem1_gradient(mdp, pols, w, BiasFunction::negative_v_bar(mdp, gv), horizon), base) <= 1e-8);
    CHECK(max_diff(theorem1_gradient(mdp, pols, w, BiasFunction::random_state(mdp, 3, rng), horizon), base) <= 1e-8);
  }
  SUBCASE("full check on the chain") {
    const TabularMdp chain = make_chain_mdp();
    const auto cp = random_policies(chain, 2, rng);
    const Theorem1Result r = theorem1_check(chain, cp, Vec{0.5, 0.5}, BiasFunction::zero(chain, 2));
    CHECK(r.ok);
    CHECK(r.max_rel_err <= 1e-6);
    CHECK(r.tail_bound <= 1e-12);
  }
}

TEST_CASE("finite differences") {
  auto linear = [](std::span<const double> x) { return 3.0 * x[0] - 2.0 * x[1] + 0.5; };
  const Vec g = finite_diff(linear, Vec{1.0, 4.0}, 1e-3);
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(g[1] == doctest::Approx(-2.0).epsilon(1e-10));

  auto quadratic = [](std::span<const double> x) { return x[0] * x[0] + 5.0 * x[0] * x[1]; };
  const Vec q = finite_diff(quadratic, Vec{2.0, -1.0}, 1e-2);
  CHECK(q[0] == doctest::Approx(2.0 * 2.0 + 5.0 * -1.0).epsilon(1e-10));
  CHECK(q[1] == doctest::Approx(5.0 * 2.0).epsilon(1e-10));

  CHECK(max_relative_error(Vec{1.0, 2.0}, Vec{1.0, 2.5}) == doctest::Approx(0.2));
  CHECK(max_relative_error(Vec{1e-13}, Vec{0.0}) == doctest::Approx(0.1));
}

TEST_CASE("monte carlo kl") {
  RngStream rng(6, 6);
  const GaussianHead h{Vec{0.3, -1.0}, Vec{0.5, 2.0}};
  const McEstimate same = mc_kl(h, h, 1000, rng);
  CHECK(same.estimate == 0.0);
  CHECK(same.standard_error == 0.0);

  const GaussianHead g{Vec{0.0, -0.5}, Vec{1.0, 1.5}};
  const McEstimate e = mc_kl(h, g, 200000, rng);
  CHECK(std::abs(e.estimate - gaussian_kl(h, g)) <= 3.0 * e.standard_error);

  const double small = mc_kl(h, g, 10000, rng).standard_error;
  const double large = mc_kl(h, g, 40000, rng).standard_error;
  CHECK(small / large == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("suites") {
  CHECK(is_suite_name("theorem1"));
  CHECK(is_suite_name("kfac"));
  CHECK_FALSE(is_suite_name("bogus"));
  CHECK_THROWS_AS(run_suite("bogus"), ConfigError);

  const SuiteResult t2 = verify_theorem2(0, 200);
  CHECK(t2.passed());
  CHECK_FALSE(t2.checks.empty());
  CHECK(verify_kfac().passed());
  CHECK(verify_gradients(0, 5).passed());
  CHECK(verify_theorem1(0, 5).passed());

  SuiteResult broken{"x", {{"c", 1.0, 0.5, false, ""}}, 0.0};
  CHECK_FALSE(broken.passed());
}
