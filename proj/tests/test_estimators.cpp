#include <cmath>

#include "doctest.h"
#include "rtrl/error.hpp"
#include "rtrl/estimators.hpp"
#include "rtrl/rng.hpp"

using namespace rtrl;

namespace {

Vec random_vec(std::size_t n, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double max_diff(const Vec& a, const Vec& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Mixture of k-step estimates A^(j)_t built term by term.
double kstep(const Vec& r, const Vec& shared, const Vec& policy, double g, std::size_t t, std::size_t j) {
  const std::size_t n = r.size();
  double a = -shared[t], gl = 1.0;
  for (std::size_t l = 0; l < j; ++l) {
    a += gl * r[t + l];
    gl *= g;
  }
  const double boot = t + j == n ? shared[n] : policy[t + j];
  return a + gl * boot;
}

}  // namespace

TEST_CASE("value targets") {
  CHECK(value_targets(Vec{1, 2, 3}, 0.5) == Vec{2.75, 3.5, 3.0});
  CHECK(value_targets(Vec{4, -1, 7}, 0.0) == Vec{4, -1, 7});
  RngStream rng(1, 1);
  const Vec r = random_vec(40, rng);
  const Vec v = value_targets(r, 0.93);
  for (std::size_t t = 0; t < r.size(); ++t) {
    double s = 0.0, g = 1.0;
    for (std::size_t l = t; l < r.size(); ++l, g *= 0.93) s += g * r[l];
    CHECK(std::abs(v[t] - s) <= 1e-12);
    CHECK(v[t] == (t + 1 < r.size() ? r[t] + 0.93 * v[t + 1] : r[t]));
  }
}

TEST_CASE("shared GAE base cases") {
  RngStream rng(2, 2);
  const Vec r = random_vec(12, rng), v = random_vec(13, rng);
  const double g = 0.9;
  const Vec td = gae_shared(r, v, g, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) CHECK(std::abs(td[t] - (r[t] + g * v[t + 1] - v[t])) <= 1e-12);
  const Vec zero(13, 0.0);
  CHECK(max_diff(gae_shared(r, zero, g, 1.0), value_targets(r, g)) <= 1e-12);
}

TEST_CASE("shared GAE matches the k-step expansion") {
  RngStream rng(3, 3);
  for (int rep = 0; rep < 20; ++rep) {
    const Vec r = random_vec(6, rng), v = random_vec(7, rng);
    const double g = rng.uniform(0.0, 0.99), lam = rng.uniform(0.0, 1.0);
    const Vec a = gae_shared(r, v, g, lam);
    for (std::size_t t = 0; t < 6; ++t) {
      const std::size_t kmax = 6 - t;
      double mix = 0.0, w = 1.0;
      for (std::size_t j = 1; j < kmax; ++j, w *= lam) mix += (1.0 - lam) * w * kstep(r, v, v, g, t, j);
      mix += w * kstep(r, v, v, g, t, kmax);
      CHECK(std::abs(a[t] - mix) <= 1e-12);
    }
  }
}

TEST_CASE("per-policy GAE") {
  RngStream rng(4, 4);
  const Vec r = random_vec(8, rng), shared = random_vec(9, rng), policy = random_vec(8, rng);
  const double g = 0.95, lam = 0.8;

  SUBCASE("equal value functions give shared GAE") {
    const Vec same(shared.begin(), shared.end() - 1);
    CHECK(max_diff(gae_per_policy(r, shared, same, g, lam), gae_shared(r, shared, g, lam)) <= 1e-12);
  }
  SUBCASE("k = 1") {
    const Vec a = gae_per_policy(r, shared, policy, g, lam, 1);
    for (std::size_t t = 0; t < r.size(); ++t) {
      const double boot = t + 1 < r.size() ? policy[t + 1] : shared[r.size()];
      CHECK(std::abs(a[t] - (-shared[t] + r[t] + g * boot)) <= 1e-12);
    }
  }
  SUBCASE("finite k weights") {
    for (std::size_t k : {2u, 3u, 5u}) {
      const Vec a = gae_per_policy(r, shared, policy, g, lam, k);
      for (std::size_t t = 0; t < r.size(); ++t) {
        const std::size_t kt = std::min(k, r.size() - t);
        double mix = 0.0, w = 1.0;
        for (std::size_t j = 1; j < kt; ++j, w *= lam) mix += (1.0 - lam) * w * kstep(r, shared, policy, g, t, j);
        mix += w * kstep(r, shared, policy, g, t, kt);
        CHECK(std::abs(a[t] - mix) <= 1e-12);
      }
    }
  }
}

TEST_CASE("shared-vs-per-policy difference") {
  RngStream rng(5, 5);
  const Vec shared = random_vec(10, rng), policy = random_vec(9, rng);
  const Vec same(shared.begin(), shared.end() - 1);
  for (double x : theorem2_delta(shared, same, 0.9, 0.7)) CHECK(x == 0.0);
  for (double x : theorem2_delta(shared, policy, 0.9, 1.0)) CHECK(x == 0.0);

  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform(0.0, 30.0));
    const Vec r = random_vec(n, rng, -3, 3), sv = random_vec(n + 1, rng, -3, 3), pv = random_vec(n, rng, -3, 3);
    const double g = rng.uniform(0.0, 0.999), lam = rng.uniform(0.0, 1.0);
    for (std::size_t k : {kFullPath, std::size_t{1}, std::size_t{4}, n}) {
      const Vec lhs = gae_per_policy(r, sv, pv, g, lam, k);
      const Vec rhs = gae_shared(r, sv, g, lam, k);
      const Vec d = theorem2_delta(sv, pv, g, lam, k);
      for (std::size_t t = 0; t < n; ++t) REQUIRE(std::abs((lhs[t] - rhs[t]) - d[t]) <= 1e-10);
    }
  }
}

TEST_CASE("advantage standardization") {
  Vec a{1, 2, 3, 4};
  normalize_advantages(a);
  double s = 0.0, s2 = 0.0;
  for (double x : a) {
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s) <= 1e-12);
  CHECK(s2 / 4.0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("estimator config validation") {
  CHECK_THROWS_AS((EstimatorConfig{1.0, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((EstimatorConfig{0.5, 1.5}.validate()), ConfigError);
  CHECK_NOTHROW((EstimatorConfig{0.0, 1.0}.validate()));
}
