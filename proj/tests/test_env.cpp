#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "rtrl/env.hpp"
#include "rtrl/error.hpp"

using namespace rtrl;

TEST_CASE("point mass with a fixed start always resets there") {
  PointMassOptions o;
  o.fixed_start = Vec{0.3, -0.7};
  PointMass env(o);
  for (std::uint64_t i = 0; i < 20; ++i) {
    RngStream rng(i, 1);
    CHECK(env.reset(rng) == Vec{0.3, -0.7});
  }
}

TEST_CASE("point mass default start is uniform on the unit box") {
  PointMass env;
  double lo = 1.0, hi = -1.0;
  for (std::uint64_t i = 0; i < 2000; ++i) {
    RngStream rng(i, 2);
    for (double x : env.reset(rng)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  CHECK(lo >= -1.0);
  CHECK(hi <= 1.0);
  CHECK(lo < -0.95);
  CHECK(hi > 0.95);
}

TEST_CASE("point mass dynamics and reward") {
  PointMassOptions o;
  o.fixed_start = Vec{0.0, 0.0};
  PointMass env(o);
  RngStream rng(0, 0);
  env.reset(rng);
  Transition t = env.step(Vec{0.0, 0.0});
  CHECK(t.reward == 0.0);
  CHECK(t.next_state == Vec{0.0, 0.0});

  o.fixed_start = Vec{1.0, 0.0};
  PointMass env2(o);
  env2.reset(rng);
  t = env2.step(Vec{0.0, 0.0});
  CHECK(t.next_state == Vec{1.0, 0.0});
  CHECK(t.reward == -1.0);

  env2.reset(rng);
  t = env2.step(Vec{2.0, -1.0});
  const double x = 1.0 + 0.05 * 2.0, y = -0.05;
  CHECK(t.next_state[0] == doctest::Approx(x).epsilon(1e-15));
  CHECK(t.next_state[1] == doctest::Approx(y).epsilon(1e-15));
  CHECK(t.reward == doctest::Approx(-(x * x + y * y) - 0.1 * 5.0).epsilon(1e-14));
}

TEST_CASE("horizon cutoff marks the transition terminal") {
  PointMassOptions o;
  o.horizon = 5;
  PointMass env(o);
  RngStream rng(1, 1);
  env.reset(rng);
  for (int i = 0; i < 4; ++i) CHECK_FALSE(env.step(Vec{0.1, 0.1}).terminal);
  const Transition last = env.step(Vec{0.1, 0.1});
  CHECK(last.terminal);
  CHECK(last.time_limit);
  CHECK_FALSE(env.episode_active());
  CHECK_THROWS(env.step(Vec{0.0, 0.0}));
}

TEST_CASE("action clipping") {
  PointMass env;
  CHECK(env.clip_action(Vec{0.5, -1.5}) == Vec{0.5, -1.5});
  Pendulum p;
  const Vec c = p.clip_action(Vec{7.0});
  CHECK(c == Vec{2.0});
  CHECK(p.clip_action(c) == c);
  const Vec big = env.clip_action(Vec{-10.0, 10.0});
  CHECK(big == Vec{-3.0, 3.0});
  CHECK(env.clip_action(big) == big);
}

TEST_CASE("pendulum reset angle in range") {
  Pendulum p;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    RngStream rng(i, 3);
    const Vec obs = p.reset(rng);
    REQUIRE(obs.size() == 3);
    REQUIRE(p.angle() >= -std::numbers::pi);
    REQUIRE(p.angle() <= std::numbers::pi);
    REQUIRE(std::abs(obs[0] * obs[0] + obs[1] * obs[1] - 1.0) < 1e-12);
  }
}

TEST_CASE("tabular env honours a point-mass initial distribution") {
  TabularMdp mdp = make_chain_mdp(2, 2, 0.9);
  mdp.initial = {1.0, 0.0};
  TabularEnv env(mdp);
  for (std::uint64_t i = 0; i < 50; ++i) {
    RngStream rng(i, 4);
    CHECK(env.reset(rng) == Vec{1.0, 0.0});
    CHECK(env.current_state() == 0);
  }
}

TEST_CASE("tabular mdp validation") {
  TabularMdp mdp(2, 1, 0.5);
  mdp.p(0, 0, 1) = 1.0;
  mdp.p(1, 0, 1) = 1.0;
  mdp.initial = {1.0, 0.0};
  CHECK_NOTHROW(mdp.validate());
  mdp.p(1, 0, 0) = 0.5;
  CHECK_THROWS_AS(mdp.validate(), ConfigError);
  mdp.p(1, 0, 0) = 0.0;
  mdp.discount = 1.0;
  CHECK_THROWS_AS(mdp.validate(), ConfigError);
}

TEST_CASE("tabular mdp text round trip") {
  RngStream rng(2, 2);
  const TabularMdp mdp = make_random_mdp(3, 2, 0.8, rng);
  std::stringstream s;
  write_tabular_mdp(s, mdp);
  const TabularMdp back = parse_tabular_mdp(s);
  CHECK(back.n_states == 3);
  CHECK(back.n_actions == 2);
  CHECK(back.discount == 0.8);
  for (std::size_t i = 0; i < mdp.transitions.size(); ++i)
    CHECK(back.transitions[i] == doctest::Approx(mdp.transitions[i]).epsilon(1e-15));
  for (std::size_t i = 0; i < mdp.rewards.size(); ++i)
    CHECK(back.rewards[i] == doctest::Approx(mdp.rewards[i]).epsilon(1e-14));
}

TEST_CASE("make_env names") {
  CHECK(make_env("point_mass")->spec().state_dim == 2);
  CHECK(make_env("pendulum")->spec().action_dim == 1);
  CHECK(make_env("chain")->spec().state_dim == 4);
  CHECK_THROWS_AS(make_env("cartpole"), ConfigError);
  CHECK_FALSE(is_known_env_name("cartpole"));
}
