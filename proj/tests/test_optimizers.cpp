#include <cmath>

#include "doctest.h"
#include "rtrl/error.hpp"
#include "rtrl/optimizers.hpp"
#include "test_support.hpp"

using namespace rtrl;
using rtrl::test::fd_gradient;
using rtrl::test::random_mlp;
using rtrl::test::rel_err;

namespace {

Gradients random_grads(const MlpParams& p, RngStream& rng) {
  Gradients g = zeros_like(p);
  for (Dense& d : g.layers) {
    for (double& w : d.weight.values()) w = rng.uniform(-1, 1);
    for (double& b : d.bias) b = rng.uniform(-1, 1);
  }
  return g;
}

// Gaussian elimination with partial pivoting on a dense copy.
Vec dense_solve(Mat a, Vec b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
    for (std::size_t j = 0; j < n; ++j) std::swap(a(c, j), a(piv, j));
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a(r, c) / a(c, c);
      for (std::size_t j = c; j < n; ++j) a(r, j) -= f * a(c, j);
      b[r] -= f * b[c];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

Mat random_batch(std::size_t n, std::size_t d, RngStream& rng) {
  Mat m(n, d);
  for (double& v : m.values()) v = rng.uniform(-1, 1);
  return m;
}

PolicyObjectiveData toy_data(const MlpParams& theta_old, std::size_t n, RngStream& rng, double adv_scale = 1.0) {
  PolicyObjectiveData d;
  d.states = random_batch(n, 2, rng);
  d.actions = random_batch(n, 2, rng);
  d.advantages = Vec(n);
  for (double& a : d.advantages) a = adv_scale * rng.uniform(-1, 1);
  d.weights = Vec(n, 1.0 / static_cast<double>(n));
  d.kl_weights = Vec(n, 1.0 / static_cast<double>(n));
  const PolicyBatch old = policy_forward_batch(theta_old, d.states);
  d.old_mean = old.mean;
  d.old_cov = old.cov;
  return d;
}

}  // namespace

TEST_CASE("adam") {
  RngStream rng(1, 1);
  const MlpParams start = random_mlp({3, 4, 2}, rng);

  SUBCASE("zero gradient is a fixed point") {
    MlpParams p = start;
    AdamState s(p);
    adam_step(s, p, zeros_like(p), 0.1);
    CHECK(flatten(p.layers) == flatten(start.layers));
  }
  SUBCASE("first step is lr times the sign") {
    MlpParams p = start;
    AdamState s(p);
    const Gradients g = random_grads(p, rng);
    adam_step(s, p, g, 1e-3);
    const Vec before = flatten(start.layers), after = flatten(p.layers), gf = flatten(g.layers);
    for (std::size_t i = 0; i < gf.size(); ++i)
      CHECK(after[i] - before[i] == doctest::Approx(-1e-3 * (gf[i] > 0 ? 1.0 : -1.0)).epsilon(1e-5));
    MlpParams q = start;
    AdamState s2(q);
    adam_step(s2, q, g, 1e-3, StepDirection::kAscend);
    CHECK(flatten(q.layers)[0] - before[0] == doctest::Approx(before[0] - after[0]));
  }
  SUBCASE("deterministic") {
    MlpParams a = start, b = start;
    AdamState sa(a), sb(b);
    for (int i = 0; i < 5; ++i) {
      RngStream r1(7, static_cast<std::uint64_t>(i)), r2(7, static_cast<std::uint64_t>(i));
      adam_step(sa, a, random_grads(a, r1), 0.01);
      adam_step(sb, b, random_grads(b, r2), 0.01);
    }
    CHECK(flatten(a.layers) == flatten(b.layers));
    CHECK(sa.step_count() == 5);
  }
  SUBCASE("shape mismatch") {
    MlpParams p = start;
    AdamState s(p);
    const MlpParams other = random_mlp({3, 5, 2}, rng);
    CHECK_THROWS_AS(adam_step(s, p, zeros_like(other), 0.1), LogicError);
  }
}

TEST_CASE("kfac accumulation") {
  RngStream rng(2, 2);
  const MlpParams net = random_mlp({3, 4, 2}, rng);
  const std::vector<Mat> x1{random_batch(6, 3, rng), random_batch(6, 4, rng)};
  const std::vector<Mat> g1{random_batch(6, 4, rng), random_batch(6, 2, rng)};
  const std::vector<Mat> x2{random_batch(6, 3, rng), random_batch(6, 4, rng)};
  const std::vector<Mat> g2{random_batch(6, 4, rng), random_batch(6, 2, rng)};

  SUBCASE("no memory with decay 0") {
    KfacState s(net, {0.01, 0.0, KfacDamping::kFactored});
    kfac_accumulate(s, x1, g1);
    kfac_accumulate(s, x2, g2);
    KfacState fresh(net, {0.01, 0.0, KfacDamping::kFactored});
    kfac_accumulate(fresh, x2, g2);
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(s.factors()[l].a == fresh.factors()[l].a);
      CHECK(s.factors()[l].g == fresh.factors()[l].g);
    }
    // Hand moment of the first layer's input factor.
    Mat a(4, 4);
    for (std::size_t i = 0; i < 6; ++i) {
      const Vec h{x2[0](i, 0), x2[0](i, 1), x2[0](i, 2), 1.0};
      for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t q = 0; q < 4; ++q) a(p, q) += h[p] * h[q] / 6.0;
    }
    CHECK(max_abs(fresh.factors()[0].a - a) <= 1e-15);
  }
  SUBCASE("constant inputs converge to the outer product") {
    KfacState s(net);
    Mat x(6, 3), x_hidden(6, 4);
    for (std::size_t i = 0; i < 6; ++i) {
      x(i, 0) = 0.5, x(i, 1) = -1.0, x(i, 2) = 2.0;
      for (std::size_t j = 0; j < 4; ++j) x_hidden(i, j) = 0.1 * static_cast<double>(j);
    }
    kfac_accumulate(s, x1, g1);
    for (int i = 0; i < 1000; ++i) kfac_accumulate(s, {x, x_hidden}, g1);
    const Vec h{0.5, -1.0, 2.0, 1.0};
    for (std::size_t p = 0; p < 4; ++p)
      for (std::size_t q = 0; q < 4; ++q) CHECK(std::abs(s.factors()[0].a(p, q) - h[p] * h[q]) <= 1e-12);
  }
  SUBCASE("factors stay symmetric") {
    KfacState s(net);
    for (int i = 0; i < 100; ++i) {
      RngStream r(3, static_cast<std::uint64_t>(i));
      kfac_accumulate(s, {random_batch(8, 3, r), random_batch(8, 4, r)}, {random_batch(8, 4, r), random_batch(8, 2, r)});
    }
    for (const KfacFactors& f : s.factors()) {
      CHECK(max_abs(f.a - transpose(f.a)) <= 1e-14);
      CHECK(max_abs(f.g - transpose(f.g)) <= 1e-14);
    }
    CHECK(s.updates() == 100);
  }
  SUBCASE("precondition before accumulation") {
    KfacState s(net);
    CHECK_THROWS_AS(kfac_precondition(s, zeros_like(net)), LogicError);
  }
}

TEST_CASE("kfac preconditioning") {
  RngStream rng(4, 4);
  MlpParams layer;
  layer.layers.push_back(Dense{random_batch(3, 4, rng), Vec(3, 0.0)});
  layer.activations.push_back(Activation::kLinear);

  SUBCASE("identity factors leave the gradient unchanged") {
    for (KfacDamping mode : {KfacDamping::kFactored, KfacDamping::kExact}) {
      const KfacState s = kfac_with_factors({{Mat::identity(5), Mat::identity(3)}}, {1e-20, 0.95, mode});
      const Gradients g = random_grads(layer, rng);
      CHECK(rel_err(flatten(kfac_precondition(s, g).layers), flatten(g.layers)) <= 1e-9);
    }
  }
  SUBCASE("exact damping matches the explicit Kronecker inverse") {
    KfacState s(layer, {0.01, 0.95, KfacDamping::kExact});
    kfac_accumulate(s, {random_batch(20, 4, rng)}, {random_batch(20, 3, rng)});
    const Mat& a = s.factors()[0].a;
    const Mat& g = s.factors()[0].g;
    Mat f(15, 15);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t k = 0; k < 3; ++k)
          for (std::size_t l = 0; l < 5; ++l) f(i * 5 + j, k * 5 + l) = g(i, k) * a(j, l) + (i * 5 + j == k * 5 + l ? 0.01 : 0.0);
    const Gradients grad = random_grads(layer, rng);
    const Vec want = dense_solve(f, layer_matrix(grad.layers[0]).values());
    const Vec got = layer_matrix(kfac_precondition(s, grad).layers[0]).values();
    CHECK(rel_err(got, want) <= 1e-6);

    Gradients scaled = grad;
    scale(scaled, -3.5);
    const Vec got_scaled = flatten(kfac_precondition(s, scaled).layers);
    Vec expect = flatten(kfac_precondition(s, grad).layers);
    for (double& x : expect) x *= -3.5;
    CHECK(rel_err(got_scaled, expect) <= 1e-13);
  }
  SUBCASE("factored damping matches the two-sided solve") {
    KfacState s(layer, {0.04, 0.95, KfacDamping::kFactored});
    kfac_accumulate(s, {random_batch(20, 4, rng)}, {random_batch(20, 3, rng)});
    const Mat a = s.factors()[0].a + Mat::identity(5, 0.2);
    const Mat g = s.factors()[0].g + Mat::identity(3, 0.2);
    const Gradients grad = random_grads(layer, rng);
    const Mat v = layer_matrix(grad.layers[0]);
    const Mat out = layer_matrix(kfac_precondition(s, grad).layers[0]);
    CHECK(max_abs(matmul(matmul(g, out), a) - v) <= 1e-12 * max_abs(v));
  }
  SUBCASE("layer matrix round trip") {
    const Dense d{random_batch(3, 4, rng), Vec{1, 2, 3}};
    const Mat m = layer_matrix(d);
    CHECK(m.cols() == 5);
    CHECK(m(1, 4) == 2.0);
    const Dense back = split_layer_matrix(m);
    CHECK(back.weight == d.weight);
    CHECK(back.bias == d.bias);
  }
}

TEST_CASE("gaussian kl") {
  const GaussianHead h{{0.3, -0.1}, {0.7, 2.0}};
  CHECK(gaussian_kl(h, h) == 0.0);
  CHECK(gaussian_kl(GaussianHead{{0.0}, {1.0}}, GaussianHead{{1.0}, {1.0}}) == doctest::Approx(0.5).epsilon(1e-15));
  RngStream rng(5, 5);
  for (int i = 0; i < 100; ++i) {
    const GaussianHead a{{rng.uniform(-2, 2)}, {rng.uniform(0.2, 5)}}, b{{rng.uniform(-2, 2)}, {rng.uniform(0.2, 5)}};
    CHECK(gaussian_kl(a, b) >= 0.0);
  }
  CHECK_THROWS_AS(gaussian_kl(GaussianHead{{0.0}, {0.1}}, GaussianHead{{0.0}, {1.0}}), LogicError);
  CHECK(gaussian_kl(std::vector<GaussianHead>{h, h}, std::vector<GaussianHead>{h, h}) == 0.0);
}

TEST_CASE("barrier") {
  const BarrierConfig cfg;
  CHECK(barrier_objective(2.5, 0.05, cfg) == 2.5);
  CHECK(barrier_objective(2.5, 0.1, cfg) == 2.5);
  CHECK_FALSE(barrier_active(0.1, cfg));
  CHECK(2.5 - barrier_objective(2.5, cfg.delta + 0.01, cfg) == doctest::Approx(1.0).epsilon(1e-12));
  double prev = barrier_objective(1.0, 0.1, cfg);
  for (double kl = 0.11; kl < 2.0; kl += 0.05) {
    const double v = barrier_objective(1.0, kl, cfg);
    CHECK(v <= prev);
    prev = v;
  }
  CHECK_THROWS_AS((BarrierConfig{0.0, 0.1}.validate()), ConfigError);
}

TEST_CASE("policy objective gradient") {
  RngStream rng(6, 6);
  const MlpParams theta_old = random_mlp({2, 5, 4}, rng, 0.5);

  SUBCASE("zero advantages at theta_old give zero gradient") {
    PolicyObjectiveData d = toy_data(theta_old, 10, rng, 0.0);
    const PolicyEvaluation ev = evaluate_policy_objective(theta_old, d, {});
    CHECK(ev.kl == 0.0);
    CHECK_FALSE(ev.barrier_active);
    CHECK(norm(ev.gradient) == 0.0);
  }
  SUBCASE("finite differences with inactive and active barrier") {
    const PolicyObjectiveData d = toy_data(theta_old, 12, rng);
    for (double shift : {0.0, 1.5}) {
      MlpParams theta = theta_old;
      theta.layers.back().bias[0] += shift;
      theta.layers.back().bias[3] -= shift;
      const PolicyEvaluation ev = evaluate_policy_objective(theta, d, {});
      CHECK(ev.barrier_active == (shift > 0.0));
      const Vec fd = fd_gradient(
          [&](const MlpParams& p) { return evaluate_policy_objective(p, d, {}).objective; }, theta, 1e-6);
      CHECK(rel_err(flatten(ev.gradient.layers), fd) <= 1e-4);
    }
  }
  SUBCASE("barrier step reduces kl") {
    const PolicyObjectiveData d = toy_data(theta_old, 12, rng, 0.0);
    MlpParams theta = theta_old;
    theta.layers.back().bias[0] += 1.2;
    const PolicyEvaluation ev = evaluate_policy_objective(theta, d, {});
    REQUIRE(ev.barrier_active);
    for (std::size_t l = 0; l < theta.layers.size(); ++l) {
      axpy(1e-4, ev.gradient.layers[l].weight, theta.layers[l].weight);
      for (std::size_t j = 0; j < theta.layers[l].bias.size(); ++j)
        theta.layers[l].bias[j] += 1e-4 * ev.gradient.layers[l].bias[j];
    }
    CHECK(evaluate_policy_objective(theta, d, {}).kl < ev.kl);
  }
}

TEST_CASE("capacity one reduces to the single-policy surrogate gradient") {
  RngStream rng(7, 7);
  const MlpParams theta = random_mlp({2, 6, 4}, rng, 0.5);
  Path path;
  for (int t = 0; t < 5; ++t) {
    path.states.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    path.actions.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    path.rewards.push_back(0.0);
    path.heads.push_back(policy_forward(theta, path.states.back()));
    path.log_probs.push_back(0.0);
  }
  path.final_state = {0.0, 0.0};
  PolicyReplayBuffer buffer(1);
  buffer.push(PolicyRecord::make(PolicySnapshot{1, theta, ObsNormalizer(2)}, {path}));
  const Vec adv{0.5, -1.0, 2.0, 0.0, 0.25};
  const Gradients g = policy_gradient(buffer, theta, adv, ObsNormalizer(2), theta, {});
  Gradients want = zeros_like(theta);
  for (std::size_t t = 0; t < 5; ++t) add_scaled(want, 0.2, backprop_policy(theta, path.states[t], path.actions[t], adv[t]));
  CHECK(rel_err(flatten(g.layers), flatten(want.layers)) <= 1e-13);
}
