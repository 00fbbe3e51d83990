#include "rtrl/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "rtrl/error.hpp"
#include "rtrl/estimators.hpp"
#include "rtrl/optimizers.hpp"

namespace rtrl::oracle {

// ---- tabular policies and values

SoftmaxTabularPolicy::SoftmaxTabularPolicy(std::size_t states, std::size_t actions, Vec l)
    : n_states(states), n_actions(actions), logits(std::move(l)) {
  if (logits.size() != states * actions) throw ConfigError("softmax policy: logits table has the wrong size");
}

SoftmaxTabularPolicy SoftmaxTabularPolicy::random(std::size_t states, std::size_t actions, RngStream& rng,
                                                  double scale) {
  Vec l(states * actions);
  for (double& x : l) x = scale * rng.normal();
  return {states, actions, std::move(l)};
}

Vec SoftmaxTabularPolicy::probabilities() const {
  Vec pi(logits.size());
  for (std::size_t s = 0; s < n_states; ++s) {
    const double* l = logits.data() + s * n_actions;
    const double mx = *std::max_element(l, l + n_actions);
    double sum = 0.0;
    for (std::size_t a = 0; a < n_actions; ++a) sum += pi[s * n_actions + a] = std::exp(l[a] - mx);
    for (std::size_t a = 0; a < n_actions; ++a) pi[s * n_actions + a] /= sum;
  }
  return pi;
}

namespace {

void check_policy(const TabularMdp& mdp, std::span<const double> pi) {
  if (pi.size() != mdp.n_states * mdp.n_actions) throw ConfigError("policy table does not match the MDP");
}

Mat policy_transition(const TabularMdp& mdp, std::span<const double> pi) {
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Mat p(S, S);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      const double w = pi[s * A + a];
      for (std::size_t n = 0; n < S; ++n) p(s, n) += w * mdp.p(s, a, n);
    }
  return p;
}

}  // namespace

ValueTables exact_values(const TabularMdp& mdp, std::span<const double> pi) {
  mdp.validate();
  check_policy(mdp, pi);
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  const double g = mdp.discount;
  const Mat p = policy_transition(mdp, pi);
  Mat lhs = Mat::identity(S);
  Mat rhs(S, 1);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t n = 0; n < S; ++n) lhs(s, n) -= g * p(s, n);
    for (std::size_t a = 0; a < A; ++a) rhs(s, 0) += pi[s * A + a] * mdp.r(s, a);
  }
  const Mat v = solve_linear(lhs, rhs);
  ValueTables out;
  out.v = v.values();
  out.q.assign(S * A, 0.0);
  out.a.assign(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) {
      double next = 0.0;
      for (std::size_t n = 0; n < S; ++n) next += mdp.p(s, a, n) * out.v[n];
      out.q[s * A + a] = mdp.r(s, a) + g * next;
      out.a[s * A + a] = out.q[s * A + a] - out.v[s];
    }
  return out;
}

ValueTables exact_values(const TabularMdp& mdp, const SoftmaxTabularPolicy& policy) {
  return exact_values(mdp, policy.probabilities());
}

namespace {

void check_weights(std::span<const double> w, std::size_t n) {
  if (w.size() != n || n == 0) throw ConfigError("policy weights must have one entry per policy");
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw ConfigError("policy weights must be nonnegative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("policy weights must sum to 1");
}

}  // namespace

GeneralizedValues generalized_values(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                                     std::span<const double> weights) {
  check_weights(weights, policies.size());
  GeneralizedValues gv;
  gv.v_bar.assign(mdp.n_states, 0.0);
  for (std::size_t n = 0; n < policies.size(); ++n) {
    gv.each.push_back(exact_values(mdp, policies[n]));
    for (std::size_t s = 0; s < mdp.n_states; ++s) gv.v_bar[s] += weights[n] * gv.each.back().v[s];
  }
  for (const ValueTables& t : gv.each) {
    Vec adv(t.q.size());
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      for (std::size_t a = 0; a < mdp.n_actions; ++a)
        adv[s * mdp.n_actions + a] = t.q[s * mdp.n_actions + a] - gv.v_bar[s];
    gv.advantage.push_back(std::move(adv));
  }
  return gv;
}

// ---- bias functions

BiasFunction BiasFunction::zero(const TabularMdp& mdp, std::size_t n_policies) {
  return {"zero", std::vector<Vec>(n_policies, Vec(mdp.n_states * mdp.n_actions, 0.0))};
}

BiasFunction BiasFunction::negative_v_bar(const TabularMdp& mdp, const GeneralizedValues& gv) {
  Vec t(mdp.n_states * mdp.n_actions);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) t[s * mdp.n_actions + a] = -gv.v_bar[s];
  return {"-v_bar", std::vector<Vec>(gv.each.size(), t)};
}

BiasFunction BiasFunction::random_state(const TabularMdp& mdp, std::size_t n_policies, RngStream& rng) {
  BiasFunction b{"random", {}};
  for (std::size_t n = 0; n < n_policies; ++n) {
    Vec t(mdp.n_states * mdp.n_actions);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const double v = rng.uniform(-5.0, 5.0);
      for (std::size_t a = 0; a < mdp.n_actions; ++a) t[s * mdp.n_actions + a] = v;
    }
    b.tables.push_back(std::move(t));
  }
  return b;
}

BiasFunction BiasFunction::negative_q(const GeneralizedValues& gv) {
  BiasFunction b{"-q", {}};
  for (const ValueTables& t : gv.each) {
    Vec q = t.q;
    for (double& x : q) x = -x;
    b.tables.push_back(std::move(q));
  }
  return b;
}

// ---- visitation and the multi-policy gradient

DiscountedVisitation discounted_visitation(const TabularMdp& mdp, std::span<const double> pi, std::size_t horizon) {
  check_policy(mdp, pi);
  const std::size_t S = mdp.n_states;
  const Mat p = policy_transition(mdp, pi);
  DiscountedVisitation out;
  out.d.assign(S, 0.0);
  out.horizon = horizon;
  Vec mu = mdp.initial, next(S);
  double disc = 1.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    for (std::size_t s = 0; s < S; ++s) out.d[s] += disc * mu[s];
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t n = 0; n < S; ++n) next[n] += mu[s] * p(s, n);
    mu.swap(next);
    disc *= mdp.discount;
  }
  out.tail_bound = disc / (1.0 - mdp.discount);
  return out;
}

std::size_t horizon_for_tolerance(double gamma, double magnitude, double tolerance) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("horizon_for_tolerance: gamma must be in [0, 1)");
  if (!(tolerance > 0.0)) throw ConfigError("horizon_for_tolerance: tolerance must be > 0");
  if (magnitude <= 0.0 || gamma == 0.0) return 1;
  const double need = tolerance * (1.0 - gamma) / magnitude;
  if (need >= 1.0) return 1;
  return static_cast<std::size_t>(std::ceil(std::log(need) / std::log(gamma)));
}

double generalized_return(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                          std::span<const double> weights) {
  check_weights(weights, policies.size());
  double rho = 0.0;
  for (std::size_t n = 0; n < policies.size(); ++n) {
    const ValueTables t = exact_values(mdp, policies[n]);
    double r = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) r += mdp.initial[s] * t.v[s];
    rho += weights[n] * r;
  }
  return rho;
}

namespace {

double bias_magnitude(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                      const BiasFunction& bias) {
  double m = 0.0;
  for (std::size_t n = 0; n < policies.size(); ++n) {
    const ValueTables t = exact_values(mdp, policies[n]);
    for (std::size_t i = 0; i < t.q.size(); ++i) m = std::max(m, std::abs(t.q[i] + bias.tables[n][i]));
  }
  return m;
}

}  // namespace

Vec theorem1_gradient(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                      std::span<const double> weights, const BiasFunction& bias, std::size_t horizon) {
  check_weights(weights, policies.size());
  if (bias.tables.size() != policies.size()) throw ConfigError("theorem1: one bias table per policy required");
  const std::size_t S = mdp.n_states, A = mdp.n_actions;
  Vec grad;
  grad.reserve(policies.size() * S * A);
  for (std::size_t n = 0; n < policies.size(); ++n) {
    const Vec pi = policies[n].probabilities();
    const ValueTables t = exact_values(mdp, pi);
    const DiscountedVisitation vis = discounted_visitation(mdp, pi, horizon);
    const Vec& b = bias.tables[n];
    for (std::size_t s = 0; s < S; ++s) {
      // sum_a dpi(a|s)/dtheta[s,a'] c(s,a) = pi(a'|s) (c(s,a') - sum_a pi(a|s) c(s,a))
      double mean_c = 0.0;
      for (std::size_t a = 0; a < A; ++a) mean_c += pi[s * A + a] * (t.q[s * A + a] + b[s * A + a]);
      for (std::size_t a = 0; a < A; ++a) {
        const double c = t.q[s * A + a] + b[s * A + a];
        grad.push_back(weights[n] * vis.d[s] * pi[s * A + a] * (c - mean_c));
      }
    }
  }
  return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw ConfigError("max_relative_error: length mismatch");
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, floor);
}

Theorem1Result theorem1_check(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                              std::span<const double> weights, const BiasFunction& bias,
                              const Theorem1Options& opts) {
  Theorem1Result res;
  const double magnitude = 2.0 * bias_magnitude(mdp, policies, bias);
  const std::size_t h = horizon_for_tolerance(mdp.discount, magnitude, opts.tail_tolerance);
  std::ostringstream report;
  if (h > opts.max_horizon) {
    res.ok = false;
    res.horizon = opts.max_horizon;
    res.tail_bound = std::pow(mdp.discount, static_cast<double>(opts.max_horizon)) / (1.0 - mdp.discount);
    report << "tail bound " << res.tail_bound * magnitude << " at horizon " << opts.max_horizon
           << " exceeds tolerance " << opts.tail_tolerance << " (needs H=" << h << ")";
    res.report = report.str();
    return res;
  }
  res.horizon = h;
  res.tail_bound = std::pow(mdp.discount, static_cast<double>(h)) / (1.0 - mdp.discount);
  res.analytic = theorem1_gradient(mdp, policies, weights, bias, h);

  Vec joint;
  for (const auto& p : policies) joint.insert(joint.end(), p.logits.begin(), p.logits.end());
  auto f = [&](std::span<const double> x) {
    std::vector<SoftmaxTabularPolicy> ps = policies;
    std::size_t off = 0;
    for (auto& p : ps) {
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
                x.begin() + static_cast<std::ptrdiff_t>(off + p.logits.size()), p.logits.begin());
      off += p.logits.size();
    }
    return generalized_return(mdp, ps, weights);
  };
  res.fd = finite_diff(f, joint, opts.fd_epsilon);
  res.max_rel_err = max_relative_error(res.analytic, res.fd);
  report << "H=" << h << " max_rel_err=" << res.max_rel_err;
  res.report = report.str();
  return res;
}

// ---- finite differences and Monte-Carlo KL

Vec finite_diff(const std::function<double(std::span<const double>)>& f, std::span<const double> x, double epsilon) {
  Vec p(x.begin(), x.end());
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + epsilon;
    const double up = f(p);
    p[i] = orig - epsilon;
    const double down = f(p);
    p[i] = orig;
    g[i] = (up - down) / (2.0 * epsilon);
  }
  return g;
}

Gradients finite_diff(const std::function<double(const MlpParams&)>& f, const MlpParams& params, double epsilon) {
  MlpParams work = params;
  auto fx = [&](std::span<const double> x) {
    unflatten(x, work.layers);
    return f(work);
  };
  const Vec g = finite_diff(fx, flatten(params.layers), epsilon);
  Gradients out = zeros_like(params);
  unflatten(g, out.layers);
  return out;
}

McEstimate mc_kl(const GaussianHead& old_head, const GaussianHead& new_head, std::size_t n_samples, RngStream& rng) {
  if (n_samples < 2) throw ConfigError("mc_kl: need at least two samples");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Vec a = sample_action(old_head, rng);
    const double x = log_prob(old_head, a) - log_prob(new_head, a);
    sum += x;
    sum_sq += x * x;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

// ---- suites

bool SuiteResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckLine& c) { return c.passed; });
}

namespace {

using Clock = std::chrono::steady_clock;

CheckLine at_most(std::string name, double measured, double tol, std::string detail = {}) {
  return {std::move(name), measured, tol, measured <= tol, std::move(detail)};
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void randomize(MlpParams& p, RngStream& rng, double scale) {
  for (Dense& d : p.layers) {
    for (double& w : d.weight.values()) w = scale * rng.normal();
    for (double& b : d.bias) b = scale * rng.normal();
  }
}

}  // namespace

SuiteResult verify_theorem1(std::uint64_t seed, std::size_t instances) {
  const auto t0 = Clock::now();
  SuiteResult out{"theorem1", {}, 0.0};
  double worst_err = 0.0, worst_bias = 0.0;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < instances; ++i) {
    RngStream rng(seed, stream_id(StreamPurpose::kOracle, 1, i));
    const std::size_t S = 2 + static_cast<std::size_t>(rng.uniform() * 5.0);  // 2..6
    const std::size_t A = 2 + static_cast<std::size_t>(rng.uniform() * 2.0);  // 2..3
    const std::size_t N = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);  // 1..3
    const double gamma = rng.uniform(0.0, 0.95);
    const TabularMdp mdp = make_random_mdp(S, A, gamma, rng);
    std::vector<SoftmaxTabularPolicy> pols;
    for (std::size_t n = 0; n < N; ++n) pols.push_back(SoftmaxTabularPolicy::random(S, A, rng));
    const Vec w(N, 1.0 / static_cast<double>(N));
    const GeneralizedValues gv = generalized_values(mdp, pols, w);

    const Theorem1Result r = theorem1_check(mdp, pols, w, BiasFunction::negative_v_bar(mdp, gv));
    if (!r.ok) ++failures;
    worst_err = std::max(worst_err, r.max_rel_err);

    const std::size_t h = r.horizon;
    const Vec g_zero = theorem1_gradient(mdp, pols, w, BiasFunction::zero(mdp, N), h);
    const Vec g_rand = theorem1_gradient(mdp, pols, w, BiasFunction::random_state(mdp, N, rng), h);
    for (std::size_t j = 0; j < g_zero.size(); ++j) {
      worst_bias = std::max(worst_bias, std::abs(g_zero[j] - r.analytic[j]));
      worst_bias = std::max(worst_bias, std::abs(g_rand[j] - r.analytic[j]));
    }
  }
  out.checks.push_back(at_most("analytic vs finite-difference gradient (max rel err)", worst_err, 1e-6,
                               std::to_string(instances) + " random MDPs"));
  out.checks.push_back(at_most("bias invariance {0, -V_bar, random} (max abs)", worst_bias, 1e-8));
  out.checks.push_back(at_most("horizon budget failures", static_cast<double>(failures), 0.0));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult verify_theorem2(std::uint64_t seed, std::size_t instances) {
  const auto t0 = Clock::now();
  SuiteResult out{"theorem2", {}, 0.0};
  double worst_full = 0.0, worst_cut = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    RngStream rng(seed, stream_id(StreamPurpose::kOracle, 2, i));
    const std::size_t T = 1 + static_cast<std::size_t>(rng.uniform() * 30.0);
    const double u = rng.uniform();
    const double gamma = u < 0.05 ? 0.0 : rng.uniform(0.0, 1.0);
    const double v = rng.uniform();
    const double lambda = v < 0.05 ? 0.0 : (v < 0.1 ? 1.0 : rng.uniform(0.0, 1.0));
    Vec r(T), shared(T + 1), per(T);
    for (double& x : r) x = rng.normal();
    for (double& x : shared) x = rng.normal();
    for (double& x : per) x = rng.normal();
    auto err = [&](std::size_t k) {
      const Vec a = gae_per_policy(r, shared, per, gamma, lambda, k);
      const Vec b = gae_shared(r, shared, gamma, lambda, k);
      const Vec d = theorem2_delta(shared, per, gamma, lambda, k);
      double e = 0.0;
      for (std::size_t t = 0; t < T; ++t) e = std::max(e, std::abs((a[t] - b[t]) - d[t]));
      return e;
    };
    worst_full = std::max(worst_full, err(kFullPath));
    worst_cut = std::max(worst_cut, err(1 + static_cast<std::size_t>(rng.uniform() * 20.0)));
  }
  out.checks.push_back(at_most("per-policy - shared - delta, k = remaining length", worst_full, 1e-10,
                               std::to_string(instances) + " random paths"));
  out.checks.push_back(at_most("per-policy - shared - delta, k <= 20", worst_cut, 1e-10));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult verify_gradients(std::uint64_t seed, std::size_t nets) {
  const auto t0 = Clock::now();
  SuiteResult out{"gradients", {}, 0.0};
  double worst_pol = 0.0, worst_val = 0.0;
  for (std::size_t i = 0; i < nets; ++i) {
    RngStream rng(seed, stream_id(StreamPurpose::kOracle, 3, i));
    const std::size_t sd = 8, ad = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);
    const std::size_t hidden = 3 + static_cast<std::size_t>(rng.uniform() * 4.0);
    const std::size_t batch = 3;
    MlpParams theta = init_policy_params(sd, ad, rng, hidden);
    randomize(theta, rng, 0.5);
    MlpParams psi = init_value_params(sd, rng, hidden);
    randomize(psi, rng, 0.5);
    Mat states(batch, sd), actions(batch, ad);
    for (double& x : states.values()) x = rng.normal();
    for (double& x : actions.values()) x = 2.0 * rng.normal();
    Vec up(batch), targets(batch);
    for (double& x : up) x = rng.normal();
    for (double& x : targets) x = rng.normal();

    auto f_pol = [&](const MlpParams& p) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) s += up[b] * log_prob(policy_forward(p, states.row(b)), actions.row(b));
      return s;
    };
    Gradients g_pol = zeros_like(theta);
    for (std::size_t b = 0; b < batch; ++b) add_scaled(g_pol, 1.0, backprop_policy(theta, states.row(b), actions.row(b), up[b]));
    const Gradients fd_pol = finite_diff(f_pol, theta, 1e-5);
    worst_pol = std::max(worst_pol, max_relative_error(flatten(g_pol.layers), flatten(fd_pol.layers), 1e-8));

    auto f_val = [&](const MlpParams& p) { return backprop_value(p, states, targets).first; };
    const Gradients g_val = backprop_value(psi, states, targets).second;
    const Gradients fd_val = finite_diff(f_val, psi, 1e-5);
    worst_val = std::max(worst_val, max_relative_error(flatten(g_val.layers), flatten(fd_val.layers), 1e-8));
  }
  out.checks.push_back(at_most("grad log pi incl. covariance head (max rel err)", worst_pol, 1e-4,
                               std::to_string(nets) + " random nets"));
  out.checks.push_back(at_most("grad sum-of-squares value loss (max rel err)", worst_val, 1e-4,
                               std::to_string(nets) + " random nets"));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult verify_kl(std::uint64_t seed, std::size_t pairs, std::size_t samples) {
  const auto t0 = Clock::now();
  SuiteResult out{"kl", {}, 0.0};
  double worst_z = 0.0, self_kl = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    RngStream rng(seed, stream_id(StreamPurpose::kOracle, 4, i));
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform() * 3.0);
    GaussianHead a{Vec(d), Vec(d)}, b{Vec(d), Vec(d)};
    for (std::size_t j = 0; j < d; ++j) {
      a.mean[j] = rng.normal();
      b.mean[j] = a.mean[j] + 0.5 * rng.normal();
      a.cov[j] = rng.uniform(kMinCovEl, kMaxCovEl);
      b.cov[j] = rng.uniform(kMinCovEl, kMaxCovEl);
    }
    const double closed = gaussian_kl(a, b);
    const McEstimate mc = mc_kl(a, b, samples, rng);
    worst_z = std::max(worst_z, std::abs(closed - mc.estimate) / mc.standard_error);
    self_kl = std::max(self_kl, std::abs(gaussian_kl(a, a)));
  }
  out.checks.push_back(at_most("|closed form - Monte Carlo| in standard errors", worst_z, 3.0,
                               std::to_string(pairs) + " pairs x " + std::to_string(samples) + " samples"));
  out.checks.push_back(at_most("KL(h, h)", self_kl, 0.0));
  const double shifted = gaussian_kl(GaussianHead{{0.0}, {1.0}}, GaussianHead{{1.0}, {1.0}}, 0.0);
  out.checks.push_back(at_most("1-D shifted means vs 0.5", std::abs(shifted - 0.5), 1e-15));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult verify_kfac(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"kfac", {}, 0.0};
  double worst_exact = 0.0, worst_factored = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    RngStream rng(seed, stream_id(StreamPurpose::kOracle, 5, i));
    const std::size_t in = 1 + static_cast<std::size_t>(rng.uniform() * 7.0);  // in + 1 <= 8
    const std::size_t outd = 1 + static_cast<std::size_t>(rng.uniform() * 8.0);
    const std::size_t n = 16;
    Mat x(n, in), dz(n, outd);
    for (double& v : x.values()) v = rng.normal();
    for (double& v : dz.values()) v = rng.normal();
    MlpParams layer;
    layer.layers.push_back({Mat(outd, in), Vec(outd)});
    layer.activations.push_back(Activation::kLinear);
    Gradients g = zeros_like(layer);
    for (double& v : g.layers[0].weight.values()) v = rng.normal();
    for (double& v : g.layers[0].bias) v = rng.normal();

    // explicit factors
    Mat a(in + 1, in + 1), gg(outd, outd);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t p = 0; p <= in; ++p)
        for (std::size_t q = 0; q <= in; ++q)
          a(p, q) += (p < in ? x(r, p) : 1.0) * (q < in ? x(r, q) : 1.0) / static_cast<double>(n);
      for (std::size_t p = 0; p < outd; ++p)
        for (std::size_t q = 0; q < outd; ++q) gg(p, q) += dz(r, p) * dz(r, q) / static_cast<double>(n);
    }
    const Mat vg = layer_matrix(g.layers[0]);
    const Mat vec_g(vg.size(), 1, vg.values());

    for (double eta : {1e-3, 1e-2, 1e-1}) {
      const Mat f = kron(gg, a);
      const Mat want = solve_spd(f + Mat::identity(f.rows(), eta), vec_g);
      KfacState st(layer, KfacConfig{eta, 0.0, KfacDamping::kExact});
      kfac_accumulate(st, {x}, {dz});
      const Mat got = layer_matrix(kfac_precondition(st, g).layers[0]);
      worst_exact = std::max(worst_exact, max_relative_error(got.values(), want.values()));

      const double s = std::sqrt(eta);
      const Mat fs = kron(gg + Mat::identity(outd, s), a + Mat::identity(in + 1, s));
      const Mat want_f = solve_spd(fs, vec_g);
      KfacState sf(layer, KfacConfig{eta, 0.0, KfacDamping::kFactored});
      kfac_accumulate(sf, {x}, {dz});
      const Mat got_f = layer_matrix(kfac_precondition(sf, g).layers[0]);
      worst_factored = std::max(worst_factored, max_relative_error(got_f.values(), want_f.values()));
    }
  }
  out.checks.push_back(at_most("exact damping vs (G(x)A + eta I)^-1 g (max rel err)", worst_exact, 1e-6));
  out.checks.push_back(
      at_most("factored damping vs ((G+sI)(x)(A+sI))^-1 g (max rel err)", worst_factored, 1e-6));
  out.seconds = seconds_since(t0);
  return out;
}

SuiteResult verify_estimators(std::uint64_t seed) {
  const auto t0 = Clock::now();
  SuiteResult out{"estimators", {}, 0.0};
  double e_targets = 0.0, e_td = 0.0, e_mc = 0.0;
  for (std::size_t i = 0; i < 200; ++i) {
    RngStream rng(seed, stream_id(StreamPurpose::kOracle, 6, i));
    const std::size_t T = 1 + static_cast<std::size_t>(rng.uniform() * 40.0);
    const double gamma = rng.uniform(0.0, 1.0);
    Vec r(T), v(T + 1);
    for (double& x : r) x = rng.normal();
    for (double& x : v) x = rng.normal();
    const Vec tg = value_targets(r, gamma);
    for (std::size_t t = 0; t < T; ++t) {
      double direct = 0.0, disc = 1.0;
      for (std::size_t l = 0; t + l < T; ++l, disc *= gamma) direct += disc * r[t + l];
      e_targets = std::max(e_targets, std::abs(direct - tg[t]) / std::max(1.0, std::abs(direct)));
    }
    const Vec td = gae_shared(r, v, gamma, 0.0);
    for (std::size_t t = 0; t < T; ++t) e_td = std::max(e_td, std::abs(td[t] - (r[t] + gamma * v[t + 1] - v[t])));
    const Vec mc = gae_shared(r, Vec(T + 1, 0.0), gamma, 1.0);
    for (std::size_t t = 0; t < T; ++t) e_mc = std::max(e_mc, std::abs(mc[t] - tg[t]));
  }
  out.checks.push_back(at_most("value targets vs direct summation", e_targets, 1e-12));
  out.checks.push_back(at_most("GAE lambda=0 vs one-step TD residual", e_td, 1e-12));
  out.checks.push_back(at_most("GAE lambda=1, V=0 vs value targets", e_mc, 1e-12));
  out.seconds = seconds_since(t0);
  return out;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"theorem1", "theorem2", "gradients", "kl", "kfac", "estimators"};
  return names;
}

bool is_suite_name(const std::string& name) {
  const auto& n = suite_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "theorem1") return verify_theorem1(seed);
  if (name == "theorem2") return verify_theorem2(seed);
  if (name == "gradients") return verify_gradients(seed);
  if (name == "kl") return verify_kl(seed);
  if (name == "kfac") return verify_kfac(seed);
  if (name == "estimators") return verify_estimators(seed);
  throw ConfigError("unknown verification suite '" + name + "'");
}

void print_suite_table(std::ostream& out, const std::vector<SuiteResult>& results) {
  out << std::left << std::setw(12) << "suite" << std::setw(58) << "check" << std::right << std::setw(13)
      << "measured" << std::setw(11) << "tolerance" << "  result\n";
  for (const SuiteResult& r : results)
    for (const CheckLine& c : r.checks) {
      std::ostringstream m, t;
      m << std::scientific << std::setprecision(3) << c.measured;
      t << std::scientific << std::setprecision(1) << c.tolerance;
      out << std::left << std::setw(12) << r.suite << std::setw(58) << c.name << std::right << std::setw(13)
          << m.str() << std::setw(11) << t.str() << "  " << (c.passed ? "PASS" : "FAIL");
      if (!c.detail.empty()) out << "  (" << c.detail << ")";
      out << '\n';
    }
}

}  // namespace rtrl::oracle
