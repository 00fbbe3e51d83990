#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rtrl/env.hpp"
#include "rtrl/nets.hpp"
#include "rtrl/rng.hpp"

namespace rtrl::oracle {

/// pi(a|s) = softmax_a logits[s * n_actions + a].
struct SoftmaxTabularPolicy {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  Vec logits;

  SoftmaxTabularPolicy() = default;
  SoftmaxTabularPolicy(std::size_t states, std::size_t actions, Vec logits);
  static SoftmaxTabularPolicy random(std::size_t states, std::size_t actions, RngStream& rng, double scale = 1.0);

  /// Probability table laid out like the logits.
  Vec probabilities() const;
};

/// V(s), Q(s,a) and A(s,a) = Q - V; tables use the s * n_actions + a layout.
struct ValueTables {
  Vec v;
  Vec q;
  Vec a;
};

/// Solves (I - gamma P_pi) V = r_pi exactly (partial-pivot LU).
ValueTables exact_values(const TabularMdp& mdp, std::span<const double> pi);
ValueTables exact_values(const TabularMdp& mdp, const SoftmaxTabularPolicy& policy);

struct GeneralizedValues {
  Vec v_bar;                      // sum_n p_n V^{pi_n}
  std::vector<ValueTables> each;  // exact tables per policy
  std::vector<Vec> advantage;     // Q^{pi_n} - V_bar
};

/// Throws ConfigError unless the weights are a distribution over `policies`.
GeneralizedValues generalized_values(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                                     std::span<const double> weights);

/// Per-policy b^{pi_n}(s, a) tables. The named constructors are the state
/// functions 0, -V_bar and a random one; `negative_q` depends on the action
/// and makes the gradient integrand vanish.
struct BiasFunction {
  std::string name;
  std::vector<Vec> tables;

  static BiasFunction zero(const TabularMdp& mdp, std::size_t n_policies);
  static BiasFunction negative_v_bar(const TabularMdp& mdp, const GeneralizedValues& gv);
  static BiasFunction random_state(const TabularMdp& mdp, std::size_t n_policies, RngStream& rng);
  static BiasFunction negative_q(const GeneralizedValues& gv);
};

/// D(s) = sum_{k<H} gamma^k P(s0 -> s, k, pi), s0 ~ rho0. The omitted tail
/// has total mass at most gamma^H / (1 - gamma).
struct DiscountedVisitation {
  Vec d;
  std::size_t horizon = 0;
  double tail_bound = 0.0;
};
DiscountedVisitation discounted_visitation(const TabularMdp& mdp, std::span<const double> pi, std::size_t horizon);

/// Smallest H with gamma^H / (1 - gamma) * magnitude <= tolerance.
std::size_t horizon_for_tolerance(double gamma, double magnitude, double tolerance);

struct Theorem1Options {
  /// Truncation error allowed in the analytic gradient (absolute).
  double tail_tolerance = 1e-12;
  std::size_t max_horizon = 1000000;
  double fd_epsilon = 1e-6;
};

struct Theorem1Result {
  Vec analytic;  // concatenated per-policy logit blocks
  Vec fd;
  double max_rel_err = 0.0;  // max |analytic - fd| / max(|fd|_inf, 1e-12)
  std::size_t horizon = 0;
  double tail_bound = 0.0;
  bool ok = true;            // false when the horizon budget could not meet the tolerance
  std::string report;
};

/// rho_bar(theta) = sum_n p_n rho0 . V^{pi_n}, the quantity the gradient check differentiates.
double generalized_return(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                          std::span<const double> weights);

/// Analytic gradient sum_n p_n sum_s D^{pi_n}(s) sum_a dpi_n/dtheta (Q^{pi_n} + b^{pi_n})
/// against central differences of generalized_return.
Theorem1Result theorem1_check(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                              std::span<const double> weights, const BiasFunction& bias,
                              const Theorem1Options& opts = {});
/// Analytic part only, truncated at `horizon`.
Vec theorem1_gradient(const TabularMdp& mdp, const std::vector<SoftmaxTabularPolicy>& policies,
                      std::span<const double> weights, const BiasFunction& bias, std::size_t horizon);

/// Central differences (f(x + e_i eps) - f(x - e_i eps)) / (2 eps).
Vec finite_diff(const std::function<double(std::span<const double>)>& f, std::span<const double> x, double epsilon);
Gradients finite_diff(const std::function<double(const MlpParams&)>& f, const MlpParams& params, double epsilon);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};
/// E_old[log p_old(a) - log p_new(a)] from `n_samples` draws of the old head.
McEstimate mc_kl(const GaussianHead& old_head, const GaussianHead& new_head, std::size_t n_samples, RngStream& rng);

/// max_i |a_i - b_i| / max(|b|_inf, floor).
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

// ---- verification suites

struct CheckLine {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckLine> checks;
  double seconds = 0.0;
  bool passed() const;
};

/// Suite names accepted by run_suite.
const std::vector<std::string>& suite_names();
bool is_suite_name(const std::string& name);
/// Throws ConfigError on an unknown name.
SuiteResult run_suite(const std::string& name, std::uint64_t seed = 0);

SuiteResult verify_theorem1(std::uint64_t seed = 0, std::size_t instances = 100);
SuiteResult verify_theorem2(std::uint64_t seed = 0, std::size_t instances = 1000);
SuiteResult verify_gradients(std::uint64_t seed = 0, std::size_t nets = 50);
SuiteResult verify_kl(std::uint64_t seed = 0, std::size_t pairs = 20, std::size_t samples = 1000000);
SuiteResult verify_kfac(std::uint64_t seed = 0);
SuiteResult verify_estimators(std::uint64_t seed = 0);

void print_suite_table(std::ostream& out, const std::vector<SuiteResult>& results);

}  // namespace rtrl::oracle
