#include "rtrl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtrl/error.hpp"

namespace rtrl {

void EstimatorConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw ConfigError("gamma must be in [0, 1), got " + std::to_string(gamma));
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ConfigError("lambda must be in [0, 1], got " + std::to_string(lambda));
}

Vec value_targets(std::span<const double> rewards, double gamma) {
  Vec out(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

namespace {

void check_lengths(std::size_t rewards, std::size_t shared, std::size_t per_policy, const char* op) {
  if (shared != rewards + 1)
    throw ConfigError(std::string(op) + ": shared values need T+1 = " + std::to_string(rewards + 1) +
                      " entries, got " + std::to_string(shared));
  if (per_policy != rewards)
    throw ConfigError(std::string(op) + ": per-policy values need T = " + std::to_string(rewards) +
                      " entries, got " + std::to_string(per_policy));
}

}  // namespace

Vec gae_shared(std::span<const double> rewards, std::span<const double> values, double gamma,
               double lambda, std::size_t k) {
  const std::size_t n = rewards.size();
  if (values.size() != n + 1)
    throw ConfigError("gae_shared: values need T+1 = " + std::to_string(n + 1) + " entries, got " +
                      std::to_string(values.size()));
  Vec delta(n);
  for (std::size_t t = 0; t < n; ++t) delta[t] = rewards[t] + gamma * values[t + 1] - values[t];
  Vec adv(n);
  const double gl = gamma * lambda;
  if (k >= n) {
    double acc = 0.0;
    for (std::size_t t = n; t-- > 0;) {
      acc = delta[t] + gl * acc;
      adv[t] = acc;
    }
    return adv;
  }
  if (k == 0) throw ConfigError("gae_shared: cut-off k must be >= 1");
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t horizon = std::min(k, n - t);
    double acc = 0.0;
    for (std::size_t l = horizon; l-- > 0;) acc = delta[t + l] + gl * acc;
    adv[t] = acc;
  }
  return adv;
}

Vec gae_per_policy(std::span<const double> rewards, std::span<const double> shared_values,
                   std::span<const double> per_policy_values, double gamma, double lambda,
                   std::size_t k) {
  const std::size_t n = rewards.size();
  check_lengths(n, shared_values.size(), per_policy_values.size(), "gae_per_policy");
  if (k == 0) throw ConfigError("gae_per_policy: cut-off k must be >= 1");
  auto bootstrap = [&](std::size_t idx) { return idx == n ? shared_values[n] : per_policy_values[idx]; };
  Vec adv(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t horizon = std::min(k, n - t);
    double partial_return = 0.0;  // sum_{l<j} gamma^l r_{t+l}
    double discount = 1.0;        // gamma^j after the update below
    double weight_base = 1.0;     // lambda^{j-1}
    double acc = 0.0;
    for (std::size_t j = 1; j <= horizon; ++j) {
      partial_return += discount * rewards[t + j - 1];
      discount *= gamma;
      const double estimate = -shared_values[t] + partial_return + discount * bootstrap(t + j);
      const double weight = j < horizon ? (1.0 - lambda) * weight_base : weight_base;
      acc += weight * estimate;
      weight_base *= lambda;
    }
    adv[t] = acc;
  }
  return adv;
}

Vec theorem2_delta(std::span<const double> shared_values, std::span<const double> per_policy_values,
                   double gamma, double lambda, std::size_t k) {
  if (shared_values.empty()) throw ConfigError("theorem2_delta: empty value sequence");
  const std::size_t n = shared_values.size() - 1;
  check_lengths(n, shared_values.size(), per_policy_values.size(), "theorem2_delta");
  if (k == 0) throw ConfigError("theorem2_delta: cut-off k must be >= 1");
  auto dv = [&](std::size_t idx) { return idx == n ? 0.0 : per_policy_values[idx] - shared_values[idx]; };
  Vec out(n);
  const double gl = gamma * lambda;
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t horizon = std::min(k, n - t);
    double acc = 0.0, w = 1.0;
    for (std::size_t l = 1; l < horizon; ++l) {
      acc += w * dv(t + l);
      w *= gl;
    }
    // The last k-step estimate carries the whole geometric tail lambda^{K-1}.
    // At the path end dv is zero and this matches the untruncated sum.
    const double tail = t + horizon == n ? gamma * (1.0 - lambda) * w * dv(t + horizon)
                                         : gamma * w * dv(t + horizon);
    out[t] = gamma * (1.0 - lambda) * acc + tail;
  }
  return out;
}

void normalize_advantages(Vec& advantages) {
  if (advantages.size() < 2) return;
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(advantages.size());
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(advantages.size());
  const double inv = 1.0 / (std::sqrt(var) + 1e-8);
  for (double& a : advantages) a = (a - mean) * inv;
}

}  // namespace rtrl
