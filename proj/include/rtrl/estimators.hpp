#pragma once

#include <cstddef>
#include <limits>
#include <span>

#include "rtrl/tensor.hpp"

namespace rtrl {

struct EstimatorConfig {
  double gamma = 0.99;
  double lambda = 0.97;
  /// Throws ConfigError unless gamma in [0, 1) and lambda in [0, 1].
  void validate() const;
};

inline constexpr std::size_t kFullPath = std::numeric_limits<std::size_t>::max();

struct PathEstimates {
  Vec value_targets;
  Vec value_predictions;
  Vec advantages;
};

/// Discounted reward-to-go truncated at the path end:
/// target_t = sum_{l=0}^{T-1-t} gamma^l r_{t+l}, evaluated by reverse scan.
Vec value_targets(std::span<const double> rewards, double gamma);

/// Generalized advantage from a single (shared) value function:
/// A_t = sum_{l=0}^{K_t-1} (gamma lambda)^l (r_{t+l} + gamma V_{t+l+1} - V_{t+l})
/// with K_t = min(k, T - t). `values` has T+1 entries; values[T] is the
/// path-end bootstrap (0 for a terminated episode).
Vec gae_shared(std::span<const double> rewards, std::span<const double> values, double gamma,
               double lambda, std::size_t k = kFullPath);

/// Reference estimator mixing k-step advantages that start from the shared
/// value at s_t and bootstrap from a per-policy value function:
///   A^(j)_t = -V_shared(s_t) + sum_{l<j} gamma^l r_{t+l} + gamma^j V_policy(s_{t+j})
///   A_t = (1-lambda) sum_{j<K_t} lambda^{j-1} A^(j)_t + lambda^{K_t-1} A^(K_t)_t
/// The last weight carries the geometric tail, so the weights sum to one and
/// the estimator equals gae_shared when both value functions agree.
/// `per_policy_values` is aligned with rewards (T entries); the bootstrap at
/// the path end s_T is always shared_values[T].
Vec gae_per_policy(std::span<const double> rewards, std::span<const double> shared_values,
                   std::span<const double> per_policy_values, double gamma, double lambda,
                   std::size_t k = kFullPath);

/// Difference between the per-policy and shared estimators:
/// delta_t = gamma (1-lambda) sum_{l=1}^{K_t} (lambda gamma)^{l-1} (V_policy - V_shared)(s_{t+l}),
/// where the difference at s_T is zero (shared bootstrap). When the cut-off
/// ends inside the path the l = K_t term takes the tail weight
/// gamma^{K_t} lambda^{K_t-1} of the last k-step estimate instead.
Vec theorem2_delta(std::span<const double> shared_values, std::span<const double> per_policy_values,
                   double gamma, double lambda, std::size_t k = kFullPath);

/// In-place standardization to zero mean and unit variance.
void normalize_advantages(Vec& advantages);

}  // namespace rtrl
