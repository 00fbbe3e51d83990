#pragma once

#include <cstdint>
#include <vector>

#include "rtrl/nets.hpp"
#include "rtrl/replay_buffer.hpp"

namespace rtrl {

// ---- Adam

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

enum class StepDirection { kDescend, kAscend };

class AdamState {
 public:
  explicit AdamState(const MlpParams& like, AdamConfig cfg = {});

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return step_; }
  const Gradients& first_moment() const { return m_; }
  const Gradients& second_moment() const { return v_; }

 private:
  friend void adam_step(AdamState&, MlpParams&, const Gradients&, double, StepDirection);
  AdamConfig cfg_;
  Gradients m_;
  Gradients v_;
  std::uint64_t step_ = 0;
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, MlpParams& params, const Gradients& grads, double lr,
               StepDirection direction = StepDirection::kDescend);

// ---- K-FAC

enum class KfacDamping {
  /// (G + sqrt(eta) I)^-1 V (A + sqrt(eta) I)^-1, two Cholesky solves.
  kFactored,
  /// (G (x) A + eta I)^-1 vec(V) via eigendecompositions of both factors.
  kExact,
};

struct KfacConfig {
  double damping = 0.01;
  double decay = 0.95;
  KfacDamping mode = KfacDamping::kFactored;
};

/// Per dense layer: `a` is E[[x;1][x;1]^T] over layer inputs (bias folded in
/// as a homogeneous coordinate); `g` is E[d d^T] over per-sample gradients of
/// log pi with respect to the layer's pre-activations.
struct KfacFactors {
  Mat a;
  Mat g;
};

class KfacState {
 public:
  KfacState(const MlpParams& like, KfacConfig cfg = {});

  const KfacConfig& config() const { return cfg_; }
  const std::vector<KfacFactors>& factors() const { return factors_; }
  std::vector<KfacFactors>& factors() { return factors_; }
  std::uint64_t updates() const { return updates_; }

 private:
  friend void kfac_accumulate(KfacState&, const std::vector<Mat>&, const std::vector<Mat>&);
  friend KfacState kfac_with_factors(std::vector<KfacFactors>, KfacConfig);
  KfacState() = default;
  KfacConfig cfg_;
  std::vector<KfacFactors> factors_;
  std::uint64_t updates_ = 0;
};

/// State whose factors are given directly (tests and oracles).
KfacState kfac_with_factors(std::vector<KfacFactors> factors, KfacConfig cfg = {});

/// EMA update A <- decay*A + (1-decay)*E[a a^T], likewise for G. The first
/// call stores the batch moments directly.
void kfac_accumulate(KfacState& state, const std::vector<Mat>& layer_inputs,
                     const std::vector<Mat>& layer_output_grads);

/// Natural-gradient direction per layer. Throws LogicError before the first
/// accumulation and NumericError if a damped factor is not positive definite.
Gradients kfac_precondition(const KfacState& state, const Gradients& grads);

/// Row-major concatenation [W | b] (out x (in+1)) and its inverse.
Mat layer_matrix(const Dense& layer);
Dense split_layer_matrix(const Mat& m);

// ---- KL and barrier

/// Mean over states of KL(old || new) for diagonal Gaussians. A variance
/// below `min_cov` is a broken head invariant and raises LogicError.
double gaussian_kl(const std::vector<GaussianHead>& old_heads, const std::vector<GaussianHead>& new_heads,
                   double min_cov = kMinCovEl);
double gaussian_kl(const GaussianHead& old_head, const GaussianHead& new_head, double min_cov = kMinCovEl);

struct BarrierConfig {
  double alpha = 100.0;
  double delta = 0.1;
  void validate() const;
};

/// rho - alpha * max(0, kl - delta).
double barrier_objective(double rho, double kl, const BarrierConfig& cfg);
inline bool barrier_active(double kl, const BarrierConfig& cfg) { return kl > cfg.delta; }

// ---- multi-policy objective

/// Buffer steps flattened into matrices, plus the reference (theta_old)
/// heads used by the trust-region term.
struct PolicyObjectiveData {
  Mat states;      // normalized observations, N x state_dim
  Mat actions;     // N x action_dim
  Vec advantages;  // N
  Vec weights;     // N, sums to one
  Mat old_mean;    // N x action_dim
  Mat old_cov;     // N x action_dim
  Vec kl_weights;  // N, sums to one over the states that enter the KL
};

struct PolicyEvaluation {
  double surrogate = 0.0;  // sum_t w_t A_t log pi(a_t|s_t)
  double kl = 0.0;
  double objective = 0.0;  // barrier-penalized surrogate
  bool barrier_active = false;
  Gradients gradient;      // ascent direction of `objective`
  PolicyBatch batch;
  /// Filled when a Fisher sampling stream is passed.
  std::vector<Mat> fisher_output_grads;
};

/// Per-step weights from the buffer combined with `advantages` (iter_steps
/// order). The old heads are those of `theta_old` on the same states.
PolicyObjectiveData make_policy_objective_data(const PolicyReplayBuffer& buffer, const Vec& advantages,
                                               const ObsNormalizer& normalizer, const MlpParams& theta_old,
                                               PolicyWeighting weighting, bool kl_newest_only = false,
                                               CovBounds bounds = {});

/// With `fisher_rng` set, also returns per-sample pre-activation gradients
/// of log pi(a|s) for actions a drawn from the current policy (the K-FAC
/// output statistics; the barrier term is not part of them).
PolicyEvaluation evaluate_policy_objective(const MlpParams& theta, const PolicyObjectiveData& data,
                                           const BarrierConfig& barrier, CovBounds bounds = {},
                                           RngStream* fisher_rng = nullptr);

/// Gradient of the multi-policy surrogate under the current theta, with the
/// barrier gradient -alpha * grad KL(theta_old || theta) added when the
/// constraint is violated.
Gradients policy_gradient(const PolicyReplayBuffer& buffer, const MlpParams& theta, const Vec& advantages,
                          const ObsNormalizer& normalizer, const MlpParams& theta_old,
                          const BarrierConfig& barrier, PolicyWeighting weighting = PolicyWeighting::kUniformPolicy,
                          CovBounds bounds = {});

}  // namespace rtrl
