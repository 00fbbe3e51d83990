#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rtrl/env.hpp"
#include "rtrl/estimators.hpp"
#include "rtrl/nets.hpp"
#include "rtrl/optimizers.hpp"
#include "rtrl/replay_buffer.hpp"

namespace rtrl {

struct TrainerConfig {
  std::size_t timesteps_per_batch = 1000;
  double vf_step_size = 1e-3;
  double pl_step_size = 1e-2;
  double delta = 0.1;
  std::size_t n_iter_vf_update = 100;
  std::size_t n_iter_pl_update = 10;
  std::size_t rbp_capacity = 3;
  std::size_t max_timesteps = 1000000;
  double min_cov_el = kMinCovEl;
  double max_cov_el = kMaxCovEl;
  double gamma = 0.99;
  double lambda = 0.97;
  double alpha = 100.0;
  std::uint64_t seed = 0;

  PolicyWeighting weighting = PolicyWeighting::kUniformPolicy;
  bool normalize_advantages = false;
  bool kl_newest_only = false;
  bool obs_normalization = true;
  double kfac_damping = 0.01;
  double kfac_decay = 0.95;
  KfacDamping kfac_mode = KfacDamping::kFactored;
  /// Rescales the step so that lr^2 g^T F^-1 g stays below this; <= 0 disables.
  double kl_clip = 0.01;
  /// Cap on the global norm of the preconditioned step direction; <= 0 disables.
  double grad_norm_cap = 1.0;
  /// Replace the whole buffer each iteration instead of push/evict.
  bool overwrite_buffer = false;
  /// Episodes simulated concurrently during collection.
  std::size_t workers = 1;
  /// Extra mean-action episodes after each iteration (0 = off).
  std::size_t eval_episodes = 0;

  CovBounds cov_bounds() const { return {min_cov_el, max_cov_el}; }
  BarrierConfig barrier() const { return {alpha, delta}; }
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct TrainLogRecord {
  std::size_t iteration = 0;
  std::size_t timesteps = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double kl = 0.0;
  double value_loss = 0.0;  // mean squared error after the fit
  double entropy = 0.0;
  double wall_ms = 0.0;
  double min_cov = 0.0;
  double max_cov = 0.0;
  std::size_t episodes = 0;
  std::size_t barrier_steps = 0;  // inner steps taken with the barrier active
  std::optional<double> eval_return;
};

struct CollectOptions {
  std::size_t min_steps = 1000;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;
  std::size_t workers = 1;
  CovBounds bounds = {};
};

/// Stage 1. Whole episodes are collected until at least `min_steps` steps
/// exist. Episode j draws from its own stream keyed by (seed, iteration, j),
/// so the result does not depend on the worker count.
std::vector<Path> collect_paths(const Environment& prototype, const MlpParams& theta,
                                const ObsNormalizer& normalizer, const CollectOptions& opts);

/// Total reward of mean-action episodes.
Vec evaluate_mean_action(const Environment& prototype, const MlpParams& theta, const ObsNormalizer& normalizer,
                         std::size_t episodes, std::uint64_t seed, std::uint64_t iteration, CovBounds bounds = {});

struct ValueFitData {
  Mat states;  // normalized
  Vec targets;
};
ValueFitData make_value_fit_data(const PolicyReplayBuffer& buffer, const ObsNormalizer& normalizer, double gamma);

/// Stage 3. Full-batch Adam descent on the sum-of-squares loss; returns the
/// loss at the final parameters.
double fit_value_function(MlpParams& psi, AdamState& adam, const ValueFitData& data, std::size_t iterations,
                          double lr);

/// Stage 4. Shared-value GAE for every buffered path, iter_steps order.
Vec buffer_advantages(const PolicyReplayBuffer& buffer, const MlpParams& psi, const ObsNormalizer& normalizer,
                      const EstimatorConfig& est, bool normalize = false);

struct PolicyUpdateResult {
  double kl_after = 0.0;
  double entropy = 0.0;
  double min_cov = 0.0;
  double max_cov = 0.0;
  std::size_t barrier_steps = 0;
};

/// Stage 5. K-FAC preconditioned ascent on the barrier objective, with the
/// reference heads taken from `data` (theta at the start of the stage).
/// Fisher-statistic actions for inner step k come from stream
/// (seed, iteration, k).
PolicyUpdateResult update_policy(MlpParams& theta, KfacState& kfac, const PolicyObjectiveData& data,
                                 const TrainerConfig& cfg, std::uint64_t iteration = 0);

/// Owns the mutable training state and runs one outer iteration at a time.
class Trainer {
 public:
  Trainer(TrainerConfig cfg, std::unique_ptr<Environment> env);

  bool done() const { return timesteps_ >= cfg_.max_timesteps; }
  TrainLogRecord iterate();

  const TrainerConfig& config() const { return cfg_; }
  const Environment& env() const { return *env_; }
  const MlpParams& policy() const { return theta_; }
  const MlpParams& value() const { return psi_; }
  const ObsNormalizer& normalizer() const { return normalizer_; }
  const PolicyReplayBuffer& buffer() const { return buffer_; }
  std::size_t timesteps() const { return timesteps_; }
  std::size_t iteration() const { return iteration_; }
  Checkpoint checkpoint() const { return {theta_, psi_, normalizer_}; }

 private:
  TrainerConfig cfg_;
  std::unique_ptr<Environment> env_;
  MlpParams theta_;
  MlpParams psi_;
  ObsNormalizer normalizer_;
  PolicyReplayBuffer buffer_;
  AdamState adam_;
  KfacState kfac_;
  std::size_t timesteps_ = 0;
  std::size_t iteration_ = 0;
};

struct RunHooks {
  /// Called after every outer iteration.
  std::function<void(const Trainer&, const TrainLogRecord&)> on_record;
  /// Called with the trainer state when a stage throws, before rethrowing.
  std::function<void(const Trainer&, const std::exception&)> on_abort;
};

/// Outer loop until max_timesteps. The environment comes from make_env.
std::vector<TrainLogRecord> run(const TrainerConfig& cfg, const std::string& env_name, const RunHooks& hooks = {});
std::vector<TrainLogRecord> run(const TrainerConfig& cfg, std::unique_ptr<Environment> env,
                                const RunHooks& hooks = {});

}  // namespace rtrl
