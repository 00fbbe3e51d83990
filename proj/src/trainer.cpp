#include "rtrl/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "rtrl/error.hpp"
#include "rtrl/kernels.hpp"

namespace rtrl {

void TrainerConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* range) {
    if (!ok) throw ConfigError(std::string(key) + " must be " + range);
  };
  require(timesteps_per_batch >= 1, "timesteps-per-batch", ">= 1");
  require(vf_step_size > 0.0 && std::isfinite(vf_step_size), "vf-step-size", "> 0");
  require(pl_step_size > 0.0 && std::isfinite(pl_step_size), "pl-step-size", "> 0");
  require(delta > 0.0 && std::isfinite(delta), "delta", "> 0");
  require(alpha > 0.0 && std::isfinite(alpha), "alpha", "> 0");
  require(rbp_capacity >= 1, "rbp-capacity", ">= 1");
  require(max_timesteps >= 1, "max-timesteps", ">= 1");
  require(min_cov_el > 0.0, "min-cov-el", "> 0");
  require(max_cov_el > min_cov_el && std::isfinite(max_cov_el), "max-cov-el", "greater than min-cov-el");
  require(gamma >= 0.0 && gamma < 1.0, "gamma", "in [0, 1)");
  require(lambda >= 0.0 && lambda <= 1.0, "lambda", "in [0, 1]");
  require(kfac_damping >= 0.0 && std::isfinite(kfac_damping), "kfac-damping", ">= 0");
  require(kfac_decay >= 0.0 && kfac_decay < 1.0, "kfac-decay", "in [0, 1)");
  require(std::isfinite(grad_norm_cap), "grad-norm-cap", "finite (<= 0 disables)");
  require(std::isfinite(kl_clip), "kl-clip", "finite (<= 0 disables)");
  require(workers >= 1, "worker-count", ">= 1");
}

// ---- Stage 1

namespace {

Path run_episode(const Environment& prototype, const MlpParams& theta, const ObsNormalizer& normalizer,
                 RngStream rng, CovBounds bounds) {
  std::unique_ptr<Environment> env = prototype.clone();
  Path path;
  Vec obs = env->reset(rng);
  while (true) {
    const GaussianHead head = policy_forward(theta, normalizer.normalize(obs), bounds);
    Vec action = sample_action(head, rng);
    const double lp = log_prob(head, action);
    Transition tr = env->step(action);
    path.states.push_back(std::move(obs));
    path.actions.push_back(std::move(action));
    path.rewards.push_back(tr.reward);
    path.heads.push_back(head);
    path.log_probs.push_back(lp);
    if (tr.terminal) {
      path.final_state = std::move(tr.next_state);
      path.time_limit = tr.time_limit;
      path.terminated = !tr.time_limit;
      break;
    }
    obs = std::move(tr.next_state);
  }
  return path;
}

template <class Fn>
std::vector<Path> run_in_chunks(std::size_t workers, std::size_t count_hint, Fn&& episode,
                                const std::function<bool(const std::vector<Path>&)>& enough) {
  std::vector<Path> out;
  std::size_t next = 0;
  while (!enough(out) && next < count_hint) {
    const std::size_t w = workers;
    std::vector<Path> chunk(w);
    std::vector<std::exception_ptr> errors(w);
#pragma omp parallel for num_threads(static_cast<int>(w)) schedule(static, 1) if (w > 1)
    for (std::size_t i = 0; i < w; ++i) {
      try {
        chunk[i] = episode(next + i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (std::size_t i = 0; i < w && !enough(out) && next + i < count_hint; ++i) {
      if (errors[i]) std::rethrow_exception(errors[i]);
      out.push_back(std::move(chunk[i]));
    }
    next += w;
  }
  return out;
}

}  // namespace

std::vector<Path> collect_paths(const Environment& prototype, const MlpParams& theta,
                                const ObsNormalizer& normalizer, const CollectOptions& opts) {
  if (opts.min_steps < 1) throw ConfigError("collect_paths: min-steps must be >= 1");
  if (opts.workers < 1) throw ConfigError("collect_paths: worker count must be >= 1");
  std::size_t total = 0;
  std::size_t counted = 0;
  auto enough = [&](const std::vector<Path>& paths) {
    for (; counted < paths.size(); ++counted) total += paths[counted].size();
    return total >= opts.min_steps;
  };
  auto episode = [&](std::size_t j) {
    RngStream rng(opts.seed, stream_id(StreamPurpose::kRollout, opts.iteration, j));
    return run_episode(prototype, theta, normalizer, rng, opts.bounds);
  };
  return run_in_chunks(opts.workers, std::numeric_limits<std::size_t>::max(), episode, enough);
}

Vec evaluate_mean_action(const Environment& prototype, const MlpParams& theta, const ObsNormalizer& normalizer,
                         std::size_t episodes, std::uint64_t seed, std::uint64_t iteration, CovBounds bounds) {
  Vec returns;
  for (std::size_t j = 0; j < episodes; ++j) {
    std::unique_ptr<Environment> env = prototype.clone();
    RngStream rng(seed, stream_id(StreamPurpose::kEval, iteration, j));
    Vec obs = env->reset(rng);
    double total = 0.0;
    while (true) {
      const GaussianHead head = policy_forward(theta, normalizer.normalize(obs), bounds);
      Transition tr = env->step(head.mean);
      total += tr.reward;
      if (tr.terminal) break;
      obs = std::move(tr.next_state);
    }
    returns.push_back(total);
  }
  return returns;
}

// ---- Stage 3

ValueFitData make_value_fit_data(const PolicyReplayBuffer& buffer, const ObsNormalizer& normalizer, double gamma) {
  const std::size_t n = buffer.total_steps();
  if (n == 0) throw ConfigError("value fit: empty replay buffer");
  const std::size_t sd = buffer.records().front().paths.front().states.front().size();
  Mat raw(n, sd);
  ValueFitData data;
  data.targets.reserve(n);
  std::size_t row = 0;
  for (const PolicyRecord& rec : buffer.records())
    for (const Path& path : rec.paths) {
      for (const Vec& s : path.states) std::copy(s.begin(), s.end(), raw.row(row++).begin());
      const Vec t = value_targets(path.rewards, gamma);
      data.targets.insert(data.targets.end(), t.begin(), t.end());
    }
  data.states = normalizer.normalize(raw);
  return data;
}

double fit_value_function(MlpParams& psi, AdamState& adam, const ValueFitData& data, std::size_t iterations,
                          double lr) {
  for (std::size_t it = 0; it < iterations; ++it) {
    auto [loss, grads] = backprop_value(psi, data.states, data.targets);
    if (!std::isfinite(loss)) throw NumericError("value fit: non-finite loss at iteration " + std::to_string(it));
    adam_step(adam, psi, grads, lr, StepDirection::kDescend);
  }
  const Vec pred = value_forward_batch(psi, data.states);
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - data.targets[i];
    loss += e * e;
  }
  if (!std::isfinite(loss)) throw NumericError("value fit: non-finite loss after update");
  return loss;
}

// ---- Stage 4

Vec buffer_advantages(const PolicyReplayBuffer& buffer, const MlpParams& psi, const ObsNormalizer& normalizer,
                      const EstimatorConfig& est, bool normalize) {
  est.validate();
  std::size_t rows = 0;
  for (const PolicyRecord& rec : buffer.records())
    for (const Path& path : rec.paths) rows += path.size() + 1;
  if (rows == 0) return {};
  const std::size_t sd = buffer.records().front().paths.front().states.front().size();
  Mat raw(rows, sd);
  std::size_t row = 0;
  for (const PolicyRecord& rec : buffer.records())
    for (const Path& path : rec.paths) {
      for (const Vec& s : path.states) std::copy(s.begin(), s.end(), raw.row(row++).begin());
      std::copy(path.final_state.begin(), path.final_state.end(), raw.row(row++).begin());
    }
  const Vec v = value_forward_batch(psi, normalizer.normalize(raw));

  Vec adv;
  adv.reserve(buffer.total_steps());
  std::size_t offset = 0;
  for (const PolicyRecord& rec : buffer.records())
    for (const Path& path : rec.paths) {
      const std::size_t t = path.size();
      Vec values(v.begin() + static_cast<std::ptrdiff_t>(offset),
                 v.begin() + static_cast<std::ptrdiff_t>(offset + t + 1));
      if (path.terminated) values[t] = 0.0;
      const Vec a = gae_shared(path.rewards, values, est.gamma, est.lambda);
      adv.insert(adv.end(), a.begin(), a.end());
      offset += t + 1;
    }
  if (normalize) normalize_advantages(adv);
  return adv;
}

// ---- Stage 5

namespace {

void apply_step(MlpParams& theta, const Gradients& step, double lr) {
  for (std::size_t l = 0; l < theta.layers.size(); ++l) {
    axpy(lr, step.layers[l].weight, theta.layers[l].weight);
    auto& b = theta.layers[l].bias;
    const auto& s = step.layers[l].bias;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += lr * s[i];
  }
}

}  // namespace

PolicyUpdateResult update_policy(MlpParams& theta, KfacState& kfac, const PolicyObjectiveData& data,
                                 const TrainerConfig& cfg, std::uint64_t iteration) {
  const CovBounds bounds = cfg.cov_bounds();
  const BarrierConfig barrier = cfg.barrier();
  PolicyUpdateResult res;
  for (std::size_t it = 0; it < cfg.n_iter_pl_update; ++it) {
    RngStream fisher_rng(cfg.seed, stream_id(StreamPurpose::kFisher, iteration, it));
    PolicyEvaluation ev = evaluate_policy_objective(theta, data, barrier, bounds, &fisher_rng);
    if (ev.barrier_active) ++res.barrier_steps;
    kfac_accumulate(kfac, ev.batch.trace.inputs, ev.fisher_output_grads);
    Gradients step = kfac_precondition(kfac, ev.gradient);
    const double lr = cfg.pl_step_size;
    const double quad = lr * lr * dot(ev.gradient, step);
    const double len = norm(step);
    if (!std::isfinite(quad) || !std::isfinite(len))
      throw NumericError("policy update: non-finite step at inner iteration " + std::to_string(it));
    double shrink = 1.0;
    if (cfg.kl_clip > 0.0 && quad > cfg.kl_clip) shrink = std::sqrt(cfg.kl_clip / quad);
    if (cfg.grad_norm_cap > 0.0 && len * shrink > cfg.grad_norm_cap) shrink = cfg.grad_norm_cap / len;
    if (shrink < 1.0) scale(step, shrink);
    apply_step(theta, step, lr);
  }
  for (const Dense& d : theta.layers)
    if (!all_finite(d.weight) || !all_finite(d.bias)) throw NumericError("policy update: non-finite parameters");

  const PolicyBatch b = policy_forward_batch(theta, data.states, bounds);
  const std::size_t n = b.size(), d = b.mean.cols();
  res.min_cov = std::numeric_limits<double>::infinity();
  res.max_cov = -std::numeric_limits<double>::infinity();
  double kl = 0.0, ent = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    GaussianHead old_head{Vec(data.old_mean.row(i).begin(), data.old_mean.row(i).end()),
                          Vec(data.old_cov.row(i).begin(), data.old_cov.row(i).end())};
    const GaussianHead head = b.head(i);
    if (data.kl_weights[i] != 0.0) kl += data.kl_weights[i] * gaussian_kl(old_head, head, bounds.min);
    ent += entropy(head);
    for (std::size_t j = 0; j < d; ++j) {
      res.min_cov = std::min(res.min_cov, head.cov[j]);
      res.max_cov = std::max(res.max_cov, head.cov[j]);
    }
  }
  res.kl_after = kl;
  res.entropy = ent / static_cast<double>(n);
  return res;
}

// ---- outer loop

Trainer::Trainer(TrainerConfig cfg, std::unique_ptr<Environment> env)
    : cfg_((cfg.validate(), kernels::tune_allocator(), cfg)),
      env_(std::move(env)),
      theta_([&] {
        RngStream rng(cfg_.seed, stream_id(StreamPurpose::kInit, 0));
        return init_policy_params(env_->spec().state_dim, env_->spec().action_dim, rng);
      }()),
      psi_([&] {
        RngStream rng(cfg_.seed, stream_id(StreamPurpose::kInit, 1));
        return init_value_params(env_->spec().state_dim, rng);
      }()),
      normalizer_(env_->spec().state_dim),
      buffer_(cfg_.rbp_capacity),
      adam_(psi_),
      kfac_(theta_, KfacConfig{cfg_.kfac_damping, cfg_.kfac_decay, cfg_.kfac_mode}) {}

TrainLogRecord Trainer::iterate() {
  const auto t0 = std::chrono::steady_clock::now();
  const CovBounds bounds = cfg_.cov_bounds();
  const std::uint64_t iter = ++iteration_;

  // Stage 1
  std::vector<Path> paths =
      collect_paths(*env_, theta_, normalizer_, {cfg_.timesteps_per_batch, cfg_.seed, iter, cfg_.workers, bounds});
  TrainLogRecord rec;
  rec.iteration = iter;
  rec.episodes = paths.size();
  std::size_t collected = 0;
  Vec returns;
  for (const Path& p : paths) {
    collected += p.size();
    returns.push_back(p.total_reward());
  }
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(returns.size());
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  rec.mean_return = mean;
  rec.std_return = std::sqrt(var / static_cast<double>(returns.size()));

  PolicySnapshot snapshot{iter, theta_, normalizer_};
  if (cfg_.obs_normalization) {
    Mat batch(collected, env_->spec().state_dim);
    std::size_t row = 0;
    for (const Path& p : paths)
      for (const Vec& s : p.states) std::copy(s.begin(), s.end(), batch.row(row++).begin());
    normalizer_.update(batch);
  }

  // Stage 2
  PolicyRecord record = PolicyRecord::make(std::move(snapshot), std::move(paths));
  if (cfg_.overwrite_buffer)
    buffer_.overwrite(std::move(record));
  else
    buffer_.push(std::move(record));

  // Stage 3
  const ValueFitData vf = make_value_fit_data(buffer_, normalizer_, cfg_.gamma);
  const double sse = fit_value_function(psi_, adam_, vf, cfg_.n_iter_vf_update, cfg_.vf_step_size);
  rec.value_loss = sse / static_cast<double>(vf.targets.size());

  // Stage 4
  const Vec adv = buffer_advantages(buffer_, psi_, normalizer_, {cfg_.gamma, cfg_.lambda}, cfg_.normalize_advantages);

  // Stage 5
  const PolicyObjectiveData data =
      make_policy_objective_data(buffer_, adv, normalizer_, theta_, cfg_.weighting, cfg_.kl_newest_only, bounds);
  const PolicyUpdateResult up = update_policy(theta_, kfac_, data, cfg_, iter);
  rec.kl = up.kl_after;
  rec.entropy = up.entropy;
  rec.min_cov = up.min_cov;
  rec.max_cov = up.max_cov;
  rec.barrier_steps = up.barrier_steps;

  timesteps_ += collected;
  rec.timesteps = timesteps_;
  if (cfg_.eval_episodes > 0) {
    const Vec ev = evaluate_mean_action(*env_, theta_, normalizer_, cfg_.eval_episodes, cfg_.seed, iter, bounds);
    double s = 0.0;
    for (double r : ev) s += r;
    rec.eval_return = s / static_cast<double>(ev.size());
  }
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<TrainLogRecord> run(const TrainerConfig& cfg, std::unique_ptr<Environment> env, const RunHooks& hooks) {
  Trainer trainer(cfg, std::move(env));
  std::vector<TrainLogRecord> log;
  while (!trainer.done()) {
    try {
      log.push_back(trainer.iterate());
    } catch (const std::exception& e) {
      if (hooks.on_abort) hooks.on_abort(trainer, e);
      throw;
    }
    if (hooks.on_record) hooks.on_record(trainer, log.back());
  }
  return log;
}

std::vector<TrainLogRecord> run(const TrainerConfig& cfg, const std::string& env_name, const RunHooks& hooks) {
  return run(cfg, make_env(env_name), hooks);
}

}  // namespace rtrl
