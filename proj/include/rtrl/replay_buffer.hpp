#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <vector>

#include "rtrl/env.hpp"
#include "rtrl/nets.hpp"

namespace rtrl {

/// One episode plus the generating policy's per-step outputs.
struct Path {
  std::vector<Vec> states;
  std::vector<Vec> actions;  // as sampled, before clipping
  Vec rewards;
  Vec final_state;           // s_T, the state after the last action
  bool terminated = false;   // task-level termination (bootstrap 0)
  bool time_limit = false;   // cut by the horizon (bootstrap V(s_T))
  std::vector<GaussianHead> heads;
  Vec log_probs;

  std::size_t size() const { return rewards.size(); }
  double total_reward() const;
};

struct PolicySnapshot {
  std::uint64_t id = 0;
  MlpParams params;
  ObsNormalizer normalizer;
};

struct PolicyRecord {
  PolicySnapshot snapshot;
  std::vector<Path> paths;
  std::size_t total_steps = 0;

  /// Throws ConfigError if `paths` is empty.
  static PolicyRecord make(PolicySnapshot snapshot, std::vector<Path> paths);
  std::uint64_t policy_id() const { return snapshot.id; }
};

struct StepView {
  std::uint64_t policy_id;
  std::size_t path_index;
  std::size_t step_index;
  Transition transition;
  double cached_log_prob;
};

enum class PolicyWeighting { kUniformPolicy, kUniformStep };

/// FIFO of the most recent `capacity` policies and their paths.
///
/// The trainer mutates the buffer only between read phases; concurrent
/// readers of a const buffer need no synchronization.
class PolicyReplayBuffer {
 public:
  explicit PolicyReplayBuffer(std::size_t capacity);

  /// Appends and evicts the oldest record when over capacity. Ids must be
  /// strictly increasing (LogicError otherwise).
  void push(PolicyRecord record);
  /// Drops every stored record, then stores `record`.
  void overwrite(PolicyRecord record);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::size_t total_steps() const;
  const std::deque<PolicyRecord>& records() const { return records_; }
  const PolicyRecord& newest() const { return records_.back(); }

  /// Every stored step, ordered by policy id, then path, then step.
  std::vector<StepView> iter_steps() const;
  /// p(pi_n): uniform over stored policies.
  Vec policy_weights() const;
  /// Per-step weights in iter_steps order, summing to one. Uniform-policy
  /// splits each policy's mass evenly over its steps; uniform-step gives
  /// every stored step the same weight.
  Vec step_weights(PolicyWeighting weighting) const;

  /// One transition per line: policy path step | state | action | reward | logp | flags.
  void dump(std::ostream& out) const;

 private:
  std::size_t capacity_;
  std::deque<PolicyRecord> records_;
};

}  // namespace rtrl
