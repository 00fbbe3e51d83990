#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "rtrl/rng.hpp"
#include "rtrl/tensor.hpp"

namespace rtrl {

struct EnvSpec {
  std::string name;
  std::size_t state_dim = 1;
  std::size_t action_dim = 1;
  std::size_t max_episode_steps = 1;
  double action_low = -3.0;
  double action_high = 3.0;
};

/// `terminal` ends the episode for either reason; `time_limit` is set only
/// when the cut came from max_episode_steps rather than the task itself.
struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
  Vec next_state;
  bool terminal = false;
  bool time_limit = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }
  std::size_t episode_steps() const { return steps_; }
  bool episode_active() const { return active_; }

  /// Draws s0 from the initial distribution and zeroes the step counter.
  /// The stream also seeds any stochastic dynamics for the episode.
  Vec reset(RngStream& rng);
  /// Clips the action into the box, applies the dynamics and flags terminal
  /// on a goal condition or when the horizon is reached.
  Transition step(std::span<const double> action);
  Vec clip_action(std::span<const double> action) const;

  virtual std::unique_ptr<Environment> clone() const = 0;

 protected:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}

  virtual Vec do_reset(RngStream& rng) = 0;
  /// Returns (reward, next observation, goal reached).
  struct Outcome {
    double reward;
    Vec next_state;
    bool goal;
  };
  virtual Outcome do_step(std::span<const double> clipped_action) = 0;

  RngStream& dynamics_rng() { return dynamics_rng_; }

 private:
  EnvSpec spec_;
  std::size_t steps_ = 0;
  bool active_ = false;
  Vec state_;
  RngStream dynamics_rng_{0, 0};
};

struct PointMassOptions {
  std::size_t horizon = 200;
  double dt = 0.05;
  double action_cost = 0.1;
  double action_bound = 3.0;
  /// Start states are uniform in [-w, w]^2 unless `fixed_start` is set.
  double start_half_width = 1.0;
  std::optional<Vec> fixed_start;
};

/// 2-D point mass: s' = s + dt*a, reward -|s'|^2 - c|a|^2. No goal state.
class PointMass final : public Environment {
 public:
  explicit PointMass(PointMassOptions opts = {});
  std::unique_ptr<Environment> clone() const override;

 private:
  Vec do_reset(RngStream& rng) override;
  Outcome do_step(std::span<const double> a) override;

  PointMassOptions opts_;
  Vec pos_;
};

/// Torque-limited pendulum swing-up with observation [cos th, sin th, th_dot].
class Pendulum final : public Environment {
 public:
  explicit Pendulum(std::size_t horizon = 200);
  std::unique_ptr<Environment> clone() const override;

  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  double angle() const { return theta_; }

 private:
  Vec do_reset(RngStream& rng) override;
  Outcome do_step(std::span<const double> a) override;
  Vec observe() const;

  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

/// Finite MDP (S, A, P, r, rho0, gamma) with r(s, a) the expected reward.
struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  Vec transitions;  // P(s'|s,a) at [(s * n_actions + a) * n_states + s']
  Vec rewards;      // r(s,a) at [s * n_actions + a]
  Vec initial;      // rho0
  double discount = 0.9;

  TabularMdp() = default;
  TabularMdp(std::size_t states, std::size_t actions, double gamma);

  double& p(std::size_t s, std::size_t a, std::size_t next) {
    return transitions[(s * n_actions + a) * n_states + next];
  }
  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transitions[(s * n_actions + a) * n_states + next];
  }
  double& r(std::size_t s, std::size_t a) { return rewards[s * n_actions + a]; }
  double r(std::size_t s, std::size_t a) const { return rewards[s * n_actions + a]; }

  /// Throws ConfigError unless every P(.|s,a) and rho0 is a distribution
  /// (nonnegative, sums to 1 within 1e-12) and 0 <= gamma < 1.
  void validate() const;
};

/// Chain of `states` states; action 1 moves right w.p. 0.9, action 0 moves
/// left w.p. 0.9. Reward 1 for pushing right at the far end, 0.05 for
/// pushing left at the start. rho0 is a point mass on state 0.
TabularMdp make_chain_mdp(std::size_t states = 4, std::size_t actions = 2, double gamma = 0.9);

/// Random MDP with Dirichlet-like rows, rewards in [-1, 1] and random rho0.
TabularMdp make_random_mdp(std::size_t states, std::size_t actions, double gamma, RngStream& rng);

/// Plain-text table: directive lines `states N`, `actions M`, `discount g`,
/// `initial p_0 ... p_{N-1}`, then rows `s a s' prob reward`. `#` starts a
/// comment. r(s,a) is accumulated as the probability-weighted row reward.
TabularMdp parse_tabular_mdp(std::istream& in);
TabularMdp load_tabular_mdp(const std::string& path);
void write_tabular_mdp(std::ostream& out, const TabularMdp& mdp);

/// Simulates a TabularMdp with one-hot observations. The 1-D action is
/// rounded to the nearest action index inside [0, n_actions - 1].
class TabularEnv final : public Environment {
 public:
  explicit TabularEnv(TabularMdp mdp, std::size_t horizon = 50, std::string name = "chain");
  std::unique_ptr<Environment> clone() const override;

  const TabularMdp& mdp() const { return mdp_; }
  std::size_t current_state() const { return state_; }

 private:
  Vec do_reset(RngStream& rng) override;
  Outcome do_step(std::span<const double> a) override;
  Vec one_hot(std::size_t s) const;

  TabularMdp mdp_;
  std::size_t state_ = 0;
};

/// "point_mass", "pendulum", "chain" or "tabular:<path>". Throws ConfigError
/// for unknown names.
std::unique_ptr<Environment> make_env(const std::string& name);
bool is_known_env_name(const std::string& name);

}  // namespace rtrl
