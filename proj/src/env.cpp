#include "rtrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "rtrl/error.hpp"

namespace rtrl {

Vec Environment::reset(RngStream& rng) {
  dynamics_rng_ = rng.derive(0xD1CE);
  steps_ = 0;
  active_ = true;
  state_ = do_reset(rng);
  return state_;
}

Transition Environment::step(std::span<const double> action) {
  if (action.size() != spec_.action_dim)
    throw ConfigError(spec_.name + ": action dimension " + std::to_string(action.size()) +
                      " != " + std::to_string(spec_.action_dim));
  if (!active_) throw LogicError(spec_.name + ": step() called without an active episode");
  Transition t;
  t.state = state_;
  t.action = clip_action(action);
  Outcome out = do_step(t.action);
  ++steps_;
  t.reward = out.reward;
  t.next_state = std::move(out.next_state);
  t.time_limit = !out.goal && steps_ >= spec_.max_episode_steps;
  t.terminal = out.goal || t.time_limit;
  if (!std::isfinite(t.reward)) throw NumericError(spec_.name + ": non-finite reward");
  state_ = t.next_state;
  active_ = !t.terminal;
  return t;
}

Vec Environment::clip_action(std::span<const double> action) const {
  Vec out(action.begin(), action.end());
  for (double& a : out) a = std::clamp(a, spec_.action_low, spec_.action_high);
  return out;
}

// ---- PointMass

PointMass::PointMass(PointMassOptions opts)
    : Environment(EnvSpec{"point_mass", 2, 2, opts.horizon, -opts.action_bound, opts.action_bound}),
      opts_(std::move(opts)) {
  if (opts_.fixed_start && opts_.fixed_start->size() != 2)
    throw ConfigError("point_mass: fixed start must be 2-D");
  if (opts_.horizon < 1) throw ConfigError("point_mass: horizon must be >= 1");
}

std::unique_ptr<Environment> PointMass::clone() const {
  return std::make_unique<PointMass>(opts_);
}

Vec PointMass::do_reset(RngStream& rng) {
  if (opts_.fixed_start) {
    pos_ = *opts_.fixed_start;
  } else {
    const double w = opts_.start_half_width;
    pos_ = {rng.uniform(-w, w), rng.uniform(-w, w)};
  }
  return pos_;
}

Environment::Outcome PointMass::do_step(std::span<const double> a) {
  double pos_cost = 0.0, act_cost = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    pos_[i] += opts_.dt * a[i];
    pos_cost += pos_[i] * pos_[i];
    act_cost += a[i] * a[i];
  }
  return {-pos_cost - opts_.action_cost * act_cost, pos_, false};
}

// ---- Pendulum

Pendulum::Pendulum(std::size_t horizon)
    : Environment(EnvSpec{"pendulum", 3, 1, horizon, -kMaxTorque, kMaxTorque}) {}

std::unique_ptr<Environment> Pendulum::clone() const {
  return std::make_unique<Pendulum>(spec().max_episode_steps);
}

Vec Pendulum::observe() const { return {std::cos(theta_), std::sin(theta_), theta_dot_}; }

Vec Pendulum::do_reset(RngStream& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  return observe();
}

Environment::Outcome Pendulum::do_step(std::span<const double> a) {
  const double u = a[0];
  // Angle wrapped to [-pi, pi) before costing.
  const double wrapped =
      std::fmod(std::fmod(theta_ + std::numbers::pi, 2 * std::numbers::pi) + 2 * std::numbers::pi,
                2 * std::numbers::pi) -
      std::numbers::pi;
  const double cost = wrapped * wrapped + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;
  double next_dot = theta_dot_ + (-3.0 * kGravity / (2.0 * kLength) * std::sin(theta_ + std::numbers::pi) +
                                  3.0 / (kMass * kLength * kLength) * u) *
                                     kDt;
  next_dot = std::clamp(next_dot, -kMaxSpeed, kMaxSpeed);
  theta_ += next_dot * kDt;
  theta_dot_ = next_dot;
  return {-cost, observe(), false};
}

// ---- TabularMdp

TabularMdp::TabularMdp(std::size_t states, std::size_t actions, double gamma)
    : n_states(states),
      n_actions(actions),
      transitions(states * actions * states, 0.0),
      rewards(states * actions, 0.0),
      initial(states, 0.0),
      discount(gamma) {}

void TabularMdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw ConfigError("tabular mdp: empty state/action set");
  if (transitions.size() != n_states * n_actions * n_states || rewards.size() != n_states * n_actions ||
      initial.size() != n_states)
    throw ConfigError("tabular mdp: table sizes do not match dimensions");
  if (!(discount >= 0.0 && discount < 1.0))
    throw ConfigError("tabular mdp: discount must be in [0, 1), got " + std::to_string(discount));
  auto check_dist = [](std::span<const double> d, const std::string& what) {
    double sum = 0.0;
    for (double x : d) {
      if (!(x >= 0.0)) throw ConfigError("tabular mdp: negative probability in " + what);
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw ConfigError("tabular mdp: " + what + " sums to " + std::to_string(sum));
  };
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a)
      check_dist(std::span<const double>(transitions).subspan((s * n_actions + a) * n_states, n_states),
                 "P(.|" + std::to_string(s) + "," + std::to_string(a) + ")");
  check_dist(initial, "initial distribution");
  if (!all_finite(rewards)) throw ConfigError("tabular mdp: non-finite reward");
}

TabularMdp make_chain_mdp(std::size_t states, std::size_t actions, double gamma) {
  if (states < 2 || actions < 2) throw ConfigError("chain mdp needs >= 2 states and actions");
  TabularMdp m(states, actions, gamma);
  for (std::size_t s = 0; s < states; ++s) {
    const std::size_t left = s == 0 ? 0 : s - 1;
    const std::size_t right = s + 1 == states ? s : s + 1;
    for (std::size_t a = 0; a < actions; ++a) {
      const std::size_t target = a == 1 ? right : (a == 0 ? left : s);
      m.p(s, a, target) += 0.9;
      m.p(s, a, s) += 0.1;
    }
    m.r(s, 0) = s == 0 ? 0.05 : 0.0;
    m.r(s, 1) = s + 1 == states ? 1.0 : 0.0;
  }
  m.initial[0] = 1.0;
  m.validate();
  return m;
}

TabularMdp make_random_mdp(std::size_t states, std::size_t actions, double gamma, RngStream& rng) {
  TabularMdp m(states, actions, gamma);
  auto fill_dist = [&](std::span<double> d) {
    double sum = 0.0;
    for (double& x : d) sum += (x = -std::log(rng.uniform()));
    for (double& x : d) x /= sum;
    // Renormalize once more so the row sum is 1 to the last bit where possible.
    double resid = 1.0;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) resid -= d[i];
    d.back() = std::max(0.0, resid);
  };
  for (std::size_t sa = 0; sa < states * actions; ++sa)
    fill_dist(std::span<double>(m.transitions).subspan(sa * states, states));
  for (double& r : m.rewards) r = rng.uniform(-1.0, 1.0);
  fill_dist(m.initial);
  m.validate();
  return m;
}

TabularMdp parse_tabular_mdp(std::istream& in) {
  std::size_t states = 0, actions = 0;
  double gamma = -1.0;
  Vec initial;
  struct Row {
    std::size_t s, a, next;
    double prob, reward;
    int line;
  };
  std::vector<Row> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head)) continue;
    auto fail = [&](const std::string& msg) {
      throw ConfigError("tabular file line " + std::to_string(lineno) + ": " + msg);
    };
    if (head == "states") {
      if (!(ls >> states)) fail("expected state count");
    } else if (head == "actions") {
      if (!(ls >> actions)) fail("expected action count");
    } else if (head == "discount") {
      if (!(ls >> gamma)) fail("expected discount");
    } else if (head == "initial") {
      double x;
      while (ls >> x) initial.push_back(x);
    } else {
      Row r{};
      r.line = lineno;
      std::istringstream rs(line);
      if (!(rs >> r.s >> r.a >> r.next >> r.prob >> r.reward))
        fail("expected `s a s' prob reward`");
      rows.push_back(r);
    }
  }
  if (states == 0 || actions == 0) throw ConfigError("tabular file: missing states/actions");
  if (gamma < 0.0) throw ConfigError("tabular file: missing discount");
  TabularMdp m(states, actions, gamma);
  if (initial.empty()) {
    m.initial[0] = 1.0;
  } else if (initial.size() != states) {
    throw ConfigError("tabular file: initial distribution has " + std::to_string(initial.size()) +
                      " entries, expected " + std::to_string(states));
  } else {
    m.initial = initial;
  }
  for (const Row& r : rows) {
    if (r.s >= states || r.next >= states || r.a >= actions)
      throw ConfigError("tabular file line " + std::to_string(r.line) + ": index out of range");
    m.p(r.s, r.a, r.next) += r.prob;
    m.r(r.s, r.a) += r.prob * r.reward;
  }
  m.validate();
  return m;
}

TabularMdp load_tabular_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tabular file '" + path + "'");
  return parse_tabular_mdp(in);
}

void write_tabular_mdp(std::ostream& out, const TabularMdp& mdp) {
  out.precision(17);
  out << "states " << mdp.n_states << "\nactions " << mdp.n_actions << "\ndiscount " << mdp.discount
      << "\ninitial";
  for (double p : mdp.initial) out << ' ' << p;
  out << "\n# s a s' prob reward\n";
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      for (std::size_t n = 0; n < mdp.n_states; ++n)
        if (mdp.p(s, a, n) > 0.0)
          out << s << ' ' << a << ' ' << n << ' ' << mdp.p(s, a, n) << ' ' << mdp.r(s, a) << '\n';
}

// ---- TabularEnv

TabularEnv::TabularEnv(TabularMdp mdp, std::size_t horizon, std::string name)
    : Environment(EnvSpec{std::move(name), mdp.n_states, 1, horizon, 0.0,
                          static_cast<double>(mdp.n_actions - 1)}),
      mdp_(std::move(mdp)) {
  mdp_.validate();
}

std::unique_ptr<Environment> TabularEnv::clone() const {
  return std::make_unique<TabularEnv>(mdp_, spec().max_episode_steps, spec().name);
}

Vec TabularEnv::one_hot(std::size_t s) const {
  Vec v(mdp_.n_states, 0.0);
  v[s] = 1.0;
  return v;
}

namespace {
std::size_t sample_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // u beyond the accumulated mass (rounding); pick the last supported index.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}
}  // namespace

Vec TabularEnv::do_reset(RngStream& rng) {
  state_ = sample_index(mdp_.initial, rng.uniform());
  return one_hot(state_);
}

Environment::Outcome TabularEnv::do_step(std::span<const double> a) {
  const auto action = static_cast<std::size_t>(std::lround(a[0]));
  const double reward = mdp_.r(state_, action);
  const std::span<const double> row(mdp_.transitions.data() + (state_ * mdp_.n_actions + action) * mdp_.n_states,
                                    mdp_.n_states);
  state_ = sample_index(row, dynamics_rng().uniform());
  return {reward, one_hot(state_), false};
}

// ---- factory

bool is_known_env_name(const std::string& name) {
  return name == "point_mass" || name == "pendulum" || name == "chain" ||
         (name.rfind("tabular:", 0) == 0 && name.size() > 8);
}

std::unique_ptr<Environment> make_env(const std::string& name) {
  if (name == "point_mass") return std::make_unique<PointMass>();
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "chain") return std::make_unique<TabularEnv>(make_chain_mdp());
  if (name.rfind("tabular:", 0) == 0 && name.size() > 8)
    return std::make_unique<TabularEnv>(load_tabular_mdp(name.substr(8)), 50, name);
  throw ConfigError("unknown environment '" + name + "' (expected point_mass, pendulum, chain, tabular:<file>)");
}

}  // namespace rtrl
