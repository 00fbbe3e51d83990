#include "rtrl/replay_buffer.hpp"

#include <ostream>

#include "rtrl/error.hpp"

namespace rtrl {

double Path::total_reward() const {
  double s = 0.0;
  for (double r : rewards) s += r;
  return s;
}

PolicyRecord PolicyRecord::make(PolicySnapshot snapshot, std::vector<Path> paths) {
  if (paths.empty()) throw ConfigError("policy record needs at least one path");
  PolicyRecord rec{std::move(snapshot), std::move(paths), 0};
  for (const auto& p : rec.paths) {
    if (p.size() == 0) throw ConfigError("policy record: empty path");
    rec.total_steps += p.size();
  }
  return rec;
}

PolicyReplayBuffer::PolicyReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ConfigError("replay buffer capacity must be >= 1");
}

void PolicyReplayBuffer::push(PolicyRecord record) {
  if (!records_.empty() && record.policy_id() <= records_.back().policy_id())
    throw LogicError("replay buffer: policy id " + std::to_string(record.policy_id()) +
                     " is not greater than stored id " + std::to_string(records_.back().policy_id()));
  records_.push_back(std::move(record));
  while (records_.size() > capacity_) records_.pop_front();
}

void PolicyReplayBuffer::overwrite(PolicyRecord record) {
  records_.clear();
  records_.push_back(std::move(record));
}

std::size_t PolicyReplayBuffer::total_steps() const {
  std::size_t n = 0;
  for (const auto& r : records_) n += r.total_steps;
  return n;
}

std::vector<StepView> PolicyReplayBuffer::iter_steps() const {
  std::vector<StepView> out;
  out.reserve(total_steps());
  for (const auto& rec : records_)
    for (std::size_t p = 0; p < rec.paths.size(); ++p) {
      const Path& path = rec.paths[p];
      for (std::size_t t = 0; t < path.size(); ++t) {
        const bool last = t + 1 == path.size();
        Transition tr{path.states[t], path.actions[t], path.rewards[t],
                      last ? path.final_state : path.states[t + 1], last && (path.terminated || path.time_limit),
                      last && path.time_limit};
        out.push_back({rec.policy_id(), p, t, std::move(tr), path.log_probs[t]});
      }
    }
  return out;
}

Vec PolicyReplayBuffer::policy_weights() const {
  if (records_.empty()) return {};
  return Vec(records_.size(), 1.0 / static_cast<double>(records_.size()));
}

Vec PolicyReplayBuffer::step_weights(PolicyWeighting weighting) const {
  Vec w;
  w.reserve(total_steps());
  const double n_total = static_cast<double>(total_steps());
  const double per_policy = 1.0 / static_cast<double>(records_.size());
  for (const auto& rec : records_) {
    const double each = weighting == PolicyWeighting::kUniformStep
                            ? 1.0 / n_total
                            : per_policy / static_cast<double>(rec.total_steps);
    w.insert(w.end(), rec.total_steps, each);
  }
  return w;
}

void PolicyReplayBuffer::dump(std::ostream& out) const {
  auto vec = [&](const Vec& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  };
  out << "# policy path step | state | action | reward | log_prob | terminal time_limit\n";
  for (const StepView& s : iter_steps()) {
    out << s.policy_id << ' ' << s.path_index << ' ' << s.step_index << " | ";
    vec(s.transition.state);
    out << " | ";
    vec(s.transition.action);
    out << " | " << s.transition.reward << " | " << s.cached_log_prob << " | " << s.transition.terminal << ' '
        << s.transition.time_limit << '\n';
  }
}

}  // namespace rtrl
