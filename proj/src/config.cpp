#include "rtrl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "rtrl/error.hpp"

namespace rtrl::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + expected);
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) bad_value(key, v, "a nonnegative integer");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty()) bad_value(key, v, "a nonnegative integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  if (v.empty()) bad_value(key, v, "a real number");
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size()) bad_value(key, v, "a real number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean (true/false)");
}

std::string fmt_real(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return ec == std::errc() ? std::string(buf, ptr) : std::to_string(x);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define RTRL_COUNT(key, field, help)                                                                   \
  Key {                                                                                                \
    key, help, [](ExperimentConfig& c, const std::string& v) { c.field = parse_count(key, v); },      \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                             \
  }
#define RTRL_REAL(key, field, help)                                                                    \
  Key {                                                                                                \
    key, help, [](ExperimentConfig& c, const std::string& v) { c.field = parse_real(key, v); },       \
        [](const ExperimentConfig& c) { return fmt_real(c.field); }                                   \
  }
#define RTRL_BOOL(key, field, help)                                                                    \
  Key {                                                                                                \
    key, help, [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(key, v); },       \
        [](const ExperimentConfig& c) { return fmt_bool(c.field); }                                   \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      RTRL_COUNT("timesteps-per-batch", trainer.timesteps_per_batch, "minimum steps collected per iteration"),
      RTRL_REAL("vf-step-size", trainer.vf_step_size, "Adam step size of the value fit"),
      RTRL_REAL("pl-step-size", trainer.pl_step_size, "policy step size"),
      RTRL_REAL("delta", trainer.delta, "trust-region radius"),
      RTRL_COUNT("n-iter-vf-update", trainer.n_iter_vf_update, "value fit iterations per outer iteration"),
      RTRL_COUNT("n-iter-pl-update", trainer.n_iter_pl_update, "policy steps per outer iteration"),
      RTRL_COUNT("rbp-capacity", trainer.rbp_capacity, "policies kept in the replay buffer"),
      RTRL_COUNT("max-timesteps", trainer.max_timesteps, "stop after this many environment steps"),
      RTRL_REAL("min-cov-el", trainer.min_cov_el, "lower variance bound"),
      RTRL_REAL("max-cov-el", trainer.max_cov_el, "upper variance bound"),
      RTRL_REAL("gamma", trainer.gamma, "discount in [0, 1)"),
      RTRL_REAL("lambda", trainer.lambda, "GAE parameter in [0, 1]"),
      RTRL_REAL("alpha", trainer.alpha, "barrier weight"),
      Key{"seed", "master seed",
          [](ExperimentConfig& c, const std::string& v) { c.trainer.seed = parse_u64("seed", v); },
          [](const ExperimentConfig& c) { return std::to_string(c.trainer.seed); }},
      Key{"env", "point_mass | pendulum | chain | tabular:<path>",
          [](ExperimentConfig& c, const std::string& v) { c.env = v; },
          [](const ExperimentConfig& c) { return c.env; }},
      Key{"output-dir", "run directory (falls back to RTRL_OUTPUT_DIR)",
          [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
          [](const ExperimentConfig& c) { return c.output_dir; }},
      RTRL_COUNT("checkpoint-interval", checkpoint_interval, "iterations between checkpoints (0 = off)"),
      RTRL_COUNT("worker-count", trainer.workers, "concurrent rollout episodes and kernel threads"),
      RTRL_BOOL("normalize-advantages", trainer.normalize_advantages, "standardize advantages per update"),
      Key{"weighting", "uniform-policy | uniform-step",
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "uniform-policy")
              c.trainer.weighting = PolicyWeighting::kUniformPolicy;
            else if (v == "uniform-step")
              c.trainer.weighting = PolicyWeighting::kUniformStep;
            else
              bad_value("weighting", v, "uniform-policy or uniform-step");
          },
          [](const ExperimentConfig& c) {
            return std::string(c.trainer.weighting == PolicyWeighting::kUniformStep ? "uniform-step"
                                                                                    : "uniform-policy");
          }},
      Key{"kl-states", "buffer | newest",
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "buffer")
              c.trainer.kl_newest_only = false;
            else if (v == "newest")
              c.trainer.kl_newest_only = true;
            else
              bad_value("kl-states", v, "buffer or newest");
          },
          [](const ExperimentConfig& c) { return std::string(c.trainer.kl_newest_only ? "newest" : "buffer"); }},
      RTRL_BOOL("obs-normalization", trainer.obs_normalization, "running observation normalization"),
      RTRL_REAL("kfac-damping", trainer.kfac_damping, "K-FAC damping eta"),
      RTRL_REAL("kfac-decay", trainer.kfac_decay, "K-FAC moving-average decay"),
      Key{"kfac-mode", "factored | exact",
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "factored")
              c.trainer.kfac_mode = KfacDamping::kFactored;
            else if (v == "exact")
              c.trainer.kfac_mode = KfacDamping::kExact;
            else
              bad_value("kfac-mode", v, "factored or exact");
          },
          [](const ExperimentConfig& c) {
            return std::string(c.trainer.kfac_mode == KfacDamping::kExact ? "exact" : "factored");
          }},
      RTRL_REAL("kl-clip", trainer.kl_clip, "bound on lr^2 g^T F^-1 g per inner step (<= 0 disables)"),
      RTRL_REAL("grad-norm-cap", trainer.grad_norm_cap, "cap on the natural-gradient norm (<= 0 disables)"),
      RTRL_BOOL("overwrite-buffer", trainer.overwrite_buffer, "replace the buffer each iteration"),
      RTRL_BOOL("debug-dump", debug_dump, "write buffer contents every iteration"),
      RTRL_COUNT("eval-episodes", trainer.eval_episodes, "mean-action episodes after each iteration"),
      RTRL_BOOL("record-wall-clock", record_wall_clock, "write real wall_ms into progress.csv"),
  };
  return k;
}

#undef RTRL_COUNT
#undef RTRL_REAL
#undef RTRL_BOOL

const Key& find_key(const std::string& name) {
  for (const Key& k : keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  trainer.validate();
  if (!is_known_env_name(env)) throw ConfigError("env: unknown environment '" + env + "'");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const Key& k : keys()) n.push_back(k.name);
    return n;
  }();
  return names;
}

bool is_config_key(const std::string& key) {
  for (const Key& k : keys())
    if (k.name == key) return true;
  return false;
}

std::string config_help(const std::string& key) { return find_key(key).help; }

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, trim(value));
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in, const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!is_config_key(key))
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown config key '" + key + "'");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  for (const auto& [k, v] : parse_config_text(in, path)) set_config_value(cfg, k, v);
}

ExperimentConfig build_config(const std::string& config_file,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  ExperimentConfig cfg;
  if (!config_file.empty()) apply_config_file(cfg, config_file);
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  cfg.validate();
  return cfg;
}

void echo_config(std::ostream& out, const ExperimentConfig& cfg) {
  for (const Key& k : keys()) out << k.name << " = " << k.get(cfg) << '\n';
}

std::string format_real(double x) { return fmt_real(x); }

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("RTRL_OUTPUT_DIR"); env && *env) return env;
  return "rtrl-out";
}

}  // namespace rtrl::cli
