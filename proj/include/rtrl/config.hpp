#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rtrl/trainer.hpp"

namespace rtrl::cli {

struct ExperimentConfig {
  TrainerConfig trainer;
  std::string env = "point_mass";
  std::string output_dir;  // empty: RTRL_OUTPUT_DIR, then "rtrl-out"
  std::size_t checkpoint_interval = 10;  // 0 disables periodic checkpoints
  bool debug_dump = false;
  /// When false the wall_ms column is written as 0 so progress.csv is
  /// byte-reproducible; real timings always go to timing.csv.
  bool record_wall_clock = false;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Every accepted key, in echo order.
const std::vector<std::string>& config_keys();
bool is_config_key(const std::string& key);
std::string config_help(const std::string& key);

/// Parses `value` into the field behind `key`; ConfigError names the key.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// Flat `key = value` lines, `#` comments, blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_config_text(std::istream& in, const std::string& source);
void apply_config_file(ExperimentConfig& cfg, const std::string& path);

/// Defaults, then the file (if any), then `overrides` in order. Validated.
ExperimentConfig build_config(const std::string& config_file,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

/// `key = value` per line in config_keys() order.
void echo_config(std::ostream& out, const ExperimentConfig& cfg);

std::string resolve_output_dir(const ExperimentConfig& cfg);

/// Shortest decimal text that parses back to exactly `x`.
std::string format_real(double x);

}  // namespace rtrl::cli
