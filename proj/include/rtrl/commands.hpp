#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rtrl/config.hpp"
#include "rtrl/trainer.hpp"

namespace rtrl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

inline constexpr const char* kArtifactVersion = "1.0.0";

/// Fixed column order of progress.csv.
inline constexpr const char* kProgressHeader =
    "iteration,timesteps,mean_return,std_return,kl,value_loss,entropy,wall_ms";

/// One progress.csv data row (no newline). wall_ms is written as 0 unless
/// `wall_clock` is set.
std::string progress_row(const TrainLogRecord& r, bool wall_clock);

/// Files written into a run directory.
struct RunFiles {
  std::string dir;
  std::string progress() const { return dir + "/progress.csv"; }
  std::string timing() const { return dir + "/timing.csv"; }
  std::string eval() const { return dir + "/eval.csv"; }
  std::string config() const { return dir + "/config.txt"; }
  std::string checkpoint() const { return dir + "/checkpoint.bin"; }
  std::string manifest() const { return dir + "/manifest.txt"; }
  std::string buffer_dump() const { return dir + "/buffer_dump.txt"; }
};

struct TrainOutcome {
  int exit_code = kExitOk;
  std::string status;  // completed | numeric-abort | error
  std::string message;
  std::vector<TrainLogRecord> log;
};

/// Runs one training job into `dir`, always leaving a manifest behind.
/// Progress lines go to `out` unless `quiet`.
TrainOutcome train_into(const ExperimentConfig& cfg, const std::string& dir, std::ostream& out, bool quiet = false);

int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
/// Empty selector or "all" runs every suite; exit 0 iff every check passes.
int cmd_verify(const std::vector<std::string>& suites, std::uint64_t seed, std::ostream& out, std::ostream& err);
/// Value i runs in <output>/<key>_<value> with seed + i.
int cmd_sweep(const ExperimentConfig& cfg, const std::string& key, const std::vector<std::string>& values,
              std::ostream& out, std::ostream& err);
/// `path` is a progress.csv, a run directory, or a sweep directory.
int cmd_summary(const std::string& path, std::ostream& out, std::ostream& err);

/// Unicode block sparkline, resampled to at most `width` cells.
std::string sparkline(std::span<const double> values, std::size_t width = 40);

/// Mean of the last min(10, n) mean_return values.
double final_return(const std::vector<TrainLogRecord>& log);

struct ProgressTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<double> column(const std::string& name) const;
};
ProgressTable read_progress(const std::string& path);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace rtrl::cli
