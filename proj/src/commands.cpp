#include "rtrl/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "rtrl/error.hpp"
#include "rtrl/kernels.hpp"
#include "rtrl/oracle.hpp"

namespace fs = std::filesystem;

namespace rtrl::cli {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_atomically(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
    if (!out) throw ConfigError("short write on '" + path + "'");
  }
  fs::rename(tmp, path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("output-dir: cannot write '" + path + "'");
  return out;
}

void prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw ConfigError("output-dir: cannot create '" + dir + "'" + (ec ? ": " + ec.message() : std::string()));
}

std::string manifest_text(const ExperimentConfig& cfg, const TrainOutcome& o, const std::string& start,
                          const std::string& end) {
  std::ostringstream m;
  m << "artifact_version = " << kArtifactVersion << '\n';
  m << "status = " << o.status << '\n';
  m << "exit_code = " << o.exit_code << '\n';
  if (!o.message.empty()) {
    std::string msg = o.message;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    m << "message = " << msg << '\n';
  }
  m << "seed = " << cfg.trainer.seed << '\n';
  m << "start_time = " << start << '\n';
  m << "end_time = " << end << '\n';
  m << "iterations = " << o.log.size() << '\n';
  m << "timesteps = " << (o.log.empty() ? 0 : o.log.back().timesteps) << '\n';
  if (!o.log.empty()) {
    double max_kl = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const TrainLogRecord& r : o.log) {
      max_kl = std::max(max_kl, r.kl);
      lo = std::min(lo, r.min_cov);
      hi = std::max(hi, r.max_cov);
    }
    m << "first_mean_return = " << format_real(o.log.front().mean_return) << '\n';
    m << "last_mean_return = " << format_real(o.log.back().mean_return) << '\n';
    m << "final_mean_return = " << format_real(final_return(o.log)) << '\n';
    m << "last_kl = " << format_real(o.log.back().kl) << '\n';
    m << "max_kl = " << format_real(max_kl) << '\n';
    m << "min_cov = " << format_real(lo) << '\n';
    m << "max_cov = " << format_real(hi) << '\n';
  }
  m << "\n[config]\n";
  echo_config(m, cfg);
  return m.str();
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string progress_row(const TrainLogRecord& r, bool wall_clock) {
  std::string s;
  s += std::to_string(r.iteration) + ',' + std::to_string(r.timesteps) + ',';
  s += format_real(r.mean_return) + ',' + format_real(r.std_return) + ',';
  s += format_real(r.kl) + ',' + format_real(r.value_loss) + ',' + format_real(r.entropy) + ',';
  s += wall_clock ? format_real(r.wall_ms) : std::string("0");
  return s;
}

double final_return(const std::vector<TrainLogRecord>& log) {
  if (log.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min<std::size_t>(10, log.size());
  double s = 0.0;
  for (std::size_t i = log.size() - n; i < log.size(); ++i) s += log[i].mean_return;
  return s / static_cast<double>(n);
}

// ---- train

TrainOutcome train_into(const ExperimentConfig& cfg, const std::string& dir, std::ostream& out, bool quiet) {
  cfg.validate();
  prepare_dir(dir);
  const RunFiles files{dir};
  const std::string start = utc_now();
  {
    auto c = open_output(files.config());
    echo_config(c, cfg);
  }

  TrainOutcome outcome;
  auto finish = [&] {
    write_atomically(files.manifest(), manifest_text(cfg, outcome, start, utc_now()));
  };

  std::unique_ptr<Trainer> trainer;
  try {
    auto progress = open_output(files.progress());
    auto timing = open_output(files.timing());
    std::ofstream eval;
    progress << kProgressHeader << '\n';
    timing << "iteration,timesteps,wall_ms\n";
    if (cfg.trainer.eval_episodes > 0) {
      eval = open_output(files.eval());
      eval << "iteration,timesteps,eval_return\n";
    }

    kernels::set_worker_count(static_cast<int>(cfg.trainer.workers));
    trainer = std::make_unique<Trainer>(cfg.trainer, make_env(cfg.env));
    save_checkpoint(files.checkpoint(), trainer->checkpoint(), {{"iteration", "0"}});

    while (!trainer->done()) {
      const TrainLogRecord rec = trainer->iterate();
      outcome.log.push_back(rec);
      progress << progress_row(rec, cfg.record_wall_clock) << '\n' << std::flush;
      timing << rec.iteration << ',' << rec.timesteps << ',' << format_real(rec.wall_ms) << '\n' << std::flush;
      if (rec.eval_return)
        eval << rec.iteration << ',' << rec.timesteps << ',' << format_real(*rec.eval_return) << '\n' << std::flush;
      if (cfg.checkpoint_interval > 0 && rec.iteration % cfg.checkpoint_interval == 0)
        save_checkpoint(files.checkpoint(), trainer->checkpoint(), {{"iteration", std::to_string(rec.iteration)}});
      if (!quiet)
        out << "iter " << rec.iteration << "  steps " << rec.timesteps << "  return " << std::fixed
            << std::setprecision(2) << rec.mean_return << "  kl " << std::setprecision(4) << rec.kl << "  vloss "
            << std::setprecision(3) << rec.value_loss << std::defaultfloat << std::setprecision(6) << '\n'
            << std::flush;
    }
    save_checkpoint(files.checkpoint(), trainer->checkpoint(),
                    {{"iteration", std::to_string(trainer->iteration())}});
    outcome.status = "completed";
    outcome.exit_code = kExitOk;
  } catch (const NumericError& e) {
    outcome.status = "numeric-abort";
    outcome.exit_code = kExitNumeric;
    outcome.message = e.what();
  } catch (const ConfigError& e) {
    outcome.status = "config-error";
    outcome.exit_code = kExitConfig;
    outcome.message = e.what();
  } catch (const std::exception& e) {
    outcome.status = "error";
    outcome.exit_code = kExitFailure;
    outcome.message = e.what();
  }
  if (cfg.debug_dump && trainer) {
    std::ofstream d(files.buffer_dump());
    trainer->buffer().dump(d);
  }
  finish();
  return outcome;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::string dir = resolve_output_dir(cfg);
  echo_config(out, cfg);
  out << "output -> " << dir << '\n';
  const TrainOutcome o = train_into(cfg, dir, out);
  if (o.exit_code != kExitOk) err << "train: " << o.status << ": " << o.message << '\n';
  else out << "final return " << format_real(final_return(o.log)) << " after " << o.log.size() << " iterations\n";
  return o.exit_code;
}

// ---- verify

int cmd_verify(const std::vector<std::string>& suites, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  std::vector<std::string> chosen;
  for (const std::string& s : suites) {
    if (s == "all") {
      chosen = oracle::suite_names();
      break;
    }
    if (!oracle::is_suite_name(s)) {
      err << "verify: unknown suite '" << s << "' (known:";
      for (const std::string& n : oracle::suite_names()) err << ' ' << n;
      err << ", all)\n";
      return kExitConfig;
    }
    chosen.push_back(s);
  }
  if (chosen.empty()) chosen = oracle::suite_names();
  std::vector<oracle::SuiteResult> results;
  bool ok = true;
  for (const std::string& s : chosen) {
    results.push_back(oracle::run_suite(s, seed));
    ok = ok && results.back().passed();
  }
  oracle::print_suite_table(out, results);
  return ok ? kExitOk : kExitFailure;
}

// ---- sweep

int cmd_sweep(const ExperimentConfig& cfg, const std::string& key, const std::vector<std::string>& values,
              std::ostream& out, std::ostream& err) {
  if (!is_config_key(key)) throw ConfigError("sweep: unknown key '" + key + "'");
  if (key == "output-dir") throw ConfigError("sweep: output-dir cannot be swept");
  if (values.empty()) throw ConfigError("sweep: no values given for '" + key + "'");
  const std::string base = resolve_output_dir(cfg);

  std::vector<ExperimentConfig> runs;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig c = cfg;
    set_config_value(c, key, values[i]);
    if (key != "seed") c.trainer.seed = cfg.trainer.seed + i;
    c.output_dir = base + "/" + key + "_" + sanitize(values[i]);
    c.validate();
    runs.push_back(std::move(c));
  }
  prepare_dir(base);

  std::ostringstream cmp;
  cmp << "key,value,seed,dir,status,iterations,timesteps,first_return,final_return,max_kl\n";
  int code = kExitOk;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out << "sweep " << key << " = " << values[i] << " -> " << runs[i].output_dir << '\n';
    const TrainOutcome o = train_into(runs[i], runs[i].output_dir, out, true);
    double max_kl = 0.0;
    for (const TrainLogRecord& r : o.log) max_kl = std::max(max_kl, r.kl);
    cmp << key << ',' << values[i] << ',' << runs[i].trainer.seed << ','
        << fs::path(runs[i].output_dir).filename().string() << ',' << o.status << ',' << o.log.size() << ','
        << (o.log.empty() ? 0 : o.log.back().timesteps) << ','
        << (o.log.empty() ? std::string("nan") : format_real(o.log.front().mean_return)) << ','
        << (o.log.empty() ? std::string("nan") : format_real(final_return(o.log))) << ',' << format_real(max_kl)
        << '\n';
    if (o.exit_code != kExitOk) {
      err << "sweep: " << key << " = " << values[i] << ": " << o.status << ": " << o.message << '\n';
      code = std::max(code, o.exit_code);
    } else {
      out << "  final return " << format_real(final_return(o.log)) << '\n';
    }
  }
  write_atomically(base + "/comparison.csv", cmp.str());
  return code;
}

// ---- summary

std::vector<double> ProgressTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("summary: no column '" + name + "'");
  const std::size_t c = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(c < r.size() ? r[c] : std::numeric_limits<double>::quiet_NaN());
  return v;
}

ProgressTable read_progress(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("summary: cannot open '" + path + "'");
  ProgressTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("summary: '" + path + "' is empty");
  t.columns = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& cell : split_csv_line(line)) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string sparkline(std::span<const double> values, std::size_t width) {
  static const char* const kBlocks[] = {"▁", "▂", "▃", "▄", "▅", "▆", "▇", "█"};
  if (values.empty() || width == 0) return {};
  const std::size_t cells = std::min(width, values.size());
  std::vector<double> v(cells, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t lo = c * values.size() / cells, hi = (c + 1) * values.size() / cells;
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += values[i];
    v[c] = s / static_cast<double>(hi - lo);
  }
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (double x : v)
    if (std::isfinite(x)) mn = std::min(mn, x), mx = std::max(mx, x);
  std::string out;
  for (double x : v) {
    if (!std::isfinite(x)) {
      out += ' ';
      continue;
    }
    const double f = mx > mn ? (x - mn) / (mx - mn) : 0.5;
    out += kBlocks[std::min<std::size_t>(7, static_cast<std::size_t>(f * 8.0))];
  }
  return out;
}

namespace {

void summarize_progress(const std::string& path, std::ostream& out) {
  const ProgressTable t = read_progress(path);
  out << path << ": " << t.rows.size() << " iterations";
  if (!t.rows.empty()) out << ", " << static_cast<std::size_t>(t.column("timesteps").back()) << " steps";
  out << '\n';
  if (t.rows.empty()) return;
  for (const char* name : {"mean_return", "kl", "value_loss", "entropy"}) {
    const std::vector<double> v = t.column(name);
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    out << "  " << std::left << std::setw(12) << name << std::right << " first " << std::setw(11)
        << std::setprecision(5) << v.front() << "  last " << std::setw(11) << v.back() << "  min " << std::setw(11)
        << *mn << "  max " << std::setw(11) << *mx << "  " << sparkline(v) << '\n';
  }
  out << std::setprecision(6);
}

}  // namespace

int cmd_summary(const std::string& path, std::ostream& out, std::ostream& err) {
  if (fs::is_regular_file(path)) {
    summarize_progress(path, out);
    return kExitOk;
  }
  if (!fs::is_directory(path)) {
    err << "summary: no such file or directory '" << path << "'\n";
    return kExitConfig;
  }
  if (fs::exists(fs::path(path) / "progress.csv")) {
    summarize_progress((fs::path(path) / "progress.csv").string(), out);
    return kExitOk;
  }
  const fs::path cmp = fs::path(path) / "comparison.csv";
  if (!fs::exists(cmp)) {
    err << "summary: '" << path << "' holds neither progress.csv nor comparison.csv\n";
    return kExitConfig;
  }
  std::ifstream in(cmp);
  std::string line;
  std::getline(in, line);
  const std::vector<std::string> cols = split_csv_line(line);
  const auto dir_col = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "dir") - cols.begin());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    out << line << '\n';
    if (dir_col < cells.size()) {
      const fs::path p = fs::path(path) / cells[dir_col] / "progress.csv";
      if (fs::exists(p)) summarize_progress(p.string(), out);
    }
  }
  return kExitOk;
}

// ---- entry point

namespace {

struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    app.add_option("--config", file, "flat key = value config file")->check(CLI::ExistingFile);
    for (const std::string& k : config_keys())
      options[k] = app.add_option("--" + k, values[k], config_help(k));
  }

  ExperimentConfig build() const {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const std::string& k : config_keys())
      if (options.at(k)->count() > 0) overrides.emplace_back(k, values.at(k));
    return build_config(file, overrides);
  }
};

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trust-region policy optimization over a multi-policy replay buffer"};
  app.require_subcommand(1);

  CLI::App* train = app.add_subcommand("train", "train one run into the output directory");
  ConfigOptions train_opts;
  train_opts.attach(*train);

  CLI::App* verify = app.add_subcommand("verify", "run property suites");
  std::vector<std::string> suites;
  std::uint64_t verify_seed = 0;
  verify->add_option("suites", suites, "theorem1 theorem2 gradients kl kfac estimators | all");
  verify->add_option("--seed", verify_seed, "instance seed");

  CLI::App* sweep = app.add_subcommand("sweep", "one run per value of a config key");
  ConfigOptions sweep_opts;
  sweep_opts.attach(*sweep);
  std::string sweep_key;
  std::vector<std::string> sweep_values;
  sweep->add_option("key", sweep_key, "config key to vary")->required();
  sweep->add_option("values", sweep_values, "values, one run each")->required();

  CLI::App* summary = app.add_subcommand("summary", "sparkline summary of a run or sweep");
  std::string summary_path;
  summary->add_option("path", summary_path, "progress.csv, run directory or sweep directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_opts.build(), out, err);
    if (*verify) return cmd_verify(suites, verify_seed, out, err);
    if (*sweep) return cmd_sweep(sweep_opts.build(), sweep_key, sweep_values, out, err);
    if (*summary) return cmd_summary(summary_path, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace rtrl::cli
