#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rtrl/commands.hpp"
#include "rtrl/config.hpp"
#include "rtrl/error.hpp"
#include "rtrl/nets.hpp"

using namespace rtrl;
using namespace rtrl::cli;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "rtrl");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("rtrl_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int n = 0;
    return n;
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Small, quick training runs.
std::vector<std::string> quick(const std::string& dir, const std::string& steps = "2000") {
  return {"--output-dir", dir, "--max-timesteps", steps, "--n-iter-vf-update", "5", "--n-iter-pl-update", "3"};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("defaults") {
  const ExperimentConfig cfg = build_config("", {});
  CHECK(cfg.trainer.delta == 0.1);
  CHECK(cfg.trainer.alpha == 100.0);
  CHECK(cfg.trainer.rbp_capacity == 3);
  CHECK(cfg.trainer.gamma == 0.99);
  CHECK(cfg.trainer.lambda == 0.97);
  CHECK(cfg.trainer.timesteps_per_batch == 1000);
  CHECK(cfg.trainer.n_iter_vf_update == 100);
  CHECK(cfg.trainer.n_iter_pl_update == 10);
  CHECK(cfg.trainer.min_cov_el == 0.2);
  CHECK(cfg.trainer.max_cov_el == 5.0);
  CHECK(cfg.env == "point_mass");
}

TEST_CASE("config layering") {
  TempDir tmp;
  const std::string file = tmp / "run.cfg";
  std::ofstream(file) << "# comment\n\nrbp-capacity = 2\ngamma = 0.9\n";
  const ExperimentConfig cfg = build_config(file, {{"gamma", "0.95"}});
  CHECK(cfg.trainer.rbp_capacity == 2);
  CHECK(cfg.trainer.gamma == 0.95);

  std::ostringstream echo;
  echo_config(echo, cfg);
  std::istringstream back(echo.str());
  std::size_t n = 0;
  for (const auto& [k, v] : parse_config_text(back, "echo")) {
    CHECK(get_config_value(cfg, k) == v);
    ++n;
  }
  CHECK(n == config_keys().size());

  std::ofstream(tmp / "bad.cfg") << "no-such-key = 1\n";
  CHECK_THROWS_AS(build_config(tmp / "bad.cfg", {}), ConfigError);
  std::ofstream(tmp / "junk.cfg") << "gamma\n";
  CHECK_THROWS_AS(build_config(tmp / "junk.cfg", {}), ConfigError);
}

TEST_CASE("validation errors name the key") {
  for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
           {"gamma", "1.5"}, {"lambda", "-0.1"}, {"rbp-capacity", "0"}, {"worker-count", "0"},
           {"delta", "abc"}, {"env", "nowhere"}, {"kfac-mode", "fancy"}}) {
    CAPTURE(key);
    try {
      build_config("", {{key, value}});
      FAIL("accepted " << key << " = " << value);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  }
  const CliResult r = invoke({"train", "--gamma", "1.5"});
  CHECK(r.code == 2);
  CHECK(r.err.find("gamma") != std::string::npos);
  CHECK(r.err.find("[0, 1)") != std::string::npos);

  CHECK(invoke({"train", "--no-such-flag", "1"}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("train writes a complete run directory") {
  TempDir tmp;
  const std::string dir = tmp / "run";
  const CliResult r = invoke(cat({"train"}, quick(dir)));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("gamma = 0.99") != std::string::npos);

  const RunFiles files{dir};
  const std::string progress = slurp(files.progress());
  CHECK(progress.rfind(std::string(kProgressHeader) + "\n", 0) == 0);
  CHECK(count_lines(progress) == 1 + 2);
  CHECK(fs::exists(files.checkpoint()));
  CHECK(fs::exists(files.config()));
  CHECK(count_lines(slurp(files.timing())) == 1 + 2);

  const std::string manifest = slurp(files.manifest());
  CHECK(manifest.find("status = completed") != std::string::npos);
  CHECK(manifest.find("exit_code = 0") != std::string::npos);
  CHECK(manifest.find("artifact_version = " + std::string(kArtifactVersion)) != std::string::npos);
  CHECK(manifest.find("[config]") != std::string::npos);
  CHECK_FALSE(fs::exists(files.manifest() + ".tmp"));

  const ProgressTable table = read_progress(files.progress());
  REQUIRE(table.rows.size() == 2);
  CHECK(table.column("timesteps") == std::vector<double>{1000.0, 2000.0});
  for (double w : table.column("wall_ms")) CHECK(w == 0.0);
  (void)load_checkpoint(files.checkpoint());
}

TEST_CASE("progress.csv is byte-reproducible") {
  TempDir tmp;
  REQUIRE(invoke(cat({"train"}, quick(tmp / "a", "3000"))).code == 0);
  REQUIRE(invoke(cat({"train"}, quick(tmp / "b", "3000"))).code == 0);
  REQUIRE(invoke(cat(cat({"train"}, quick(tmp / "c", "3000")), {"--worker-count", "4"})).code == 0);
  const std::string a = slurp(tmp / "a/progress.csv");
  CHECK(count_lines(a) == 4);
  CHECK(a == slurp(tmp / "b/progress.csv"));
  CHECK(a == slurp(tmp / "c/progress.csv"));
  CHECK(slurp(tmp / "a/checkpoint.bin") == slurp(tmp / "c/checkpoint.bin"));

  REQUIRE(invoke(cat(cat({"train"}, quick(tmp / "d", "3000")), {"--seed", "5"})).code == 0);
  CHECK(a != slurp(tmp / "d/progress.csv"));
}

TEST_CASE("numeric abort keeps the last checkpoint") {
  TempDir tmp;
  const std::string dir = tmp / "boom";
  const CliResult r = invoke(cat(cat({"train"}, quick(dir)),
                              {"--pl-step-size", "1e300", "--kl-clip", "0", "--grad-norm-cap", "0"}));
  CHECK(r.code == 3);
  const std::string manifest = slurp(dir + "/manifest.txt");
  CHECK(manifest.find("status = numeric-abort") != std::string::npos);
  CHECK(manifest.find("exit_code = 3") != std::string::npos);
  CHECK(fs::exists(dir + "/checkpoint.bin"));
  (void)load_checkpoint(dir + "/checkpoint.bin");
}

TEST_CASE("sweep") {
  TempDir tmp;
  const std::string base = tmp / "sweep";
  const CliResult r = invoke(cat(cat({"sweep"}, quick(base)), {"rbp-capacity", "1", "2", "3"}));
  REQUIRE(r.code == 0);
  for (const std::string v : {"1", "2", "3"}) {
    CHECK(fs::exists(base + "/rbp-capacity_" + v + "/progress.csv"));
    CHECK(fs::exists(base + "/rbp-capacity_" + v + "/manifest.txt"));
  }
  const std::string cmp = slurp(base + "/comparison.csv");
  CHECK(cmp.rfind("key,value,seed,dir,status,iterations,timesteps,first_return,final_return,max_kl\n", 0) == 0);
  CHECK(count_lines(cmp) == 4);
  CHECK(cmp.find("rbp-capacity,2,1,") != std::string::npos);

  SUBCASE("one value matches a plain train run with the same seed") {
    const std::string single = tmp / "single";
    REQUIRE(invoke(cat(cat({"sweep"}, quick(single)), {"rbp-capacity", "3"})).code == 0);
    REQUIRE(invoke(cat(cat({"train"}, quick(tmp / "plain")), {"--rbp-capacity", "3"})).code == 0);
    CHECK(slurp(single + "/rbp-capacity_3/progress.csv") == slurp(tmp / "plain/progress.csv"));
    CHECK(count_lines(slurp(single + "/comparison.csv")) == 2);
  }
  SUBCASE("unknown keys are rejected") {
    CHECK(invoke(cat(cat({"sweep"}, quick(tmp / "x")), {"no-such-key", "1"})).code == 2);
    CHECK(invoke(cat(cat({"sweep"}, quick(tmp / "x")), {"output-dir", "1"})).code == 2);
  }
}

TEST_CASE("summary") {
  TempDir tmp;
  REQUIRE(invoke(cat({"train"}, quick(tmp / "run", "3000"))).code == 0);
  const CliResult r = invoke({"summary", tmp / "run"});
  CHECK(r.code == 0);
  CHECK(r.out.find("mean_return") != std::string::npos);
  CHECK(r.out.find("kl") != std::string::npos);
  CHECK(invoke({"summary", tmp / "missing"}).code != 0);

  CHECK(sparkline(std::vector<double>{}).empty());
  CHECK(sparkline(std::vector<double>{0.0, 1.0}) == "▁█");
  CHECK(sparkline(std::vector<double>(100, 2.0), 10).size() == 10 * std::string("▁").size());
}

TEST_CASE("verify") {
  CHECK(invoke({"verify", "bogus"}).code == 2);
  const CliResult r = invoke({"verify", "kfac", "theorem2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("kfac") != std::string::npos);
  CHECK(r.out.find("theorem2") != std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("built binary honours the exit-code contract") {
  const char* exe = std::getenv("RTRL_CLI");
  if (!exe) {
    MESSAGE("RTRL_CLI not set; skipping");
    return;
  }
  TempDir tmp;
  auto status = [&](const std::string& args) {
    const std::string cmd = std::string(exe) + " " + args + " > " + (tmp / "out.txt") + " 2> " + (tmp / "err.txt");
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status("train --gamma 1.5") == 2);
  CHECK(slurp(tmp / "err.txt").find("gamma") != std::string::npos);
  CHECK(status("verify nope") == 2);
  CHECK(status("verify kfac") == 0);
  CHECK(status("--help") == 0);

  const std::string env_dir = tmp / "from_env";
  const std::string cmd = "RTRL_OUTPUT_DIR=" + env_dir + " " + exe +
                          " train --max-timesteps 1000 --n-iter-vf-update 2 --n-iter-pl-update 2 > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(env_dir + "/progress.csv"));
}
