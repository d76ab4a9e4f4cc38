#include "muskat/driver.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
using muskat::ConfigError;
using muskat::config::Config;
using muskat::driver::read_run_config;

struct Run {
  int code = -1;
  std::string output;
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("muskat_driver_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

Run cli(const std::string& args) {
  const std::string cmd = std::string(MUSKAT_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

Config parse(const std::string& text) {
  std::istringstream is(text);
  return Config::parse(is, "test.ini");
}

std::string config_error(const std::string& text) {
  try {
    read_run_config(parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST(Config, EmptyFileExitsWithConfigErrorNamingMode) {
  const auto dir = scratch("empty");
  const auto r = cli("--config " + write(dir, "empty.ini", "").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("run.mode"), std::string::npos) << r.output;
}

TEST(Config, MissingSeedIsNamed) {
  EXPECT_NE(config_error("[run]\nmode = holder-check\n").find("'run.seed'"), std::string::npos);
}

TEST(Config, ErrorsCarryTheLineNumber) {
  const std::string bad_number = "[run]\nmode = holder-check\nseed = 1\n\n[model]\nm = abc\n";
  EXPECT_NE(config_error(bad_number).find("test.ini:6:"), std::string::npos) << config_error(bad_number);
  const std::string bad_range = "[run]\nmode = holder-check\nseed = 1\n[domain]\n# comment\nN = 4\n";
  EXPECT_NE(config_error(bad_range).find("test.ini:6:"), std::string::npos) << config_error(bad_range);
  const std::string unknown_mode = "[run]\nseed = 1\nmode = sweep\n";
  EXPECT_NE(config_error(unknown_mode).find("test.ini:3:"), std::string::npos);
}

TEST(Config, DuplicateAndUnknownKeysAreRejected) {
  EXPECT_THROW(parse("[run]\nseed = 1\nseed = 2\n"), ConfigError);
  const auto msg = config_error("[run]\nmode = holder-check\nseed = 1\n[solver]\nkappa = 0.5\n");
  EXPECT_NE(msg.find("test.ini:5:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("solver.kappa"), std::string::npos) << msg;
}

TEST(Config, MalformedLinesAreRejected) {
  EXPECT_THROW(parse("[run\n"), ConfigError);
  EXPECT_THROW(parse("[run]\njust words\n"), ConfigError);
  EXPECT_THROW(parse("= 3\n"), ConfigError);
}

TEST(Config, ListsAndIntegers) {
  const auto c = parse("[solver]\neps_schedule = 1, 0.5 ,0.25\nmax_iter = 12\nbad = 1.5\n");
  EXPECT_EQ(c.get_list("solver.eps_schedule", {}), (std::vector<double>{1, 0.5, 0.25}));
  EXPECT_EQ(c.get_int("solver.max_iter", 0), 12);
  EXPECT_THROW(c.get_int("solver.bad", 0), ConfigError);
}

TEST(Config, OracleCompareRejectsLateralData) {
  const auto msg = config_error("[run]\nmode = oracle-compare\nseed = 1\n[data]\nlateral_variation = 0.5\n");
  EXPECT_NE(msg.find("non-symmetric data"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.ini:5:"), std::string::npos) << msg;
  // The default lateral variation is nonzero, so omitting the key is rejected too.
  EXPECT_NE(config_error("[run]\nmode = oracle-compare\nseed = 1\n").find("non-symmetric"), std::string::npos);
}

TEST(Config, HashIgnoresOrderCommentsAndOutput) {
  const auto a = read_run_config(parse("[run]\nmode = holder-check\nseed = 3\nout = a\n[time]\nT = 0.5\n"));
  const auto b = read_run_config(parse("# x\n[time]\nT = 0.5\n[run]\nseed = 3\nout = b\nmode = holder-check\n"));
  const auto c = read_run_config(parse("[run]\nmode = holder-check\nseed = 4\n[time]\nT = 0.5\n"));
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(a.hash, c.hash);
  EXPECT_EQ(a.hash.size(), 16u);
}

TEST(Config, Fnv1aReferenceValues) {
  EXPECT_EQ(muskat::config::fnv1a(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(muskat::config::fnv1a("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(muskat::config::hex64(0xabcull), "0000000000000abc");
}

TEST(Driver, KernelCheckDefaultsPass) {
  const auto dir = scratch("kernel");
  const auto cfg = write(dir, "k.ini", "[run]\nmode = kernel-check\nseed = 1\n");
  const auto r = cli("--config " + cfg.string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 0) << r.output;
  const auto report = nlohmann::json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_TRUE(report["pass"].get<bool>());
  EXPECT_TRUE(report.contains("moments"));
  EXPECT_TRUE(report.contains("bound_fits"));
  bool agreement = false;
  for (const auto& c : report["checks"]) agreement |= c["name"] == "kernel_fourier_vs_convolution";
  EXPECT_TRUE(agreement);
}

TEST(Driver, IdenticalConfigGivesIdenticalBytes) {
  const auto dir = scratch("determinism");
  const auto cfg = write(dir, "h.ini", "[run]\nmode = holder-check\nseed = 11\n");
  ASSERT_EQ(cli("--config " + cfg.string() + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli("--config " + cfg.string() + " --out " + (dir / "b").string()).code, 0);
  const auto a = slurp(dir / "a" / "report.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "report.json"));
}

TEST(Driver, SeedChangesTheSampledFunctions) {
  const auto dir = scratch("seed");
  const auto a = write(dir, "a.ini", "[run]\nmode = holder-check\nseed = 1\n");
  const auto b = write(dir, "b.ini", "[run]\nmode = holder-check\nseed = 2\n");
  cli("--config " + a.string() + " --out " + (dir / "a").string());
  cli("--config " + b.string() + " --out " + (dir / "b").string());
  const auto ra = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
  const auto rb = nlohmann::json::parse(slurp(dir / "b" / "report.json"));
  EXPECT_NE(ra["samples"], rb["samples"]);
}

TEST(Driver, ModeOverrideFromCommandLine) {
  const auto dir = scratch("override");
  const auto cfg = write(dir, "c.ini", "[run]\nmode = kernel-check\nseed = 1\n");
  const auto r = cli("--config " + cfg.string() + " --mode holder-check --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "o" / "report.json"))["mode"], "holder-check");
}

TEST(Driver, SolverErrorIsReportedWithExitThree) {
  const auto dir = scratch("degenerate");
  const auto cfg = write(dir, "d.ini", "[run]\nmode = nonlinear-solve\nseed = 1\n[solver]\nnu = 1.0\n");
  const auto r = cli("--config " + cfg.string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 3) << r.output;
  const auto report = nlohmann::json::parse(slurp(dir / "o" / "report.json"));
  EXPECT_FALSE(report["pass"].get<bool>());
  EXPECT_NE(report["error"]["message"].get<std::string>().find("degenerate"), std::string::npos);
}

TEST(Driver, FailedCheckExitsWithOne) {
  const auto dir = scratch("fail");
  const auto cfg =
      write(dir, "f.ini", "[run]\nmode = kernel-check\nseed = 1\n[kernel]\nL3 = 16\nn2 = 256\nbound_spread = 1\n");
  const auto r = cli("--config " + cfg.string() + " --out " + (dir / "o").string());
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("FAIL kernel_moment_unit_mass"), std::string::npos) << r.output;
}

TEST(Driver, MissingConfigFileIsAConfigError) {
  EXPECT_EQ(cli("--config /nonexistent/run.ini").code, 2);
  EXPECT_EQ(cli("").code, 2);
}
