#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "lorvar/cli.hpp"

using namespace lorvar;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> m;
  for (const auto& e : fs::directory_iterator(dir)) m[e.path().filename().string()] = slurp(e.path());
  return m;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("lorvar_cli_test_" + name);
  fs::remove_all(d);
  return d;
}

cli::RunConfig small(const std::string& command, const fs::path& out) {
  auto c = cli::parse_config(R"(
budget.samples = 20000
budget.burn_in = 200
budget.block_time = 40
budget.blocks = 200
budget.map_block = 100
budget.map_reps = 100
budget.ode_block_time = 5
budget.ode_blocks = 20
)");
  c.command = command;
  c.out = out.string();
  return c;
}

int shell(const std::string& cmd) {
  const int s = std::system(cmd.c_str());
  return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
}

}  // namespace

TEST(Config, Defaults) {
  const cli::RunConfig c;
  EXPECT_EQ(c.model.gamma0, 0.6);
  EXPECT_EQ(c.model.rho, 0.4);
  EXPECT_EQ(c.seed, 0u);
  EXPECT_FALSE(c.model.constant_roof);
  EXPECT_EQ(cli::parse_config(""), c);
  const auto text = cli::echo(c);
  const auto lf = suspension::LinearizedLocalFlow::lorenz(0.0);
  EXPECT_NE(text.find("flow.lambda1 = " + io::format_double(lf.lambda1)), std::string::npos);
  EXPECT_NE(text.find("onedmap.gamma = 0.59999999999999998"), std::string::npos);
}

TEST(Config, GammaOutsideExpansionRangeIsRejected) {
  for (const char* g : {"1.5", "0.55", "0.5", "1"}) {
    try {
      cli::parse_config(std::string("onedmap.gamma = ") + g);
      FAIL() << "gamma " << g << " accepted";
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("onedmap.gamma"), std::string::npos);
      EXPECT_NE(std::string(e.what()).find("(0.55, 1)"), std::string::npos);
    }
  }
  EXPECT_NO_THROW(cli::parse_config("onedmap.gamma = 0.9"));
}

TEST(Config, StrictParsing) {
  try {
    cli::parse_config("onedmap.gama = 0.6");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("onedmap.gama"), std::string::npos);
  }
  EXPECT_THROW(cli::parse_config("run.seed = 1\nrun.seed = 2"), ConfigError);
  EXPECT_THROW(cli::parse_config("run.seed = -1"), ConfigError);
  EXPECT_THROW(cli::parse_config("skewmap.rho = 0.4x"), ConfigError);
  EXPECT_THROW(cli::parse_config("just words"), ConfigError);
  EXPECT_THROW(cli::parse_config("sweep.mc_oracle = yes"), ConfigError);
  EXPECT_THROW(cli::parse_config("sweep.eps_grid = 0.01, 0.02, 0"), ConfigError);
  EXPECT_THROW(cli::parse_config("modulus.scales = 0.1, 0.05, 0.025"), ConfigError);
  EXPECT_THROW(cli::parse_config("run.format = xml"), ConfigError);
  EXPECT_THROW(cli::parse_config("roof.constant = -1"), ConfigError);
  EXPECT_THROW(cli::parse_config("onedmap.gamma = 0.9\nonedmap.eps = 0.2"), ConfigError);

  const auto c = cli::parse_config("# comment\n\n  run.seed = 7   # trailing\nroof.constant = 2\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.model.constant_roof, 2.0);
}

TEST(Config, OverrideNamesKey) {
  cli::RunConfig c;
  cli::apply_override(c, "run.seed=9");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_THROW(cli::apply_override(c, "run.seed"), ConfigError);
  EXPECT_THROW(cli::apply_override(c, "nope.key=1"), ConfigError);
}

TEST(Config, EchoRoundTripsRandomConfigs) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    cli::RunConfig c;
    c.command = cli::commands()[trial % cli::commands().size()];
    c.seed = gen();
    c.model.gamma0 = 0.56 + 0.3 * u(gen);
    c.eps = 0.05 * u(gen);
    c.model.rho = 0.1 + 0.3 * u(gen);
    c.model.tau2 = 0.5 + u(gen);
    if (trial % 2) c.model.constant_roof = 0.1 + u(gen);
    if (trial % 3) c.expected = u(gen);
    c.budget.block_time = 10 + 300 * u(gen);
    c.budget.ode_tol = 1e-11;
    c.eps_grid = {0.1 * u(gen) + 0.05, 0.04 * u(gen), 0.0};
    c.sweep_observables = {"x", "cos_z"};
    c.tier = trial % 4 ? "geometric" : "ode";
    c.mc_oracle = trial % 5;
    c.modulus_scales = {u(gen) + 0.1, 0.1 * u(gen) + 0.01, 1e-3 * u(gen) + 1e-4, 1e-7 * u(gen) + 1e-9};
    c.ode_eps = u(gen);
    c.truncation_levels = {3.0 + u(gen), 7.5};
    const auto back = cli::parse_config(cli::echo(c));
    EXPECT_EQ(back, c) << cli::echo(c);
    EXPECT_EQ(cli::echo(back), cli::echo(c));
  }
}

TEST(Run, ExitCodesFollowVerdicts) {
  std::ostringstream err;
  cli::RunConfig none;
  EXPECT_EQ(cli::run(none, err), 1);
  EXPECT_NE(err.str().find("no command"), std::string::npos);

  const auto dir = fresh_dir("verdicts");
  auto rep = small("report", dir);
  io::write_atomic(dir / "a.json", R"({"verdict":"pass"})");
  io::write_atomic(dir / "b.json", R"({"other":1})");
  EXPECT_EQ(cli::run(rep, err), 0);
  io::write_atomic(dir / "c.json", R"({"verdict":"inconclusive"})");
  EXPECT_EQ(cli::run(rep, err), 2);
  io::write_atomic(dir / "d.json", R"({"verdict":"fail"})");
  EXPECT_EQ(cli::run(rep, err), 1);
  const auto v = slurp(dir / "verdicts.txt");
  EXPECT_NE(v.find("c.json: inconclusive"), std::string::npos);
  EXPECT_NE(v.find("overall: fail"), std::string::npos);
  EXPECT_EQ(v.find("b.json"), std::string::npos);
}

TEST(Run, ModuleErrorsGoToStderrWithExitOne) {
  const auto dir = fresh_dir("module_error");
  auto c = small("relation-check", dir);
  c.family = "doubling";
  std::ostringstream err;
  EXPECT_EQ(cli::run(c, err), 1);
  EXPECT_NE(err.str().find("error:"), std::string::npos);
  EXPECT_NE(err.str().find("onedmap.family"), std::string::npos);
}

TEST(Run, UlamArtifacts) {
  const auto dir = fresh_dir("ulam");
  auto c = small("ulam", dir);
  c.ulam_cells = 256;
  std::ostringstream err;
  ASSERT_EQ(cli::run(c, err), 0) << err.str();
  EXPECT_TRUE(fs::exists(dir / "density.csv"));
  EXPECT_TRUE(fs::exists(dir / "ulam.json"));
  EXPECT_EQ(cli::parse_config(slurp(dir / "config.txt")), c);
  c.format = "json";
  ASSERT_EQ(cli::run(c, err), 0);
  EXPECT_TRUE(fs::exists(dir / "density.json"));
}

TEST(Run, RerunsAreByteIdenticalAndLeaveNoTemporaries) {
  for (const char* cmd : {"map-variance", "flow-variance", "relation-check"}) {
    const auto dir = fresh_dir(std::string("rerun_") + cmd);
    const auto c = small(cmd, dir);
    std::ostringstream err;
    const int first = cli::run(c, err);
    ASSERT_NE(first, 1) << cmd << ": " << err.str();
    const auto a = snapshot(dir);
    EXPECT_EQ(cli::run(c, err), first);
    EXPECT_EQ(snapshot(dir), a) << cmd;
    for (const auto& [name, content] : a) EXPECT_EQ(name.find(".tmp"), std::string::npos) << name;
  }
}

TEST(Run, OdeReturnsCrossingsLieOnSection) {
  const auto dir = fresh_dir("ode");
  auto c = small("ode-returns", dir);
  c.n_returns = 2000;
  c.ode_bins = 32;
  std::ostringstream err;
  cli::run(c, err);
  EXPECT_EQ(err.str(), "");
  std::ifstream in(dir / "crossings.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,x,y,z,tau");
  std::size_t rows = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string s; std::getline(ss, s, ',');) f.push_back(s);
    ASSERT_EQ(f.size(), 5u);
    worst = std::max(worst, std::abs(std::stod(f[3]) - 27.0));
    ++rows;
  }
  EXPECT_EQ(rows, 2000u);
  EXPECT_LT(worst, 1e-10);
  EXPECT_TRUE(fs::exists(dir / "ode.json"));
}

#ifdef LORVAR_CLI_PATH
TEST(Binary, SeedFlagOverridesFileAndEchoRecordsIt) {
  const auto dir = fresh_dir("binary");
  fs::create_directories(dir);
  io::write_atomic(dir / "in.txt", "run.seed = 7\nulam.cells = 128\n");
  const std::string exe = LORVAR_CLI_PATH;
  const auto out = dir / "out";
  ASSERT_EQ(shell(exe + " ulam --config " + (dir / "in.txt").string() + " --seed 42 --out " + out.string()), 0);
  const auto echoed = cli::parse_config(slurp(out / "config.txt"));
  EXPECT_EQ(echoed.seed, 42u);
  EXPECT_EQ(echoed.ulam_cells, 128u);

  ASSERT_EQ(shell(exe + " ulam --config " + (dir / "in.txt").string() + " --out " + out.string()), 0);
  EXPECT_EQ(cli::parse_config(slurp(out / "config.txt")).seed, 7u);

  const auto err = dir / "err.txt";
  EXPECT_EQ(shell(exe + " ulam --set onedmap.gamma=1.5 --out " + out.string() + " 2> " + err.string()), 1);
  EXPECT_NE(slurp(err).find("onedmap.gamma"), std::string::npos);
  EXPECT_EQ(shell(exe + " ulam --set bogus.key=1 2> " + err.string()), 1);
  EXPECT_NE(slurp(err).find("bogus.key"), std::string::npos);
}
#endif
