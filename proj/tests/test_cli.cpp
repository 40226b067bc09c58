#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "torusred/cli.hpp"

using namespace torusred;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("torusred_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

int shell(const std::string& args) {
  const std::string cmd = std::string(TORUSRED_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunConfig small(const std::string& command, const fs::path& out) {
  auto c = parse_config(preset_json("set1"));
  c.command = command;
  c.out_dir = out.string();
  return c;
}

}  // namespace

TEST(Config, PresetsMatchShippedFiles) {
  const fs::path dir = fs::path(TORUSRED_SOURCE_DIR) / "configs";
  EXPECT_EQ(read_json(dir / "set1.json"), preset_json("set1"));
  EXPECT_EQ(read_json(dir / "set2.json"), preset_json("set2"));
  EXPECT_THROW(preset_json("set3"), config_error);
}

TEST(Config, ParsesPresetValues) {
  const auto c = parse_config(preset_json("set2"));
  EXPECT_EQ(c.chain.middle.beta, 6.0);
  EXPECT_EQ(c.integrator.scheme, Scheme::rk4);
  EXPECT_EQ(c.integrator.dt, 0.01);
  EXPECT_EQ(c.reduction.K_nf, 6);
  EXPECT_EQ(c.x0.size(), 6);
  EXPECT_EQ(c.sweep.count, 20u);
}

TEST(Config, RejectsInvalidDocuments) {
  auto j = preset_json("set1");
  j["numerics"]["J"] = 5;
  EXPECT_THROW(parse_config(j), config_error);
  j = preset_json("set1");
  j["numerics"]["K_nf"] = 9;
  EXPECT_THROW(parse_config(j), config_error);
  j = preset_json("set1");
  j["numerics"]["integrator"]["dt"] = -1.0;
  EXPECT_THROW(parse_config(j), config_error);
  j = preset_json("set1");
  j["model"]["gamma"] = 1.0;
  EXPECT_THROW(parse_config(j), config_error);
  j = preset_json("set1");
  j["simulate"]["x0"] = nlohmann::json::array({nlohmann::json::array({1.0, 0.0})});
  EXPECT_ANY_THROW(parse_config(j));
  EXPECT_THROW(parse_config(nlohmann::json::array()), config_error);
  EXPECT_THROW(load_config("/nonexistent/torusred.json"), config_error);
}

TEST(Config, ResonantFrequenciesAreRejected) {
  auto j = preset_json("set1");
  j["model"]["b"] = 3.0;  // omega_2 = 3 - 1 = 2 = omega_1
  try {
    parse_config(j);
    FAIL() << "expected a config error";
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("resonance"), std::string::npos);
  }
}

TEST(Run, ReduceReportsConstantsAndIsDeterministic) {
  const auto out = scratch("reduce");
  std::ostringstream log, err;
  ASSERT_EQ(run(small("reduce", out), log, err), exit_ok) << err.str();
  const auto report = read_json(out / "report.json");
  EXPECT_NEAR(report.at("A_pipeline").get<double>(), 0.2, 1e-8);
  EXPECT_NEAR(report.at("B_pipeline").get<double>(), -0.6, 1e-8);
  EXPECT_NEAR(report.at("A_formula").get<double>(), 0.2, 1e-15);
  const std::string first = slurp(out / "reduction.json") + slurp(out / "report.json");
  ASSERT_EQ(run(small("reduce", out), log, err), exit_ok);
  EXPECT_EQ(first, slurp(out / "reduction.json") + slurp(out / "report.json"));
}

TEST(Run, ReduceWithTooFewModesIsNumerical) {
  const auto out = scratch("lowk");
  auto c = small("reduce", out);
  c.reduction.K = 1;
  c.reduction.K_nf = 1;
  std::ostringstream log, err;
  EXPECT_EQ(run(c, log, err), exit_numerical);
  EXPECT_NE(err.str().find("raise K"), std::string::npos) << err.str();
}

TEST(Run, BundleWritesDiagnostics) {
  const auto out = scratch("bundle");
  std::ostringstream log, err;
  ASSERT_EQ(run(small("bundle", out), log, err), exit_ok) << err.str();
  const auto j = read_json(out / "bundle.json");
  EXPECT_LT(j.at("diagnostics").at("fibre_residual").get<double>(), 1e-10);
  EXPECT_NO_THROW(torus_bundle_from_json(j));
}

TEST(Run, SimulateWritesTrajectory) {
  const auto out = scratch("simulate");
  auto c = small("simulate", out);
  c.integrator.t_end = 50.0;
  std::ostringstream log, err;
  ASSERT_EQ(run(c, log, err), exit_ok) << err.str();
  const std::string csv = slurp(out / "trajectory.csv");
  EXPECT_EQ(csv.rfind("t,", 0), 0u);
  const auto s = read_json(out / "simulate.json");
  EXPECT_EQ(s.at("scheme"), "euler");
  EXPECT_TRUE(std::isfinite(s.at("phi_hat_end").get<double>()));
}

TEST(Run, SmallSweepWritesFit) {
  const auto out = scratch("sweep");
  auto c = small("sweep", out);
  c.integrator = {Scheme::rk4, 0.05, 1.0, 10, false};
  c.sweep.eps_min = 0.08;
  c.sweep.eps_max = 0.1;
  c.sweep.count = 3;
  std::ostringstream log, err;
  ASSERT_EQ(run(c, log, err), exit_ok) << err.str();
  const auto j = read_json(out / "sweep.json");
  EXPECT_EQ(j.at("points").get<int>(), 3);
  EXPECT_TRUE(j.contains("slope"));
  EXPECT_TRUE(fs::exists(out / "sweep.csv"));
}

TEST(Run, UnknownCommandIsConfigError) {
  std::ostringstream log, err;
  EXPECT_EQ(run(small("frobnicate", scratch("unknown")), log, err), exit_config);
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  EXPECT_EQ(shell("reduce --preset set1 --out " + (dir / "ok").string()), exit_ok);
  EXPECT_TRUE(fs::exists(dir / "ok" / "report.json"));

  std::ofstream(dir / "bad.json") << "{ \"model\": ";
  EXPECT_EQ(shell("reduce --config " + (dir / "bad.json").string()), exit_config);

  auto j = preset_json("set1");
  j["numerics"]["J"] = 5;
  std::ofstream(dir / "j5.json") << j.dump();
  EXPECT_EQ(shell("reduce --config " + (dir / "j5.json").string()), exit_config);

  j = preset_json("set1");
  j["model"]["b"] = 3.0;
  std::ofstream(dir / "res.json") << j.dump();
  EXPECT_EQ(shell("reduce --config " + (dir / "res.json").string()), exit_config);

  j = preset_json("set1");
  j["numerics"]["K"] = 1;
  j["numerics"]["K_nf"] = 1;
  j["output"] = (dir / "lowk").string();
  std::ofstream(dir / "lowk.json") << j.dump();
  EXPECT_EQ(shell("reduce --config " + (dir / "lowk.json").string()), exit_numerical);

  EXPECT_EQ(shell("reduce --preset set9"), exit_config);
  EXPECT_EQ(shell("nonsense"), exit_config);
}
