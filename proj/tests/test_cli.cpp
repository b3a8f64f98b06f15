#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "../tools/pomc_commands.hpp"
#include "test_support.hpp"

using namespace pomc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("pomc_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_model(const fs::path& dir, const nlohmann::json& doc) {
  const auto path = (dir / "model.json").string();
  std::ofstream(path) << doc.dump(2);
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

cli::Config config(const std::string& model, const fs::path& out) {
  cli::Config c;
  c.model = model;
  c.out = out.string();
  c.n_grid = 8;
  c.replicates = 2000;
  c.horizon = 8.0;
  c.threads = 1;
  return c;
}

int run_binary(const std::string& args) {
  const int status = std::system((std::string(POMC_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(CmdValidate, ExitCodes) {
  const auto dir = scratch("validate");
  std::ostringstream sink;
  EXPECT_EQ(cli::cmd_validate(config(test::fixture_path(), dir), sink), cli::kOk);
  EXPECT_NE(sink.str().find("\"valid\": true"), std::string::npos);
  auto doc = to_json(test::canonical());
  doc["rates"]["u0"][0][0] = -1.49;
  EXPECT_EQ(cli::cmd_validate(config(write_model(dir, doc), dir), sink), cli::kInvalidModel);
  EXPECT_EQ(cli::cmd_validate(config((dir / "absent.json").string(), dir), sink), cli::kIoError);
  EXPECT_TRUE(fs::exists(dir / "validation.json"));
}

TEST(CmdSolve, ConstantCostGivesConstantValue) {
  const auto dir = scratch("solve_const");
  const auto model = write_model(dir, to_json(test::constant_cost_model(1.5)));
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_solve(config(model, dir), sink), cli::kOk);
  const auto report = nlohmann::json::parse(slurp(dir / "solve_report.json"));
  EXPECT_NEAR(report["values"]["uniform"]["V"].get<double>(), 1.5, 1e-6);
  EXPECT_LE(report["contraction_estimate"].get<double>(), report["contraction_bound"].get<double>() + 0.05);
}

TEST(CmdSolve, RerunIsByteIdentical) {
  const auto a = scratch("solve_a"), b = scratch("solve_b");
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_solve(config(test::fixture_path(), a), sink), cli::kOk);
  ASSERT_EQ(cli::cmd_solve(config(test::fixture_path(), b), sink), cli::kOk);
  for (const char* f : {"value_table.csv", "policy.csv", "solve_report.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(CmdSolve, NonConvergenceExitCode) {
  const auto dir = scratch("solve_nc");
  auto c = config(test::fixture_path(), dir);
  c.max_iter = 5;
  std::ostringstream sink;
  EXPECT_EQ(cli::cmd_solve(c, sink), cli::kNonConvergence);
  EXPECT_FALSE(nlohmann::json::parse(slurp(dir / "solve_report.json"))["converged"].get<bool>());
}

TEST(CmdVerify, MissingArtifacts) {
  const auto dir = scratch("verify_missing");
  std::ostringstream sink;
  EXPECT_EQ(cli::cmd_verify(config(test::fixture_path(), dir), sink), cli::kMissingArtifacts);
}

TEST(CmdVerify, FrozenModelPasses) {
  const auto dir = scratch("verify_frozen");
  const auto model = write_model(dir, to_json(test::frozen_model()));
  std::ostringstream sink;
  // Every replicate costs about +1 or -1 here, so 2000 replicates leave the
  // closure check at the mercy of a single draw; the model is cheap to run.
  auto c = config(model, dir);
  c.replicates = 10000;
  ASSERT_EQ(cli::cmd_solve(c, sink), cli::kOk);
  EXPECT_EQ(cli::cmd_verify(c, sink), cli::kOk) << sink.str();
}

TEST(CmdVerify, FixturePassesAndTamperingFailsHjb) {
  const auto dir = scratch("verify_fixture");
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_solve(config(test::fixture_path(), dir), sink), cli::kOk);
  EXPECT_EQ(cli::cmd_verify(config(test::fixture_path(), dir), sink), cli::kOk) << sink.str();

  auto v = [&] {
    std::ifstream in(dir / "value_table.csv");
    return io::read_value_table(in, test::canonical());
  }();
  v.values[v.grid->nearest_node(make_belief(test::canonical(), 0, {0.5, 0.5, 0.0}))] += 0.05;
  {
    std::ofstream out(dir / "value_table.csv");
    io::write_value_table(out, test::canonical(), v, "tampered");
  }
  EXPECT_EQ(cli::cmd_verify(config(test::fixture_path(), dir), sink), cli::kCheckFailed);
  const auto hjb = nlohmann::json::parse(slurp(dir / "verify_hjb.json"));
  EXPECT_FALSE(hjb["pass"].get<bool>());
}

TEST(CmdSimulate, WritesArtifactsWithHashHeader) {
  const auto dir = scratch("simulate");
  auto c = config(test::fixture_path(), dir);
  c.action = "u0";
  c.export_count = 3;
  std::ostringstream sink;
  ASSERT_EQ(cli::cmd_simulate(c, sink), cli::kOk);
  const auto traj = slurp(dir / "trajectories.csv");
  EXPECT_EQ(traj.rfind("# config_hash: ", 0), 0u);
  const auto est = nlohmann::json::parse(slurp(dir / "cost_estimate.json"));
  EXPECT_TRUE(est.contains("mean") && est.contains("std_error") && est.contains("ci95"));
  EXPECT_EQ(est["config_hash"].get<std::string>().size(), 16u);
}

TEST(CmdSimulate, ExplosionExitCode) {
  const auto dir = scratch("simulate_explode");
  ModelData d = test::canonical().data();
  for (auto& q : d.rates)
    for (auto& x : q) x *= 1e6;
  auto c = config(write_model(dir, to_json(ModelSpec::create(d))), dir);
  c.action = "u0";
  c.horizon = 2.0;
  c.export_count = 1;
  std::ostringstream sink;
  EXPECT_EQ(cli::cmd_simulate(c, sink), cli::kExplosion);
}

TEST(Binary, ExitCodesAndThreadsEnvironment) {
  const auto dir = scratch("binary");
  EXPECT_EQ(run_binary("validate --model " + test::fixture_path() + " --out " + dir.string()), 0);
  EXPECT_EQ(run_binary("validate --model " + (dir / "absent.json").string() + " --out " + dir.string()), 1);
  EXPECT_EQ(run_binary("verify --model " + test::fixture_path() + " --out " + dir.string()), 4);
  EXPECT_NE(run_binary("frobnicate"), 0);
  ::setenv("POMC_DEFAULT_THREADS", "3", 1);
  EXPECT_EQ(default_thread_count(), 3u);
  ::unsetenv("POMC_DEFAULT_THREADS");
  EXPECT_EQ(default_thread_count(), 1u);
}
