#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "commands.hpp"
#include "rnoma/rnoma.hpp"

using namespace rnoma;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args, cli::Environment env = {}) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err, env);
  return {code, out.str(), err.str()};
}

json run_json(std::vector<std::string> args, cli::Environment env = {}) {
  args.push_back("--format");
  args.push_back("json");
  const auto o = run(args, env);
  EXPECT_EQ(o.code, 0) << o.err;
  return json::parse(o.out);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  TempDir() : path_(std::filesystem::temp_directory_path() / ("rnoma_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

const std::vector<std::string> kSmallSim{"simulate", "--users", "3", "--p", "0.4", "--rate", "3",
                                         "--slots", "100", "--experiments", "20"};

}  // namespace

TEST(CliAnalyze, ReferencePoints) {
  auto j = run_json({"analyze", "--p", "1.0", "--rate", "1.263", "--snr-db", "15"});
  EXPECT_NEAR(j["Rs"].get<double>(), 1.933, 0.005);
  j = run_json({"analyze", "--p", "0.59", "--rate", "6.129", "--snr-db", "25"});
  EXPECT_NEAR(j["Rs"].get<double>(), 3.431, 0.005);
}

TEST(CliAnalyze, GridRowCount) {
  const auto o = run({"analyze", "--grid", "--snr-db", "20", "--p-min", "0.1", "--p-max", "1",
                      "--p-step", "0.1", "--rate-min", "1", "--rate-max", "3", "--rate-step", "0.5"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out.rfind("p,R,T,Rs\n", 0), 0u);
  EXPECT_EQ(std::count(o.out.begin(), o.out.end(), '\n'), 1 + 10 * 5);
}

TEST(CliAnalyze, RateBelowOneIsDomainError) {
  const auto o = run({"analyze", "--p", "0.5", "--rate", "0.5"});
  EXPECT_EQ(o.code, cli::kUsageError);
  EXPECT_NE(o.err.find("R >= 1"), std::string::npos);
  EXPECT_EQ(run({"analyze", "--grid", "--rate-min", "0.5"}).code, cli::kUsageError);
}

TEST(CliSimulate, RejectsZeroProbability) {
  const auto o = run({"simulate", "--p", "0"});
  EXPECT_EQ(o.code, cli::kUsageError);
  EXPECT_FALSE(o.err.empty());
}

TEST(CliSimulate, RepeatableAndThreadIndependent) {
  for (const char* fmt : {"text", "csv", "json"}) {
    auto args = kSmallSim;
    args.insert(args.end(), {"--format", fmt});
    const auto a = run(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(run(args).out, a.out);
    args.insert(args.end(), {"--threads", "3"});
    EXPECT_EQ(run(args).out, a.out);
  }
}

TEST(CliSimulate, CsvRecord) {
  auto args = kSmallSim;
  args.insert(args.end(), {"--format", "csv"});
  const auto o = run(args);
  EXPECT_EQ(o.out.rfind("K,B_dB,p,R,slots,experiments,seed,scheme,T,T_stderr,Rs,Rs_stderr", 0), 0u);
  EXPECT_EQ(std::count(o.out.begin(), o.out.end(), '\n'), 2);
}

TEST(CliSimulate, OutputFileAndManifest) {
  TempDir dir;
  auto args = kSmallSim;
  args.insert(args.end(), {"--format", "json", "--out", dir.file("sim.json")});
  const auto o = run(args);
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(slurp(dir.file("sim.json")), o.out);
  const auto m = json::parse(slurp(dir.file("sim.json.manifest.json")));
  EXPECT_EQ(m["command"], "simulate");
  EXPECT_EQ(m["configuration"]["K"], 3);
  EXPECT_EQ(m["configuration"]["seed"], 1);
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_TRUE(m["timings"].contains("wall_seconds"));
}

TEST(CliSimulate, UnwritableOutputFails) {
  auto args = kSmallSim;
  args.insert(args.end(), {"--out", "/nonexistent-dir/out.csv"});
  EXPECT_EQ(run(args).code, cli::kCheckFailed);
}

TEST(CliConfig, Precedence) {
  TempDir dir;
  {
    std::ofstream f(dir.file("run.cfg"));
    f << "# two-user run\nK = 2\np = 0.3\nR = 2.5\nn_slots = 50\nn_experiments = 5\nscheme = intra-only\n";
  }
  cli::Environment env;
  env.seed = "99";
  auto j = run_json({"simulate", "--config", dir.file("run.cfg"), "--p", "0.6"}, env);
  const auto& c = j["configuration"];
  EXPECT_EQ(c["p"], 0.6);     // flag beats file
  EXPECT_EQ(c["R"], 2.5);     // file beats default
  EXPECT_EQ(c["seed"], 99);   // environment beats default
  EXPECT_EQ(c["scheme"], "intra-only");
  EXPECT_EQ(c["snr_db"], 25.0);
  {
    std::ofstream f(dir.file("run.cfg"), std::ios::app);
    f << "seed = 7\n";
  }
  j = run_json({"simulate", "--config", dir.file("run.cfg")}, env);
  EXPECT_EQ(j["configuration"]["seed"], 7);  // file beats environment
  j = run_json({"simulate", "--config", dir.file("run.cfg"), "--seed", "8"}, env);
  EXPECT_EQ(j["configuration"]["seed"], 8);
}

TEST(CliConfig, ParseErrors) {
  EXPECT_THROW(cli::parse_config_text("p 0.5\n"), parameter_error);
  EXPECT_THROW(cli::parse_config_text("p =\n"), parameter_error);
  SystemConfig cfg;
  EXPECT_THROW(cli::apply_config_entries(cfg, {{"bogus", "1"}}), parameter_error);
  EXPECT_THROW(cli::apply_config_entries(cfg, {{"p", "abc"}}), parameter_error);
  const auto m = cli::parse_config_text("  users = 4  # comment\n\n");
  cli::apply_config_entries(cfg, m);
  EXPECT_EQ(cfg.users, 4);
  EXPECT_EQ(run({"simulate", "--config", "/nonexistent.cfg"}).code, cli::kUsageError);
  EXPECT_EQ(run({"simulate", "--seed", "x1"}).code, cli::kUsageError);
}

TEST(CliOptimize, AnalyticalFifteenDb) {
  const auto j = run_json({"optimize", "--analytical", "--snr-db", "15"});
  EXPECT_NEAR(j["p_star"].get<double>(), 1.0, 0.01);
  EXPECT_NEAR(j["R_star"].get<double>(), 1.263, 0.02);
  EXPECT_NEAR(j["Rs_star"].get<double>(), 1.933, 0.01);
  EXPECT_EQ(j["method"], "analytical");
}

TEST(CliOptimize, SimulatedTwoUsersNearAnalysis) {
  const auto j = run_json({"optimize", "--simulated", "--users", "2", "--snr-db", "25",
                           "--p-min", "0.5", "--p-max", "0.7", "--p-step", "0.05", "--rate-min", "5.5",
                           "--rate-max", "6.5", "--rate-step", "0.25", "--refine", "0"});
  EXPECT_LE(std::abs(j["Rs_star"].get<double>() - 3.431), 3.0 * j["stderr"].get<double>() + 0.05);
}

TEST(CliOptimize, TableFileFormat) {
  TempDir dir;
  const auto o = run({"optimize", "--snr-db", "25", "--table", dir.file("t.csv")});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto text = slurp(dir.file("t.csv"));
  EXPECT_EQ(text.rfind("K,B_dB,p_star,R_star,Rs_star,method,stderr\n2,25,", 0), 0u);
  EXPECT_NE(text.find(",analytical,\n"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_TRUE(std::filesystem::exists(dir.file("t.csv.manifest.json")));
}

TEST(CliOptimize, AnalyticalNeedsTwoUsers) {
  EXPECT_EQ(run({"optimize", "--users", "3"}).code, cli::kUsageError);
  EXPECT_EQ(run({"optimize", "--analytical", "--simulated"}).code, cli::kUsageError);
}

TEST(CliTable, ByteIdenticalRerun) {
  TempDir dir;
  const std::vector<std::string> common{"--snr-db-list", "15,25", "--users-list", "2,3",
                                        "--experiments", "10", "--slots", "50",
                                        "--p-step", "0.25", "--p-min", "0.25", "--rate-step", "1.5",
                                        "--refine", "0"};
  auto a = common, b = common;
  a.insert(a.begin(), "table");
  b.insert(b.begin(), "table");
  a.insert(a.end(), {"--out", dir.file("a.csv")});
  b.insert(b.end(), {"--out", dir.file("b.csv")});
  const auto oa = run(a);
  ASSERT_EQ(oa.code, 0) << oa.err;
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(dir.file("a.csv")), slurp(dir.file("b.csv")));
  EXPECT_EQ(slurp(dir.file("a.csv")), oa.out);
  EXPECT_EQ(std::count(oa.out.begin(), oa.out.end(), '\n'), 5);
}

TEST(CliSweep, CsvShape) {
  const auto o = run({"sweep", "--users-list", "3", "--experiments", "10", "--slots", "50",
                      "--p-min", "0.25", "--p-step", "0.25", "--rate-min", "1", "--rate-step", "2",
                      "--refine", "0"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(o.out.rfind("K,scheme,p_star,R_star,Rs_star,stderr\n", 0), 0u);
  EXPECT_NE(o.out.find("\n3,cross-slot,"), std::string::npos);
  EXPECT_NE(o.out.find("\n3,intra-only,"), std::string::npos);
  EXPECT_NE(o.out.find("\n3,p=1,1.000000,"), std::string::npos);
  EXPECT_EQ(run({"sweep", "--users-list", "3", "--variants", "aloha"}).code, cli::kUsageError);
}

TEST(CliValidate, HealthyBuildPasses) {
  const auto o = run({"validate", "--samples", "200000", "--slots", "200000", "--structural-points", "50"});
  ASSERT_EQ(o.code, 0) << o.out << o.err;
  const auto j = json::parse(o.out);
  EXPECT_TRUE(j["passed"].get<bool>());
  ASSERT_EQ(j["checks"].size(), 5u);
  const auto& mc = j["checks"][0];
  EXPECT_EQ(mc["name"], "closed_form_vs_monte_carlo_events");
  EXPECT_EQ(mc["statistics"]["samples_per_triple"], 200000.0);
  EXPECT_EQ(mc["statistics"]["sigma_band"], 3.0);
}

TEST(CliValidate, InjectedFaultIsCaught) {
  const auto o = run({"validate", "--samples", "200000", "--slots", "200000", "--structural-points",
                      "50", "--inject-fault", "col2-sign"});
  EXPECT_EQ(o.code, cli::kCheckFailed);
  const auto j = json::parse(o.out);
  EXPECT_FALSE(j["passed"].get<bool>());
  EXPECT_EQ(j["checks"][0]["name"], "closed_form_vs_monte_carlo_events");
  EXPECT_FALSE(j["checks"][0]["passed"].get<bool>());
}

TEST(CliUsage, ExitCodes) {
  EXPECT_EQ(run({}).code, cli::kUsageError);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run({"simulate", "--no-such-flag"}).code, cli::kUsageError);
  EXPECT_EQ(run({"simulate", "--format", "xml"}).code, cli::kUsageError);
  const auto h = run({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("simulate"), std::string::npos);
}
