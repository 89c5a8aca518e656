#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "gridstore/cli.hpp"
#include "support/fixtures.hpp"
#include "support/lp_reader.hpp"

using namespace gridstore;
using gridstore::testing::data_path;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gridstore");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("gridstore_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path write_case(const std::function<void(nlohmann::json&)>& edit) {
    auto doc = nlohmann::json::parse(slurp(data_path("toy_2step.json")));
    edit(doc);
    const auto p = dir / "case.json";
    std::ofstream(p) << doc.dump();
    return p;
  }

  fs::path dir;
};

}  // namespace

TEST_F(Cli, SolveBundledCaseWritesOutputs) {
  const auto r = cli({"solve", data_path("bess_14bus.json"), "--formulation", "dc-mi", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "dispatch.csv");
  EXPECT_EQ(count_lines(csv), 1u + 96u);
  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  for (const char* k : {"objective", "bound", "gap", "seconds"}) EXPECT_TRUE(summary.contains(k)) << k;
  const auto check = cli({"check", data_path("bess_14bus.json"), (dir / "solution.json").string()});
  EXPECT_EQ(check.code, 0) << check.out << check.err;
  EXPECT_NE(check.out.find("feasible"), std::string::npos);
}

TEST_F(Cli, UnknownFormulationPrintsUsage) {
  const auto r = cli({"solve", data_path("toy_2step.json"), "--formulation", "ac-magic"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST_F(Cli, MissingSubcommand) { EXPECT_EQ(cli({}).code, 1); }

TEST_F(Cli, InfeasibleTerminalCondition) {
  const auto p = write_case([](nlohmann::json& d) { d["storages"][0]["terminal_condition"] = {{"terminal_fixed", 9.0}}; });
  const auto r = cli({"solve", p.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_FALSE(fs::exists(dir / "solution.json"));
}

TEST_F(Cli, InvalidCaseExitsOne) {
  const auto p = write_case([](nlohmann::json& d) { d["storages"][0]["eta_d"] = 0.0; });
  const auto r = cli({"solve", p.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("eta_d"), std::string::npos);
}

TEST_F(Cli, TimeLimitExitsThree) {
  const auto opts = dir / "opts.toml";
  std::ofstream(opts) << "[solve]\ntime-limit = 1e-9\n";
  const auto r = cli({"--options", opts.string(), "solve", data_path("bess_14bus.json"), "--out", dir.string()});
  EXPECT_EQ(r.code, 3) << r.out << r.err;
}

TEST_F(Cli, OptionsFileFromEnvironment) {
  const auto opts = dir / "opts.toml";
  std::ofstream(opts) << "[solve]\nformulation = \"soc-mi\"\n";
  ::setenv(kOptionsEnv, opts.string().c_str(), 1);
  const auto r = cli({"solve", data_path("toy_2step.json"), "--out", dir.string()});
  ::unsetenv(kOptionsEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("soc-mi optimal", 0), 0u) << r.out;
}

TEST_F(Cli, CheckReportsInfeasibleSolution) {
  ASSERT_EQ(cli({"solve", data_path("toy_2step.json"), "--out", dir.string()}).code, 0);
  auto sol = nlohmann::json::parse(slurp(dir / "solution.json"));
  for (auto& v : sol["values"])
    if (v["role"] == "pd" && v["step"] == 0) v["value"] = 0.04;  // simultaneous with the charge
  std::ofstream(dir / "bad.json") << sol.dump();
  const auto r = cli({"check", data_path("toy_2step.json"), (dir / "bad.json").string(), "--json"});
  EXPECT_EQ(r.code, 2);
  const auto rep = nlohmann::json::parse(r.out);
  EXPECT_FALSE(rep["feasible"].get<bool>());
}

TEST_F(Cli, SimulateRoundTripsDispatch) {
  ASSERT_EQ(cli({"solve", data_path("toy_2step.json"), "--out", dir.string()}).code, 0);
  const auto traj = dir / "traj.csv";
  const auto r = cli({"simulate", data_path("toy_2step.json"), (dir / "dispatch.csv").string(), "--out", traj.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.err.empty()) << r.err;  // no clipping
  const auto sched = read_schedule_csv(slurp(traj));
  EXPECT_EQ(sched.at("s1").size(), 2u);
  EXPECT_NEAR(sched.at("s1")[0].p_c, 4.0, 1e-9);
}

TEST_F(Cli, SimulateReportsClip) {
  std::ofstream(dir / "s.csv") << "step,device,p_charge_mw,p_discharge_mw\n0,s1,0,3\n1,s1,0,0\n";
  const auto r = cli({"simulate", data_path("toy_2step.json"), (dir / "s.csv").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("energy_lower"), std::string::npos);
  EXPECT_NE(r.out.find("0,0,s1,0,0,0,0,1"), std::string::npos) << r.out;
}

TEST_F(Cli, Replicate3pReadsBack) {
  const auto out = dir / "three.json";
  ASSERT_EQ(cli({"replicate3p", data_path("toy_2step.json"), "--splits", "0.36,0.33,0.31", "--out", out.string()}).code, 0);
  const auto c = load_case(out);
  ASSERT_EQ(c.network.conductors.size(), 3u);
  EXPECT_NEAR(c.network.buses[0].load[0][1].real(), 3.6, 1e-12);
  EXPECT_EQ(cli({"replicate3p", data_path("toy_2step.json"), "--splits", "0.5,0.5,0.1"}).code, 1);
}

TEST_F(Cli, ExportFormats) {
  const auto lp = cli({"export", data_path("toy_2step.json"), "--format", "lp"});
  ASSERT_EQ(lp.code, 0);
  EXPECT_EQ(gridstore::testing::read_lp(lp.out).rows.size(), 15u);
  EXPECT_EQ(cli({"export", data_path("toy_2step.json"), "-f", "soc-mi", "--format", "lp"}).code, 1);
  const auto snap = cli({"export", data_path("toy_2step.json"), "-f", "soc-mi", "--format", "lp", "--oa-snapshot"});
  EXPECT_EQ(snap.code, 0) << snap.err;
  const auto js = cli({"export", data_path("toy_2step.json"), "-f", "ac-nl", "--format", "json"});
  ASSERT_EQ(js.code, 0);
  EXPECT_FALSE(problem_from_json(nlohmann::json::parse(js.out)).nonlinear.empty());
}

TEST_F(Cli, Deterministic) {
  const auto a = dir / "a", b = dir / "b";
  ASSERT_EQ(cli({"solve", data_path("toy_2step.json"), "-f", "soc-mi", "--seed", "5", "--out", a.string()}).code, 0);
  ASSERT_EQ(cli({"solve", data_path("toy_2step.json"), "-f", "soc-mi", "--seed", "5", "--out", b.string()}).code, 0);
  EXPECT_EQ(slurp(a / "dispatch.csv"), slurp(b / "dispatch.csv"));
  const auto ja = nlohmann::json::parse(slurp(a / "solution.json"));
  const auto jb = nlohmann::json::parse(slurp(b / "solution.json"));
  EXPECT_EQ(ja["values"], jb["values"]);
  EXPECT_EQ(ja["objective"], jb["objective"]);
}
