#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "gridstore/formulation.hpp"
#include "gridstore/solution.hpp"
#include "gridstore/solve.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace gridstore;
using gridstore::testing::copper_plate;
using gridstore::testing::toy_case;

namespace {

ProblemInstance single_cone(double u_min) {
  ProblemInstance pi;
  const auto x = pi.add_column("x", 2.0, 2.0, 0.0);
  const auto u = pi.add_column("u", u_min, kInf, 1.0);
  const auto v = pi.add_column("v", u_min, kInf, 1.0);
  pi.add_row("u_eq_v", "link", {{u, 1.0}, {v, -1.0}}, Sense::eq, 0.0);
  pi.cones.push_back({"cone", "test", {x}, ConeTerm::column(u), ConeTerm::column(v)});
  return pi;
}

}  // namespace

TEST(MipSolve, ToyChargesThenDischarges) {
  const auto c = toy_case();
  const auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 32});
  const auto r = mip_solve(pi);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, 14.4, 1e-6);
  EXPECT_NEAR(r.objective, gridstore::testing::toy_grid_oracle({2.0, 10.0}, 0.2, 4.0), 1e-6);
  const auto sol = extract_solution(pi, r);
  EXPECT_NEAR(sol.at({Role::stor_pc, 0, 0, 0}) * 100.0, 4.0, 1e-6);
  EXPECT_NEAR(sol.at({Role::stor_pd, 0, 0, 1}) * 100.0, 4.0, 1e-6);
}

TEST(MipSolve, ToyWithoutStorage) {
  auto c = toy_case();
  c.network.storages.clear();
  const auto r = mip_solve(build_problem(c.network, c.grid, {Formulation::dc_mi, 32}));
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.objective, 20.8, 1e-6);
}

TEST(MipSolve, FixedIndicatorsMatchLp) {
  const auto c = toy_case();
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 32});
  for (auto j : pi.binaries()) pi.columns[j].lb = pi.columns[j].ub = 1.0;
  const auto mip = mip_solve(pi);
  for (auto j : pi.binaries()) pi.columns[j].binary = false;
  const auto lp = lp_solve(pi);
  ASSERT_EQ(mip.status, SolveStatus::optimal);
  ASSERT_EQ(lp.status, SolveStatus::optimal);
  EXPECT_NEAR(mip.objective, lp.objective, 1e-9);
  EXPECT_LE(mip.nodes, 1u);
}

TEST(MipSolve, MatchesEnumeration) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 15; ++trial) {
    const auto pi = gridstore::testing::random_milp(rng, 2 + trial % 7, 3, 5);
    const auto mip = mip_solve(pi);
    const auto ref = gridstore::testing::enumerate_binaries(pi);
    ASSERT_EQ(mip.status, ref.status) << "trial " << trial;
    if (ref.status == SolveStatus::optimal)
      EXPECT_NEAR(mip.objective, ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective))) << "trial " << trial;
  }
}

TEST(MipSolve, InfeasibleTerminalCondition) {
  auto c = toy_case();
  auto& d = c.network.storages[0];
  d.terminal = {TerminalCondition::Kind::terminal_fixed, 9.0};  // at most 8 MWh can be stored in two steps
  const auto r = mip_solve(build_problem(c.network, c.grid, {Formulation::dc_mi, 8}));
  EXPECT_EQ(r.status, SolveStatus::infeasible);
  EXPECT_FALSE(r.has_solution());
}

TEST(MipSolve, Deterministic) {
  const auto c = toy_case();
  const auto pi = build_problem(c.network, c.grid, {Formulation::soc_mi, 16});
  SolveOptions o;
  o.deterministic_seed = 3;
  const auto a = solve(pi, o), b = solve(pi, o);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.lp_iterations, b.lp_iterations);
  // log lines carry wall-clock fields; compare the rest
  auto strip = [](std::vector<std::string> log) {
    static const std::regex timing(R"( (lp_seconds|time)=[0-9.e+-]+)");
    for (auto& l : log) l = std::regex_replace(l, timing, "");
    return log;
  };
  EXPECT_EQ(strip(a.log), strip(b.log));
}

TEST(OaLoop, SingleConeConverges) {
  SolveOptions o;
  const auto r = oa_loop(single_cone(0.0), o);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_NEAR(r.x[1], 2.0, 1e-3);
  EXPECT_NEAR(r.x[2], 2.0, 1e-3);
  EXPECT_LE(r.max_cone_violation, o.cone_tol);
  EXPECT_GT(r.cuts, 0u);
}

TEST(OaLoop, FeasibleStartAddsNoCuts) {
  const auto r = oa_loop(single_cone(3.0));
  ASSERT_EQ(r.status, SolveStatus::optimal);
  EXPECT_EQ(r.cuts, 0u);
  EXPECT_EQ(r.lp_solves, 1u);
  EXPECT_NEAR(r.objective, 6.0, 1e-9);
}

TEST(OaLoop, LossesOnlyRaiseCost) {
  auto c = toy_case();
  c.network.storages[0].z_phase = {Complex{0.1, 0.0}};
  const auto dc = solve(build_problem(c.network, c.grid, {Formulation::dc_mi, 32}));
  const auto soc = solve(build_problem(c.network, c.grid, {Formulation::soc_mi, 32}));
  ASSERT_EQ(dc.status, SolveStatus::optimal);
  ASSERT_EQ(soc.status, SolveStatus::optimal);
  EXPECT_GE(soc.objective, dc.objective - 1e-9);
}

TEST(Solve, RelaxationsBoundMixedInteger) {
  const auto c = copper_plate({3.0, 12.0, 1.0, 9.0});
  for (auto [mi, rel] : {std::pair{Formulation::dc_mi, Formulation::dc_relaxed},
                         std::pair{Formulation::soc_mi, Formulation::soc_relaxed}}) {
    const auto a = solve(build_problem(c.network, c.grid, {mi, 16}));
    const auto b = solve(build_problem(c.network, c.grid, {rel, 16}));
    ASSERT_EQ(a.status, SolveStatus::optimal);
    ASSERT_EQ(b.status, SolveStatus::optimal);
    EXPECT_LE(b.bound, a.objective + 1e-7);
  }
}

TEST(Solve, RejectsBadOptions) {
  SolveOptions o;
  o.mip_gap = 0.0;
  EXPECT_THROW(solve(single_cone(0.0), o), ValidationError);
  EXPECT_THROW(lp_solve(single_cone(0.0)), Error);
}

TEST(Solve, SummaryJsonHasCoreFields) {
  const auto r = oa_loop(single_cone(3.0));
  const auto j = summary_json(r);
  for (const char* k : {"status", "objective", "bound", "gap", "seconds"}) EXPECT_TRUE(j.contains(k)) << k;
}
