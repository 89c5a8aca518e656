#include <gtest/gtest.h>

#include "gridstore/formulation.hpp"
#include "gridstore/solution.hpp"
#include "gridstore/solve.hpp"
#include "gridstore/verify.hpp"
#include "support/fixtures.hpp"

using namespace gridstore;
using gridstore::testing::bundled_case;
using gridstore::testing::copper_plate;
using gridstore::testing::toy_case;

namespace {

StorageDevice section_device() {
  const auto c = bundled_case();
  StorageDevice d = c.network.storages.at(0);
  d.status.assign(1, 1.0);
  d.s_ext.assign(1, Complex{});
  return d;
}

/// DC-style solution built from a simulated trajectory.
Solution from_trajectory(const Network& net, const BufferTrajectory& tr) {
  Solution sol;
  sol.formulation = Formulation::dc_mi;
  const double base = net.base_mva;
  for (std::size_t k = 0; k < tr.energy.size(); ++k) {
    sol.values[{Role::stor_pc, 0, 0, k}] = tr.p_c[k] / base;
    sol.values[{Role::stor_pd, 0, 0, k}] = tr.p_d[k] / base;
    sol.values[{Role::stor_e, 0, 0, k}] = tr.energy[k] / base;
    sol.values[{Role::stor_p, 0, 0, k}] = (tr.p_c[k] - tr.p_d[k]) / base;
  }
  return sol;
}

}  // namespace

TEST(CheckSolution, SimulatedScheduleIsFeasible) {
  const auto c = toy_case();
  const auto tr = simulate_buffer(c.network.storages[0], c.grid, {{3.0, 0.0, {}}, {0.0, 2.5, {}}});
  ASSERT_FALSE(tr.clipped());
  const auto rep = check_solution(c.network, c.grid, from_trajectory(c.network, tr), 1e-9);
  EXPECT_TRUE(rep.feasible) << rep.text();
  for (const auto& f : rep.families)
    if (f.evaluated) EXPECT_LE(f.max, 1e-9) << f.family;
  EXPECT_FALSE(rep.family("voltage_bounds").evaluated);
}

TEST(CheckSolution, RelaxedComplementarityQuantified) {
  auto c = copper_plate({2.0, 10.0});
  c.network.base_mva = 1.0;
  BufferTrajectory tr;
  tr.p_c = {1.0, 0.0};
  tr.p_d = {1.0, 0.0};
  tr.energy = {0.0, 0.0};
  auto sol = from_trajectory(c.network, tr);
  sol.formulation = Formulation::dc_relaxed;
  const auto rep = check_solution(c.network, c.grid, sol, 1e-6);
  EXPECT_DOUBLE_EQ(rep.family("complementarity").max, 1.0);
  EXPECT_EQ(rep.family("complementarity").worst.step, 0u);
  EXPECT_FALSE(rep.feasible);
}

TEST(CheckSolution, SocSolutionConeSlack) {
  auto c = toy_case();
  c.network.storages[0].z_phase = {Complex{0.1, 0.0}};
  const auto pi = build_problem(c.network, c.grid, {Formulation::soc_mi, 32});
  SolveOptions o;
  const auto r = solve(pi, o);
  ASSERT_EQ(r.status, SolveStatus::optimal);
  const auto rep = check_solution(c.network, c.grid, extract_solution(pi, r), 1e-6);
  ASSERT_TRUE(rep.cone_slack.evaluated);
  // outer approximation stops once every cone holds to cone_tol
  EXPECT_GE(rep.cone_slack.min, -o.cone_tol);
  EXPECT_TRUE(rep.family("voltage_bounds").evaluated);
}

TEST(CheckSolution, DimensionMismatch) {
  const auto c = toy_case();
  const auto tr = simulate_buffer(c.network.storages[0], c.grid, {{3.0, 0.0, {}}, {0.0, 2.5, {}}});
  auto sol = from_trajectory(c.network, tr);
  auto extra = sol;
  extra.values[{Role::stor_pc, 0, 0, 2}] = 0.0;
  EXPECT_THROW(check_solution(c.network, c.grid, extra, 1e-6), Error);
  sol.values.erase({Role::stor_e, 0, 0, 1});
  EXPECT_THROW(check_solution(c.network, c.grid, sol, 1e-6), Error);
}

TEST(SimulateBuffer, ChargeStep) {
  const auto d = section_device();
  const auto tr = simulate_buffer(d, TimeGrid::uniform(0.25, 1), {{100.0, 0.0, {}}});
  EXPECT_NEAR(tr.energy[0], 22.25, 1e-12);
  EXPECT_FALSE(tr.clipped());
}

TEST(SimulateBuffer, DischargeClippedAtEmpty) {
  const auto d = section_device();
  const auto tr = simulate_buffer(d, TimeGrid::uniform(0.25, 1), {{0.0, 75.0, {}}});
  ASSERT_EQ(tr.clips.size(), 1u);
  EXPECT_EQ(tr.clips[0].reason, "energy_lower");
  EXPECT_EQ(tr.clips[0].commanded, 75.0);
  EXPECT_NEAR(tr.p_d[0], 1.0 * 0.9 / 0.25, 1e-12);
  EXPECT_NEAR(tr.energy[0], 0.0, 1e-12);
  EXPECT_EQ(tr.unresolved, 0.0);
}

TEST(SimulateBuffer, IdleIsFlat) {
  const auto d = section_device();
  auto dd = d;
  dd.status.assign(4, 1.0);
  dd.s_ext.assign(4, Complex{});
  const auto tr = simulate_buffer(dd, TimeGrid::uniform(0.25, 4), std::vector<ScheduleStep>(4));
  for (double e : tr.energy) EXPECT_EQ(e, dd.e_init);
}

TEST(SimulateBuffer, OfflineAndRatingClips) {
  auto d = section_device();
  d.status.assign(2, 1.0);
  d.s_ext.assign(2, Complex{});
  const auto tr = simulate_buffer(d, TimeGrid::uniform(0.25, 2), {{150.0, 0.0, {}}, {10.0, 0.0, 0.0}});
  ASSERT_EQ(tr.clips.size(), 2u);
  EXPECT_EQ(tr.clips[0].reason, "rating");
  EXPECT_EQ(tr.p_c[0], 100.0);
  EXPECT_EQ(tr.clips[1].reason, "offline");
  EXPECT_EQ(tr.p_c[1], 0.0);
}

TEST(SimulateBuffer, ReproducesOptimizerTrajectory) {
  for (auto rule : {DiscretizationRule::endpoint, DiscretizationRule::trapezoid}) {
    auto c = gridstore::testing::truncated(bundled_case(), 24);
    c.grid.rule = rule;
    const auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 16});
    const auto r = solve(pi);
    ASSERT_EQ(r.status, SolveStatus::optimal);
    const auto sol = extract_solution(pi, r);
    const double base = c.network.base_mva;
    std::vector<ScheduleStep> sched;
    for (std::size_t k = 0; k < c.grid.steps(); ++k)
      sched.push_back({sol.at({Role::stor_pc, 0, 0, k}) * base, sol.at({Role::stor_pd, 0, 0, k}) * base, {}});
    const auto tr = simulate_buffer(c.network.storages[0], c.grid, sched);
    for (std::size_t k = 0; k < c.grid.steps(); ++k)
      EXPECT_NEAR(tr.energy[k], sol.at({Role::stor_e, 0, 0, k}) * base, 1e-9) << "step " << k;
  }
}

TEST(BoundReport, ReferenceValuesOrdering) {
  const auto rep = bound_report({{Formulation::dc_mi, {807625.0, 807625.0}}, {Formulation::soc_mi, {870519.0, 870519.0}}},
                                871971.0);
  EXPECT_TRUE(rep.ok);
  ASSERT_TRUE(rep.soc_reference_gap.has_value());
  EXPECT_NEAR(*rep.soc_reference_gap, 0.00167, 5e-6);
}

TEST(BoundReport, NeedsTwoFormulations) {
  EXPECT_THROW(bound_report(std::map<Formulation, BoundEntry>{{Formulation::dc_mi, {1.0, 1.0}}}), Error);
}

TEST(BoundReport, DcAboveSocFails) {
  const auto rep = bound_report({{Formulation::dc_mi, {100.0, 100.0}}, {Formulation::soc_mi, {99.0, 99.0}}});
  EXPECT_FALSE(rep.ok);
  EXPECT_FALSE(rep.checks.at(0).holds);
}
