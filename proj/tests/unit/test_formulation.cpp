#include <gtest/gtest.h>

#include <algorithm>

#include "gridstore/formulation.hpp"
#include "gridstore/solve.hpp"
#include "gridstore/verify.hpp"
#include "support/fixtures.hpp"

using namespace gridstore;
using gridstore::testing::bundled_case;
using gridstore::testing::copper_plate;
using gridstore::testing::truncated;

namespace {

const Row& find_row(const ProblemInstance& pi, const std::string& name) {
  auto it = std::find_if(pi.rows.begin(), pi.rows.end(), [&](const Row& r) { return r.name == name; });
  if (it == pi.rows.end()) throw Error("no row " + name);
  return *it;
}

double coef(const Row& r, std::size_t col) {
  double c = 0.0;
  for (const auto& t : r.terms)
    if (t.col == col) c += t.coef;
  return c;
}

Case unit_base(Case c) {
  c.network.base_mva = 1.0;
  return c;
}

}  // namespace

TEST(EmitStorageDc, OfflineStepFixesConverterPower) {
  auto c = copper_plate({2.0, 10.0});
  c.network.storages[0].status = {1.0, 0.0};
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 4});
  const auto& col = pi.columns[pi.col({Role::stor_p, 0, 0, 1})];
  EXPECT_EQ(col.lb, 0.0);
  EXPECT_EQ(col.ub, 0.0);
}

TEST(EmitStorageDc, BalanceRowWithoutExternalInjection) {
  auto c = copper_plate({2.0, 10.0});
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 4});
  const auto& bal = find_row(pi, "stor_balance_s1_k1");
  EXPECT_EQ(bal.sense, Sense::eq);
  EXPECT_EQ(bal.rhs, 0.0);
  EXPECT_EQ(coef(bal, pi.col({Role::stor_p, 0, 0, 0})), 1.0);
  EXPECT_EQ(coef(bal, pi.col({Role::stor_pstor, 0, 0, 0})), 1.0);
  const auto& split = find_row(pi, "stor_split_s1_k1");
  EXPECT_EQ(coef(split, pi.col({Role::stor_pd, 0, 0, 0})), -1.0);
  EXPECT_EQ(coef(split, pi.col({Role::stor_pc, 0, 0, 0})), 1.0);
}

TEST(EmitStorageDc, RowCountsForFullDay) {
  const auto c = bundled_case();
  ProblemInstance pi;
  emit_storage_dc(pi, c.network, c.grid);
  EXPECT_EQ(pi.count_rows("stor_balance"), 96u);
  EXPECT_EQ(pi.count_rows("energy"), 96u);
  EXPECT_EQ(pi.count_rows("boundary"), 1u);
}

TEST(EmitStorageSoc, LosslessReducesToDcPlusReactiveRow) {
  auto c = copper_plate({2.0, 10.0});
  auto pi = build_problem(c.network, c.grid, {Formulation::soc_mi, 4});
  const auto& p = find_row(pi, "stor_balance_p_s1_k1");
  EXPECT_EQ(p.terms.size(), 2u);  // P and Pstor, no loss term
  EXPECT_EQ(coef(p, pi.col({Role::stor_p, 0, 0, 0})), 1.0);
  EXPECT_EQ(coef(p, pi.col({Role::stor_pstor, 0, 0, 0})), 1.0);
  const auto& q = find_row(pi, "stor_balance_q_s1_k1");
  EXPECT_EQ(coef(q, pi.col({Role::stor_q, 0, 0, 0})), 1.0);
  EXPECT_EQ(coef(q, pi.col({Role::stor_qint, 0, 0, 0})), -1.0);
}

TEST(EmitStorageSoc, ConeViolationArithmetic) {
  ConeConstraint cone{"c", "stor_lifted", {0, 1}, ConeTerm::column(2), ConeTerm::column(3)};
  EXPECT_DOUBLE_EQ(cone.violation({3.0, 4.0, 1.0, 1.0}), 24.0);
  EXPECT_DOUBLE_EQ(cone.violation({3.0, 4.0, 5.0, 5.0}), 0.0);
}

TEST(EmitStorageSoc, ImpedanceEntersBalance) {
  auto c = copper_plate({2.0, 10.0});
  c.network.storages[0].z_phase = {Complex{0.1, 0.01}};
  auto pi = build_problem(c.network, c.grid, {Formulation::soc_mi, 4});
  const auto l = pi.col({Role::stor_l, 0, 0, 0});
  EXPECT_EQ(coef(find_row(pi, "stor_balance_p_s1_k1"), l), -0.1);
  EXPECT_EQ(coef(find_row(pi, "stor_balance_q_s1_k1"), l), -0.01);
  EXPECT_EQ(pi.count_cones("stor_lifted"), 2u);
}

TEST(AcResiduals, LosslessConstructedPointIsClean) {
  auto c = unit_base(copper_plate({2.0, 10.0}));
  const auto res = emit_storage_ac_residuals(c.network, c.grid);
  std::map<VarKey, double> pt;
  const double pd[2] = {0.0, 3.0}, pc[2] = {3.0, 0.0}, q = 1.5;
  double e = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    e += pc[k] - pd[k];
    const double pstor = pd[k] - pc[k];
    pt[{Role::stor_pc, 0, 0, k}] = pc[k];
    pt[{Role::stor_pd, 0, 0, k}] = pd[k];
    pt[{Role::stor_e, 0, 0, k}] = e;
    pt[{Role::stor_pstor, 0, 0, k}] = pstor;
    pt[{Role::stor_p, 0, 0, k}] = -pstor;
    pt[{Role::stor_q, 0, 0, k}] = q;
    pt[{Role::stor_qint, 0, 0, k}] = q;
    pt[{Role::bus_vm, 0, 0, k}] = 1.0;
    pt[{Role::stor_i, 0, 0, k}] = std::hypot(pstor, q);
  }
  const auto rep = res.evaluate(pt, 1e-12);
  EXPECT_TRUE(rep.feasible) << rep.text();
  for (const auto& f : rep.families) EXPECT_EQ(f.max, 0.0) << f.family;
}

TEST(AcResiduals, ComplementarityProduct) {
  auto c = unit_base(copper_plate({2.0}));
  c.network.storages[0].p_c_max = 100.0;
  c.network.storages[0].p_d_max = 100.0;
  c.network.storages[0].e_max = 1000.0;
  c.network.storages[0].s_rating_total = 1000.0;
  std::map<VarKey, double> pt{{{Role::stor_pc, 0, 0, 0}, 10.0},  {{Role::stor_pd, 0, 0, 0}, 75.0},
                              {{Role::stor_e, 0, 0, 0}, -65.0}, {{Role::stor_p, 0, 0, 0}, -65.0},
                              {{Role::stor_q, 0, 0, 0}, 0.0},   {{Role::stor_qint, 0, 0, 0}, 0.0},
                              {{Role::bus_vm, 0, 0, 0}, 1.0}};
  const auto rep = emit_storage_ac_residuals(c.network, c.grid).evaluate(pt, 1e-9);
  EXPECT_DOUBLE_EQ(rep.family("complementarity").max, 750.0);
  EXPECT_FALSE(rep.feasible);
}

TEST(AcResiduals, CopperLossFromVoltageAndPower) {
  auto c = unit_base(copper_plate({2.0}));
  auto& d = c.network.storages[0];
  d.z_phase = {Complex{0.1, 0.01}};
  d.s_rating_total = 10000.0;
  // |U| = 1, |S| = 100: losses 1000 + j100 are balanced by Pstor and Qint
  std::map<VarKey, double> pt{{{Role::stor_pc, 0, 0, 0}, 0.0},     {{Role::stor_pd, 0, 0, 0}, 0.0},
                              {{Role::stor_e, 0, 0, 0}, 0.0},      {{Role::stor_p, 0, 0, 0}, 100.0},
                              {{Role::stor_q, 0, 0, 0}, 0.0},      {{Role::stor_pstor, 0, 0, 0}, 900.0},
                              {{Role::stor_qint, 0, 0, 0}, -100.0}, {{Role::bus_vm, 0, 0, 0}, 1.0}};
  const auto res = emit_storage_ac_residuals(c.network, c.grid);
  EXPECT_NEAR(res.evaluate(pt, 1e-9).family("complex_balance").max, 0.0, 1e-9);
  pt[{Role::stor_pstor, 0, 0, 0}] = -100.0;
  pt[{Role::stor_qint, 0, 0, 0}] = 0.0;
  EXPECT_NEAR(res.evaluate(pt, 1e-9).family("complex_balance").max, std::hypot(1000.0, 100.0), 1e-9);
}

TEST(EmitComplementarity, IndicatorDisablesOneSide) {
  auto c = copper_plate({2.0, 10.0});
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 4});
  const auto z = pi.col({Role::stor_z, 0, 0, 0});
  const auto& dis = find_row(pi, "compl_discharge_s1_k1");
  const auto& chg = find_row(pi, "compl_charge_s1_k1");
  // z = 1: Pd <= rhs - coef_z
  EXPECT_DOUBLE_EQ(dis.rhs - coef(dis, z) * 1.0, 0.0);
  // z = 0: Pc <= 0
  EXPECT_DOUBLE_EQ(chg.rhs - coef(chg, z) * 0.0, 0.0);
  EXPECT_TRUE(pi.columns[z].binary);
}

TEST(EmitComplementarity, RelaxedAdmitsSimultaneousFlow) {
  auto c = copper_plate({2.0, 10.0});
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_relaxed, 4});
  const auto z = pi.col({Role::stor_z, 0, 0, 0}), pc = pi.col({Role::stor_pc, 0, 0, 0}),
             pd = pi.col({Role::stor_pd, 0, 0, 0});
  EXPECT_FALSE(pi.columns[z].binary);
  std::vector<double> x(pi.columns.size(), 0.0);
  x[z] = 0.5;
  x[pc] = pi.columns[pc].ub / 2;
  x[pd] = pi.columns[pd].ub / 2;
  for (const char* name : {"compl_charge_s1_k1", "compl_discharge_s1_k1"}) {
    const auto& r = find_row(pi, name);
    double lhs = 0.0;
    for (const auto& t : r.terms) lhs += t.coef * x[t.col];
    EXPECT_LE(lhs, r.rhs + 1e-15) << name;
  }
}

TEST(EmitNetwork, CopperPlateBalance) {
  auto c = copper_plate({2.0, 10.0});
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 4});
  const auto& r = find_row(pi, "bus_balance_p_1_a_k2");
  EXPECT_EQ(coef(r, pi.col({Role::gen_p, 0, 0, 1})), 1.0);
  EXPECT_EQ(coef(r, pi.col({Role::stor_p, 0, 0, 1})), -1.0);
  EXPECT_DOUBLE_EQ(r.rhs, 0.1);
  EXPECT_EQ(pi.count_rows("branch_flow"), 0u);
}

TEST(EmitNetwork, DcBranchFlowFromAngles) {
  auto c = copper_plate({0.0}, 0.2, false);
  Bus b2 = c.network.buses[0];
  b2.id = "2";
  b2.reference = false;
  c.network.buses.push_back(b2);
  c.network.branches.push_back({"1-2", "1", "2", 0, 0.0, 0.1, 0.0, 100.0});
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 4});
  const auto& r = find_row(pi, "branch_flow_1_2_a_k1");
  std::vector<double> x(pi.columns.size(), 0.0);
  x[pi.col({Role::bus_angle, 0, 0, 0})] = 0.01;
  double rest = 0.0;
  const auto f = pi.col({Role::branch_flow, 0, 0, 0});
  for (const auto& t : r.terms)
    if (t.col != f) rest += t.coef * x[t.col];
  EXPECT_NEAR(-rest / coef(r, f), 0.1, 1e-12);
}

TEST(EmitNetwork, SingleStepMatchesMeritOrder) {
  auto c = truncated(bundled_case(), 1);
  c.network.storages.clear();
  const int segments = 32;
  auto r = solve(build_problem(c.network, c.grid, {Formulation::dc_mi, segments}));
  ASSERT_EQ(r.status, SolveStatus::optimal);

  // Independent oracle: fill PWL segments of all generators in price order.
  double demand = 0.0;
  for (const auto& b : c.network.buses) demand += b.load[0][0].real() + b.shunt_g;
  struct Seg { double price, width; };
  std::vector<Seg> segs;
  double cost = 0.0;
  for (const auto& g : c.network.generators) {
    demand -= g.p_min;
    cost += g.cost(g.p_min);
    const int n = g.cost.c2 == 0.0 ? 1 : segments;
    const double w = (g.p_max - g.p_min) / n;
    if (!(w > 0.0)) continue;
    for (int s = 0; s < n; ++s) {
      const double lo = g.p_min + w * s, hi = lo + w;
      segs.push_back({(g.cost(hi) - g.cost(lo)) / w, w});
    }
  }
  std::sort(segs.begin(), segs.end(), [](const Seg& a, const Seg& b) { return a.price < b.price; });
  for (const auto& s : segs) {
    const double take = std::min(s.width, std::max(0.0, demand));
    cost += take * s.price;
    demand -= take;
  }
  ASSERT_LE(demand, 1e-9);
  cost *= c.grid.durations[0];
  EXPECT_NEAR(r.objective, cost, 1e-6 * cost);
}

TEST(EmitNetwork, DisconnectedNetworkRejected) {
  auto c = copper_plate({1.0}, 0.2, false);
  Bus b2 = c.network.buses[0];
  b2.id = "2";
  b2.reference = false;
  c.network.buses.push_back(b2);
  EXPECT_THROW(build_problem(c.network, c.grid, {Formulation::dc_mi, 4}), Error);
}

TEST(BuildObjective, QuadraticErrorBound) {
  Generator g;
  g.p_max = 32.0;
  g.cost.c2 = 0.2;
  const double err = pwl_cost(g, 10.0, 32) - 20.0;
  EXPECT_GE(err, 0.0);
  EXPECT_LE(err, 0.2 * 32.0 * 32.0 / 4096.0);
}

TEST(BuildObjective, LinearCostUsesOneSegment) {
  auto c = copper_plate({2.0, 10.0}, 0.0);
  c.network.generators[0].cost.c1 = 5.0;
  auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 32});
  std::size_t segs = 0;
  for (const auto& col : pi.columns) segs += col.key && col.key->role == Role::gen_segment;
  EXPECT_EQ(segs, 2u);
  EXPECT_EQ(pi.pwl_error_bound, 0.0);
}

TEST(BuildObjective, SecantTightAtBreakpoints) {
  Generator g;
  g.p_max = 10.0;
  g.cost.c2 = 0.2;
  EXPECT_DOUBLE_EQ(pwl_cost(g, 0.0, 2), 0.0);
  EXPECT_DOUBLE_EQ(pwl_cost(g, 5.0, 2), 5.0);
  EXPECT_DOUBLE_EQ(pwl_cost(g, 10.0, 2), 20.0);
  EXPECT_DOUBLE_EQ(pwl_cost(g, 2.5, 2), 2.5);
}

TEST(BuildProblem, ColumnAccounting) {
  const auto c = bundled_case();
  const auto& net = c.network;
  const std::size_t n = c.grid.steps(), segments = 16;
  std::size_t seg_cols = 0;
  for (const auto& g : net.generators)
    if (g.p_max > g.p_min) seg_cols += g.cost.c2 == 0.0 ? 1 : segments;
  std::size_t bus_cond = 0, stor_cond = 0;
  for (const auto& b : net.buses) bus_cond += b.conductors.size();
  for (const auto& d : net.storages) stor_cond += net.bus(d.bus).conductors.size();
  const std::size_t ns = net.storages.size(), ng = net.generators.size(), nb = net.branches.size();

  auto dc = build_problem(net, c.grid, {Formulation::dc_mi, static_cast<int>(segments)});
  EXPECT_EQ(dc.columns.size(), n * (5 * ns + stor_cond + ng + seg_cols + bus_cond + nb));
  auto soc = build_problem(net, c.grid, {Formulation::soc_mi, static_cast<int>(segments)});
  EXPECT_EQ(soc.columns.size(), n * (6 * ns + 3 * stor_cond + 2 * ng + seg_cols + bus_cond + 5 * nb));
  EXPECT_EQ(soc.binaries().size(), n * ns);
  EXPECT_TRUE(build_problem(net, c.grid, {Formulation::soc_relaxed, 4}).binaries().empty());
}
