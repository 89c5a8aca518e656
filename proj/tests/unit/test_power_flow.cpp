#include <gtest/gtest.h>

#include "gridstore/power_flow.hpp"
#include "support/fixtures.hpp"

using namespace gridstore;
using gridstore::testing::copper_plate;

namespace {

Case two_bus(double load_mw, double load_mvar) {
  auto c = copper_plate({0.0}, 0.1, false);
  c.network.generators[0].p_max = 200.0;
  c.network.generators[0].q_min = -100.0;
  c.network.generators[0].q_max = 100.0;
  Bus b2 = c.network.buses[0];
  b2.id = "2";
  b2.reference = false;
  b2.load = {{Complex{load_mw, load_mvar}}};
  c.network.buses.push_back(b2);
  c.network.branches.push_back({"1-2", "1", "2", 0, 0.01, 0.1, 0.0, 200.0});
  return c;
}

}  // namespace

TEST(PowerFlow, TwoBusLosses) {
  const auto c = two_bus(50.0, 10.0);
  Solution set;
  set.values[{Role::bus_vm, 0, 0, 0}] = 1.0;
  const auto r = evaluate_ac_dispatch(c.network, c.grid, set, 32);
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_TRUE(r.feasible) << r.message;
  const double pg = r.point.at({Role::gen_p, 0, 0, 0});
  const double v2 = r.point.at({Role::bus_vm, 1, 0, 0});
  EXPECT_LT(v2, 1.0);
  // series loss r |S_to|^2 / |U_to|^2 closes the balance
  const double loss = 0.01 * (0.5 * 0.5 + 0.1 * 0.1) / (v2 * v2);
  EXPECT_NEAR(pg, 0.5 + loss, 1e-8);
  EXPECT_NEAR(r.objective, pwl_cost(c.network.generators[0], pg * 100.0, 32), 1e-9);
}

TEST(PowerFlow, StorageDrawIncludesCopperLoss) {
  auto c = copper_plate({20.0}, 0.1, true);
  auto& d = c.network.storages[0];
  d.z_phase = {Complex{0.1, 0.0}};
  d.e_init = 5.0;
  d.terminal.kind = TerminalCondition::Kind::fixed_init;
  // the buffer releases 4 MW; the converter delivers that minus its copper loss
  Solution set;
  set.values[{Role::bus_vm, 0, 0, 0}] = 1.0;
  set.values[{Role::stor_p, 0, 0, 0}] = -0.04;
  set.values[{Role::stor_pc, 0, 0, 0}] = 0.0;
  set.values[{Role::stor_pd, 0, 0, 0}] = 0.04;
  set.values[{Role::stor_e, 0, 0, 0}] = 0.01;
  const auto r = evaluate_ac_dispatch(c.network, c.grid, set, 32);
  ASSERT_TRUE(r.converged) << r.message;
  EXPECT_TRUE(r.feasible) << r.storage.text();
  const double p = r.point.at({Role::stor_p, 0, 0, 0});
  const double i = r.point.at({Role::stor_i, 0, 0, 0});
  const double u = r.point.at({Role::bus_vm, 0, 0, 0});
  EXPECT_NEAR(i * i, p * p / (u * u), 1e-12);
  EXPECT_NEAR(p, -0.04 + 0.1 * i * i, 1e-10);
  EXPECT_GT(p, -0.04);
  EXPECT_NEAR(r.point.at({Role::gen_p, 0, 0, 0}), 0.2 + p, 1e-9);
  EXPECT_LE(r.storage.family("complex_balance").max, 1e-9);
}

TEST(PowerFlow, OverloadedBranchReported) {
  auto c = two_bus(150.0, 0.0);
  c.network.branches[0].rating_mva = 100.0;
  Solution set;
  set.values[{Role::bus_vm, 0, 0, 0}] = 1.0;
  const auto r = evaluate_ac_dispatch(c.network, c.grid, set, 32);
  ASSERT_TRUE(r.converged);
  EXPECT_FALSE(r.feasible);
  EXPECT_GT(r.max_violation(), 0.4);
}
