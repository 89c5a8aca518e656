#pragma once

#include <string>
#include <vector>

#include "gridstore/case_io.hpp"
#include "gridstore/datamodel.hpp"

namespace gridstore::testing {

inline std::string data_path(const std::string& file) { return std::string(GRIDSTORE_DATA_DIR) + "/" + file; }

inline Case bundled_case() { return load_case(data_path("bess_14bus.json")); }
inline Case toy_case() { return load_case(data_path("toy_2step.json")); }

inline StorageDevice make_device(const std::string& id, const std::string& bus, std::size_t steps,
                                 std::size_t conductors = 1) {
  StorageDevice d;
  d.id = id;
  d.bus = bus;
  d.status.assign(steps, 1.0);
  d.s_ext.assign(steps, Complex{});
  d.s_rating_total = 10.0;
  d.eta_c = 1.0;
  d.eta_d = 1.0;
  d.e_init = 0.0;
  d.e_max = 10.0;
  d.p_c_max = 4.0;
  d.p_d_max = 4.0;
  d.z_phase.assign(conductors, Complex{});
  d.terminal.kind = TerminalCondition::Kind::terminal_ge_initial;
  return d;
}

/// Keeps the first n steps of every series.
inline Case truncated(Case c, std::size_t n) {
  c.grid.durations.resize(n);
  for (auto& b : c.network.buses)
    for (auto& series : b.load) series.resize(n);
  for (auto& d : c.network.storages) {
    d.status.resize(n);
    d.s_ext.resize(n);
  }
  return c;
}

/// One bus, one quadratic generator, optional storage; loads in MW.
inline Case copper_plate(const std::vector<double>& loads_mw, double c2 = 0.2, bool with_storage = true) {
  Case c;
  c.grid = TimeGrid::uniform(1.0, loads_mw.size());
  c.network.name = "copper_plate";
  Bus b;
  b.id = "1";
  b.reference = true;
  b.conductors = {0};
  b.u_min = {0.9};
  b.u_max = {1.1};
  b.load.resize(1);
  for (double l : loads_mw) b.load[0].push_back({l, 0.0});
  c.network.buses.push_back(b);
  Generator g;
  g.id = "g1";
  g.bus = "1";
  g.p_max = 32.0;
  g.q_min = -32.0;
  g.q_max = 32.0;
  g.cost.c2 = c2;
  c.network.generators.push_back(g);
  if (with_storage) c.network.storages.push_back(make_device("s1", "1", loads_mw.size()));
  return c;
}

/// Small battery: 0.95 efficiencies, R = 0.1 pu.
inline StorageDevice table_bess(std::size_t steps) {
  auto d = make_device("bess", "1", steps);
  d.eta_c = d.eta_d = 0.95;
  d.e_max = 0.010;
  d.e_init = 0.0;
  d.p_c_max = d.p_d_max = 0.005;
  d.s_rating_total = 0.005;
  d.z_phase = {Complex{0.1, 0.0}};
  return d;
}

}  // namespace gridstore::testing
