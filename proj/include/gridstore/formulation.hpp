#pragma once

// Constraint emission for the storage model and the network it sits in.
//
// Every emitter appends columns/rows/cones to a ProblemInstance under
// construction. All electrical quantities are per-unit on base_mva; energies
// are per-unit hours (MWh / base_mva); cost coefficients are in $.
//
// Sign conventions: storage P_{c,p,k} is positive when power flows from the
// grid into the converter; generator injections are positive into the bus.

#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gridstore/datamodel.hpp"
#include "gridstore/discretize.hpp"
#include "gridstore/problem.hpp"

namespace gridstore {

enum class ComplementarityMode { binary, relaxed };
enum class NetworkKind { dc, soc };

struct FormulationOptions {
  Formulation formulation = Formulation::dc_mi;
  int segments = 32;
};

namespace formulation_detail {

inline std::string sanitize(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') ? ch : '_';
  return out;
}

inline std::string name(Role role, const std::string& entity, const std::string& conductor, std::size_t step,
                        std::size_t extra = npos) {
  std::string n = std::string(role_name(role)) + "_" + sanitize(entity);
  if (!conductor.empty()) n += "_" + sanitize(conductor);
  if (extra != npos) n += "_s" + std::to_string(extra + 1);
  n += "_k" + std::to_string(step + 1);
  return n;
}

inline std::string row_name(const std::string& family, const std::string& entity, const std::string& conductor,
                            std::size_t step) {
  std::string n = family + "_" + sanitize(entity);
  if (!conductor.empty()) n += "_" + sanitize(conductor);
  return n + "_k" + std::to_string(step + 1);
}

/// Appends term unless the coefficient is exactly zero.
inline void push(std::vector<Term>& terms, std::size_t col, double coef) {
  if (coef != 0.0) terms.push_back({col, coef});
}

inline std::size_t ensure_bus_w(ProblemInstance& pi, const Network& net, std::size_t bi, std::size_t conductor,
                                std::size_t k) {
  VarKey key{Role::bus_w, bi, conductor, k};
  if (auto c = pi.find(key)) return *c;
  const Bus& bus = net.buses[bi];
  const std::size_t p = bus.local_conductor(conductor);
  return pi.add_column(name(Role::bus_w, bus.id, net.conductors[conductor], k), bus.u_min[p] * bus.u_min[p],
                       bus.u_max[p] * bus.u_max[p], 0.0, false, key);
}

inline std::size_t ensure_bus_vm(ProblemInstance& pi, const Network& net, std::size_t bi, std::size_t conductor,
                                 std::size_t k) {
  VarKey key{Role::bus_vm, bi, conductor, k};
  if (auto c = pi.find(key)) return *c;
  const Bus& bus = net.buses[bi];
  const std::size_t p = bus.local_conductor(conductor);
  return pi.add_column(name(Role::bus_vm, bus.id, net.conductors[conductor], k), bus.u_min[p], bus.u_max[p], 0.0,
                       false, key);
}

/// Columns shared by every storage fidelity: Pstor, Pc, Pd, z, E.
struct BufferColumns {
  std::vector<std::size_t> pstor, pc, pd, z, e;
};

inline BufferColumns add_buffer_columns(ProblemInstance& pi, const Network& net, const TimeGrid& grid, std::size_t di,
                                        ComplementarityMode mode) {
  const auto& d = net.storages[di];
  const double base = net.base_mva;
  BufferColumns b;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    b.pstor.push_back(pi.add_column(name(Role::stor_pstor, d.id, "", k), -d.s_rating_total / base,
                                    d.s_rating_total / base, 0.0, false, VarKey{Role::stor_pstor, di, 0, k}));
    b.pc.push_back(pi.add_column(name(Role::stor_pc, d.id, "", k), 0.0, d.p_c_max / base, 0.0, false,
                                 VarKey{Role::stor_pc, di, 0, k}));
    b.pd.push_back(pi.add_column(name(Role::stor_pd, d.id, "", k), 0.0, d.p_d_max / base, 0.0, false,
                                 VarKey{Role::stor_pd, di, 0, k}));
    b.z.push_back(pi.add_column(name(Role::stor_z, d.id, "", k), 0.0, 1.0, 0.0, mode == ComplementarityMode::binary,
                                VarKey{Role::stor_z, di, 0, k}));
    b.e.push_back(pi.add_column(name(Role::stor_e, d.id, "", k), 0.0, d.e_max / base, 0.0, false,
                                VarKey{Role::stor_e, di, 0, k}));
  }
  return b;
}

/// Pstor split, energy update and boundary rows for one device.
inline void add_buffer_rows(ProblemInstance& pi, const Network& net, const TimeGrid& grid, std::size_t di,
                            const BufferColumns& b) {
  const auto& d = net.storages[di];
  const double base = net.base_mva;
  const auto dyn = energy_dynamics(d, grid);
  const std::size_t n = grid.steps();
  for (std::size_t k = 0; k < n; ++k) {
    pi.add_row(row_name("stor_split", d.id, "", k), "stor_split",
               {{b.pstor[k], 1.0}, {b.pd[k], -1.0}, {b.pc[k], 1.0}}, Sense::eq, 0.0);
    const auto& s = dyn.steps[k];
    std::vector<Term> t{{b.e[k], 1.0}};
    if (k > 0) t.push_back({b.e[k - 1], -1.0});
    push(t, b.pc[k], -s.c_now);
    push(t, b.pd[k], -s.d_now);
    if (k > 0) {
      push(t, b.pc[k - 1], -s.c_prev);
      push(t, b.pd[k - 1], -s.d_prev);
    }
    pi.add_row(row_name("energy", d.id, "", k), "energy", std::move(t), Sense::eq, k == 0 ? d.e_init / base : 0.0);
  }
  const auto bc = boundary_constraint(d, n);
  if (bc.kind != BoundaryConstraint::Kind::none)
    pi.add_row(row_name("boundary", d.id, "", n - 1), "boundary", {{b.e[n - 1], 1.0}},
               bc.kind == BoundaryConstraint::Kind::final_fixed ? Sense::eq : Sense::ge, bc.rhs_mwh / base);
}

}  // namespace formulation_detail

/// Big-M complementarity rows  Pc <= Pc_max z  and  Pd <= Pd_max (1 - z).
/// In relaxed mode the z columns are continuous on [0, 1].
inline void emit_complementarity(ProblemInstance& pi, const Network& net, const TimeGrid& grid, std::size_t di,
                                 ComplementarityMode mode) {
  using namespace formulation_detail;
  const auto& d = net.storages[di];
  const double base = net.base_mva;
  if (!std::isfinite(d.p_c_max) || !std::isfinite(d.p_d_max))
    throw Error("storage '" + d.id + "': complementarity needs finite charge/discharge ratings");
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const auto z = pi.col({Role::stor_z, di, 0, k});
    pi.columns[z].binary = (mode == ComplementarityMode::binary);
    const auto pc = pi.col({Role::stor_pc, di, 0, k});
    const auto pd = pi.col({Role::stor_pd, di, 0, k});
    pi.add_row(row_name("compl_charge", d.id, "", k), "compl_charge", {{pc, 1.0}, {z, -d.p_c_max / base}}, Sense::le,
               0.0);
    pi.add_row(row_name("compl_discharge", d.id, "", k), "compl_discharge", {{pd, 1.0}, {z, d.p_d_max / base}},
               Sense::le, d.p_d_max / base);
  }
}

/// Linear active-power storage model: per device and step
///   sum_p P_{c,p,k} + Pstor_{c,k} = Re(S^ext_{c,k}),   Pstor = Pd - Pc,
/// energy update, boundary row, complementarity. No reactive power or losses.
inline void emit_storage_dc(ProblemInstance& pi, const Network& net, const TimeGrid& grid,
                            ComplementarityMode mode = ComplementarityMode::binary) {
  using namespace formulation_detail;
  const double base = net.base_mva;
  for (std::size_t di = 0; di < net.storages.size(); ++di) {
    const auto& d = net.storages[di];
    const Bus& bus = net.bus(d.bus);
    const auto rating = per_phase_rating(d, bus.conductors.size());
    auto b = add_buffer_columns(pi, net, grid, di, mode);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      std::vector<Term> bal;
      for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
        const auto c = bus.conductors[p];
        const double lim = d.status[k] * rating[p] / base;
        bal.push_back({pi.add_column(name(Role::stor_p, d.id, net.conductors[c], k), -lim, lim, 0.0, false,
                                     VarKey{Role::stor_p, di, c, k}),
                       1.0});
      }
      bal.push_back({b.pstor[k], 1.0});
      pi.add_row(row_name("stor_balance", d.id, "", k), "stor_balance", std::move(bal), Sense::eq,
                 d.s_ext[k].real() / base);
    }
    add_buffer_rows(pi, net, grid, di, b);
    emit_complementarity(pi, net, grid, di, mode);
  }
}

/// Lifted convex storage model: per device/phase/step a rotated cone
/// P^2 + Q^2 <= W L, the apparent-power limit as a cone with constant side,
/// current limit as a bound on L, and the lifted complex balance
///   sum P + Pstor - sum R L = Re S^ext,   sum Q - Qint - sum X L = Im S^ext.
inline void emit_storage_soc(ProblemInstance& pi, const Network& net, const TimeGrid& grid,
                             ComplementarityMode mode = ComplementarityMode::binary) {
  using namespace formulation_detail;
  const double base = net.base_mva;
  for (std::size_t di = 0; di < net.storages.size(); ++di) {
    const auto& d = net.storages[di];
    const std::size_t bi = net.bus_index(d.bus);
    const Bus& bus = net.buses[bi];
    const auto rating = per_phase_rating(d, bus.conductors.size());
    auto b = add_buffer_columns(pi, net, grid, di, mode);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const double s = d.status[k];
      std::vector<Term> bal_p, bal_q;
      for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
        const auto c = bus.conductors[p];
        const std::string& cn = net.conductors[c];
        const double lim = s * rating[p] / base;
        const auto pc = pi.add_column(name(Role::stor_p, d.id, cn, k), -lim, lim, 0.0, false,
                                      VarKey{Role::stor_p, di, c, k});
        const auto qc = pi.add_column(name(Role::stor_q, d.id, cn, k), -lim, lim, 0.0, false,
                                      VarKey{Role::stor_q, di, c, k});
        double l_ub = kInf;
        if (d.i_rating_phase) l_ub = std::pow(s * (*d.i_rating_phase)[p], 2);
        else if (s == 0.0) l_ub = 0.0;
        const auto lc = pi.add_column(name(Role::stor_l, d.id, cn, k), 0.0, l_ub, 0.0, false,
                                      VarKey{Role::stor_l, di, c, k});
        const auto w = ensure_bus_w(pi, net, bi, c, k);
        pi.cones.push_back({row_name("stor_lifted", d.id, cn, k), "stor_lifted", {pc, qc}, ConeTerm::column(w),
                            ConeTerm::column(lc)});
        if (lim > 0.0 && std::isfinite(lim))
          pi.cones.push_back({row_name("stor_apparent", d.id, cn, k), "stor_apparent", {pc, qc},
                              ConeTerm::fixed(lim * lim), ConeTerm::fixed(1.0)});
        bal_p.push_back({pc, 1.0});
        bal_q.push_back({qc, 1.0});
        push(bal_p, lc, -d.z_phase[p].real());
        push(bal_q, lc, -d.z_phase[p].imag());
      }
      const auto qint = pi.add_column(name(Role::stor_qint, d.id, "", k), -s * d.s_rating_total / base,
                                      s * d.s_rating_total / base, 0.0, false, VarKey{Role::stor_qint, di, 0, k});
      bal_p.push_back({b.pstor[k], 1.0});
      bal_q.push_back({qint, -1.0});
      pi.add_row(row_name("stor_balance_p", d.id, "", k), "stor_balance_p", std::move(bal_p), Sense::eq,
                 d.s_ext[k].real() / base);
      pi.add_row(row_name("stor_balance_q", d.id, "", k), "stor_balance_q", std::move(bal_q), Sense::eq,
                 d.s_ext[k].imag() / base);
    }
    add_buffer_rows(pi, net, grid, di, b);
    emit_complementarity(pi, net, grid, di, mode);
  }
}

/// Full nonlinear storage model (for export and residual checks): voltage and
/// current magnitude columns, complex balance with copper losses, the
/// power/current/voltage relation, and complementarity either as the product
/// (AC-NL) or through big-M rows (AC-MI). Network physics is not emitted.
inline void emit_storage_ac(ProblemInstance& pi, const Network& net, const TimeGrid& grid, bool mixed_integer) {
  using namespace formulation_detail;
  const double base = net.base_mva;
  using NK = NonlinearConstraint::Kind;
  for (std::size_t di = 0; di < net.storages.size(); ++di) {
    const auto& d = net.storages[di];
    const std::size_t bi = net.bus_index(d.bus);
    const Bus& bus = net.buses[bi];
    const auto rating = per_phase_rating(d, bus.conductors.size());
    auto b = add_buffer_columns(pi, net, grid, di,
                                mixed_integer ? ComplementarityMode::binary : ComplementarityMode::relaxed);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const double s = d.status[k];
      std::vector<std::size_t> ps, qs, is;
      for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
        const auto c = bus.conductors[p];
        const std::string& cn = net.conductors[c];
        const double lim = s * rating[p] / base;
        ps.push_back(pi.add_column(name(Role::stor_p, d.id, cn, k), -lim, lim, 0.0, false, VarKey{Role::stor_p, di, c, k}));
        qs.push_back(pi.add_column(name(Role::stor_q, d.id, cn, k), -lim, lim, 0.0, false, VarKey{Role::stor_q, di, c, k}));
        const double i_ub = d.i_rating_phase ? s * (*d.i_rating_phase)[p] : (s == 0.0 ? 0.0 : kInf);
        is.push_back(pi.add_column(name(Role::stor_i, d.id, cn, k), 0.0, i_ub, 0.0, false, VarKey{Role::stor_i, di, c, k}));
        const auto u = ensure_bus_vm(pi, net, bi, c, k);
        pi.nonlinear.push_back({NK::power_current_voltage, row_name("pcv", d.id, cn, k), {ps.back(), qs.back(), u, is.back()}, {}});
        if (lim > 0.0 && std::isfinite(lim))
          pi.cones.push_back({row_name("stor_apparent", d.id, cn, k), "stor_apparent", {ps.back(), qs.back()},
                              ConeTerm::fixed(lim * lim), ConeTerm::fixed(1.0)});
      }
      const auto qint = pi.add_column(name(Role::stor_qint, d.id, "", k), -s * d.s_rating_total / base,
                                      s * d.s_rating_total / base, 0.0, false, VarKey{Role::stor_qint, di, 0, k});
      NonlinearConstraint bal{NK::complex_balance, row_name("complex_balance", d.id, "", k), {}, {}};
      bal.cols.insert(bal.cols.end(), ps.begin(), ps.end());
      bal.cols.insert(bal.cols.end(), qs.begin(), qs.end());
      bal.cols.insert(bal.cols.end(), is.begin(), is.end());
      bal.cols.push_back(b.pstor[k]);
      bal.cols.push_back(qint);
      for (const auto& z : d.z_phase) bal.params.push_back(z.real());
      for (const auto& z : d.z_phase) bal.params.push_back(z.imag());
      bal.params.push_back(d.s_ext[k].real() / base);
      bal.params.push_back(d.s_ext[k].imag() / base);
      pi.nonlinear.push_back(std::move(bal));
      if (!mixed_integer)
        pi.nonlinear.push_back({NK::complementarity, row_name("complementarity", d.id, "", k), {b.pc[k], b.pd[k]}, {}});
    }
    add_buffer_rows(pi, net, grid, di, b);
    if (mixed_integer) {
      emit_complementarity(pi, net, grid, di, ComplementarityMode::binary);
    } else {
      // AC-NL carries no indicator variable.
      for (auto zc : b.z) pi.columns[zc].ub = 0.0;
    }
  }
}

/// Throws unless, for every conductor, the buses carrying it form one
/// connected component through branches on that conductor.
inline void check_connected(const Network& net) {
  for (std::size_t c = 0; c < net.conductors.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < net.buses.size(); ++i)
      if (net.buses[i].local_conductor(c) != npos) members.push_back(i);
    if (members.size() <= 1) continue;
    std::vector<std::vector<std::size_t>> adj(net.buses.size());
    for (const auto& br : net.branches) {
      if (br.conductor != c) continue;
      auto f = net.bus_index(br.from_bus), t = net.bus_index(br.to_bus);
      adj[f].push_back(t);
      adj[t].push_back(f);
    }
    std::vector<bool> seen(net.buses.size(), false);
    std::vector<std::size_t> stack{members.front()};
    seen[members.front()] = true;
    std::size_t reached = 0;
    while (!stack.empty()) {
      auto i = stack.back();
      stack.pop_back();
      ++reached;
      for (auto j : adj[i])
        if (!seen[j]) {
          seen[j] = true;
          stack.push_back(j);
        }
    }
    if (reached != members.size())
      throw Error("network is disconnected on conductor '" + net.conductors[c] + "' (" + std::to_string(reached) +
                  " of " + std::to_string(members.size()) + " buses reachable)");
  }
}

/// Network physics. dc: B-theta flows with MW limits and one fixed reference
/// angle per conductor. soc: branch-flow relaxation in (W, L, S) with a
/// rotated cone per branch and thermal limits as constant cones.
inline void emit_network(ProblemInstance& pi, const Network& net, const TimeGrid& grid, NetworkKind kind) {
  using namespace formulation_detail;
  check_connected(net);
  const double base = net.base_mva;
  const std::size_t n = grid.steps();

  // Reference bus per conductor.
  std::vector<std::size_t> ref(net.conductors.size(), npos);
  for (std::size_t i = 0; i < net.buses.size(); ++i)
    for (auto c : net.buses[i].conductors)
      if (net.buses[i].reference && ref[c] == npos) ref[c] = i;
  for (std::size_t i = 0; i < net.buses.size(); ++i)
    for (auto c : net.buses[i].conductors)
      if (ref[c] == npos) ref[c] = i;

  for (std::size_t k = 0; k < n; ++k) {
    // Per (bus, conductor) balance terms, filled by each device class.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Term>> bal_p, bal_q;

    for (std::size_t gi = 0; gi < net.generators.size(); ++gi) {
      const auto& g = net.generators[gi];
      const auto bi = net.bus_index(g.bus);
      const std::string& cn = net.conductors[g.conductor];
      const auto p = pi.add_column(name(Role::gen_p, g.id, cn, k), g.p_min / base, g.p_max / base, 0.0, false,
                                   VarKey{Role::gen_p, gi, g.conductor, k});
      bal_p[{bi, g.conductor}].push_back({p, 1.0});
      if (kind == NetworkKind::soc) {
        const auto q = pi.add_column(name(Role::gen_q, g.id, cn, k), g.q_min / base, g.q_max / base, 0.0, false,
                                     VarKey{Role::gen_q, gi, g.conductor, k});
        bal_q[{bi, g.conductor}].push_back({q, 1.0});
      }
    }
    for (std::size_t di = 0; di < net.storages.size(); ++di) {
      const auto& d = net.storages[di];
      const auto bi = net.bus_index(d.bus);
      for (auto c : net.buses[bi].conductors) {
        bal_p[{bi, c}].push_back({pi.col({Role::stor_p, di, c, k}), -1.0});
        if (kind == NetworkKind::soc) bal_q[{bi, c}].push_back({pi.col({Role::stor_q, di, c, k}), -1.0});
      }
    }

    if (kind == NetworkKind::dc) {
      for (std::size_t bi = 0; bi < net.buses.size(); ++bi)
        for (auto c : net.buses[bi].conductors) {
          const double fixed = (ref[c] == bi) ? 0.0 : kInf;
          pi.add_column(name(Role::bus_angle, net.buses[bi].id, net.conductors[c], k), fixed == 0.0 ? 0.0 : -kInf,
                        fixed == 0.0 ? 0.0 : kInf, 0.0, false, VarKey{Role::bus_angle, bi, c, k});
        }
      for (std::size_t li = 0; li < net.branches.size(); ++li) {
        const auto& br = net.branches[li];
        const auto f = net.bus_index(br.from_bus), t = net.bus_index(br.to_bus);
        const double lim = br.rating_mva / base;
        const auto fc = pi.add_column(name(Role::branch_flow, br.id, net.conductors[br.conductor], k), -lim, lim, 0.0,
                                      false, VarKey{Role::branch_flow, li, br.conductor, k});
        pi.add_row(row_name("branch_flow", br.id, net.conductors[br.conductor], k), "branch_flow",
                   {{fc, 1.0},
                    {pi.col({Role::bus_angle, f, br.conductor, k}), -1.0 / br.x},
                    {pi.col({Role::bus_angle, t, br.conductor, k}), 1.0 / br.x}},
                   Sense::eq, 0.0);
        bal_p[{f, br.conductor}].push_back({fc, -1.0});
        bal_p[{t, br.conductor}].push_back({fc, 1.0});
      }
      for (std::size_t bi = 0; bi < net.buses.size(); ++bi) {
        const Bus& bus = net.buses[bi];
        for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
          const auto c = bus.conductors[p];
          const double rhs = (bus.load[p][k].real() + bus.shunt_g) / base;
          pi.add_row(row_name("bus_balance_p", bus.id, net.conductors[c], k), "bus_balance_p", bal_p[{bi, c}],
                     Sense::eq, rhs);
        }
      }
      continue;
    }

    // Branch-flow relaxation.
    std::map<std::pair<std::size_t, std::size_t>, double> charging;
    for (std::size_t li = 0; li < net.branches.size(); ++li) {
      const auto& br = net.branches[li];
      const auto f = net.bus_index(br.from_bus), t = net.bus_index(br.to_bus);
      const auto c = br.conductor;
      const std::string& cn = net.conductors[c];
      const double lim = br.rating_mva / base;
      const auto pft = pi.add_column(name(Role::branch_p_from, br.id, cn, k), -lim, lim, 0.0, false, VarKey{Role::branch_p_from, li, c, k});
      const auto qft = pi.add_column(name(Role::branch_q_from, br.id, cn, k), -lim, lim, 0.0, false, VarKey{Role::branch_q_from, li, c, k});
      const auto ptf = pi.add_column(name(Role::branch_p_to, br.id, cn, k), -lim, lim, 0.0, false, VarKey{Role::branch_p_to, li, c, k});
      const auto qtf = pi.add_column(name(Role::branch_q_to, br.id, cn, k), -lim, lim, 0.0, false, VarKey{Role::branch_q_to, li, c, k});
      const Bus& fb = net.buses[f];
      const double umin = fb.u_min[fb.local_conductor(c)];
      const double l_ub = (std::isfinite(lim) && umin > 0.0) ? lim * lim / (umin * umin) : kInf;
      const auto l = pi.add_column(name(Role::branch_l, br.id, cn, k), 0.0, l_ub, 0.0, false, VarKey{Role::branch_l, li, c, k});
      const auto wf = ensure_bus_w(pi, net, f, c, k);
      const auto wt = ensure_bus_w(pi, net, t, c, k);
      pi.add_row(row_name("branch_loss_p", br.id, cn, k), "branch_loss_p", {{pft, 1.0}, {ptf, 1.0}, {l, -br.r}}, Sense::eq, 0.0);
      pi.add_row(row_name("branch_loss_q", br.id, cn, k), "branch_loss_q", {{qft, 1.0}, {qtf, 1.0}, {l, -br.x}}, Sense::eq, 0.0);
      std::vector<Term> volt{{wt, 1.0}, {wf, -1.0}};
      push(volt, pft, 2.0 * br.r);
      push(volt, qft, 2.0 * br.x);
      push(volt, l, -(br.r * br.r + br.x * br.x));
      pi.add_row(row_name("branch_voltage", br.id, cn, k), "branch_voltage", std::move(volt), Sense::eq, 0.0);
      pi.cones.push_back({row_name("branch_current", br.id, cn, k), "branch_current", {pft, qft}, ConeTerm::column(wf),
                          ConeTerm::column(l)});
      if (std::isfinite(lim)) {
        pi.cones.push_back({row_name("branch_thermal_from", br.id, cn, k), "branch_thermal", {pft, qft},
                            ConeTerm::fixed(lim * lim), ConeTerm::fixed(1.0)});
        pi.cones.push_back({row_name("branch_thermal_to", br.id, cn, k), "branch_thermal", {ptf, qtf},
                            ConeTerm::fixed(lim * lim), ConeTerm::fixed(1.0)});
      }
      bal_p[{f, c}].push_back({pft, -1.0});
      bal_q[{f, c}].push_back({qft, -1.0});
      bal_p[{t, c}].push_back({ptf, -1.0});
      bal_q[{t, c}].push_back({qtf, -1.0});
      charging[{f, c}] += 0.5 * br.b;
      charging[{t, c}] += 0.5 * br.b;
    }
    for (std::size_t bi = 0; bi < net.buses.size(); ++bi) {
      const Bus& bus = net.buses[bi];
      for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
        const auto c = bus.conductors[p];
        const std::string& cn = net.conductors[c];
        const auto w = ensure_bus_w(pi, net, bi, c, k);
        auto tp = bal_p[{bi, c}];
        push(tp, w, -bus.shunt_g / base);
        pi.add_row(row_name("bus_balance_p", bus.id, cn, k), "bus_balance_p", std::move(tp), Sense::eq,
                   bus.load[p][k].real() / base);
        auto tq = bal_q[{bi, c}];
        push(tq, w, bus.shunt_b / base + charging[{bi, c}]);
        pi.add_row(row_name("bus_balance_q", bus.id, cn, k), "bus_balance_q", std::move(tq), Sense::eq,
                   bus.load[p][k].imag() / base);
      }
    }
  }
}

/// Replaces each generator's quadratic cost (times T_k) by its secant
/// piecewise-linear interpolant on [p_min, p_max] with `segments` pieces:
///   p = p_min + sum_s delta_s,  0 <= delta_s <= width,
/// costs increasing along s, so an optimal LP fills segments in order.
/// Returns the worst-case overestimate c2 (p_max - p_min)^2 / (4 S^2) T_k summed
/// over generators and steps (also stored on the instance).
inline double build_objective(ProblemInstance& pi, const Network& net, const TimeGrid& grid, int segments) {
  using namespace formulation_detail;
  if (segments < 1) throw Error("build_objective: segments must be >= 1");
  const double base = net.base_mva;
  double bound = 0.0;
  for (std::size_t gi = 0; gi < net.generators.size(); ++gi) {
    const auto& g = net.generators[gi];
    if (g.cost.c2 < 0.0) throw Error("generator '" + g.id + "': c2 < 0 makes the cost nonconvex");
    const std::string& cn = net.conductors[g.conductor];
    const double range = g.p_max - g.p_min;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const double t = grid.durations[k];
      pi.objective_constant += t * g.cost(g.p_min);
      if (!(range > 0.0)) continue;
      const int nseg = g.cost.c2 == 0.0 ? 1 : segments;
      const double width = range / nseg;
      const auto p = pi.col({Role::gen_p, gi, g.conductor, k});
      std::vector<Term> link{{p, 1.0}};
      for (int s = 0; s < nseg; ++s) {
        const double lo = g.p_min + width * s;
        const double hi = (s + 1 == nseg) ? g.p_max : lo + width;
        const double slope = (g.cost(hi) - g.cost(lo)) / (hi - lo);  // $/MWh
        const auto col = pi.add_column(name(Role::gen_segment, g.id, cn, k, static_cast<std::size_t>(s)), 0.0,
                                       (hi - lo) / base, t * slope * base, false,
                                       VarKey{Role::gen_segment, gi, g.conductor, k, static_cast<std::size_t>(s)});
        link.push_back({col, -1.0});
      }
      pi.add_row(row_name("pwl_link", g.id, cn, k), "pwl_link", std::move(link), Sense::eq, g.p_min / base);
      bound += g.cost.c2 * range * range / (4.0 * nseg * nseg) * t;
    }
  }
  pi.pwl_error_bound += bound;
  return bound;
}

/// Hourly cost ($/h) of the secant interpolant used by build_objective,
/// evaluated at p_mw (clamped to [p_min, p_max]).
inline double pwl_cost(const Generator& g, double p_mw, int segments) {
  const double range = g.p_max - g.p_min;
  if (!(range > 0.0)) return g.cost(g.p_min);
  const int nseg = g.cost.c2 == 0.0 ? 1 : segments;
  const double width = range / nseg;
  const double p = std::clamp(p_mw, g.p_min, g.p_max);
  const int s = std::min(nseg - 1, static_cast<int>((p - g.p_min) / width));
  const double lo = g.p_min + width * s;
  const double hi = (s + 1 == nseg) ? g.p_max : lo + width;
  return g.cost(lo) + (g.cost(hi) - g.cost(lo)) / (hi - lo) * (p - lo);
}

/// Assembles the full instance for one formulation.
inline ProblemInstance build_problem(const Network& net, const TimeGrid& grid, const FormulationOptions& opts) {
  auto findings = validate_network(net, grid);
  if (!findings.empty()) throw ValidationError("network validation failed: " + format_findings(findings));
  ProblemInstance pi;
  pi.formulation = opts.formulation;
  const auto mode = has_binaries(opts.formulation) ? ComplementarityMode::binary : ComplementarityMode::relaxed;
  switch (opts.formulation) {
    case Formulation::dc_mi:
    case Formulation::dc_relaxed:
      emit_storage_dc(pi, net, grid, mode);
      emit_network(pi, net, grid, NetworkKind::dc);
      build_objective(pi, net, grid, opts.segments);
      break;
    case Formulation::soc_mi:
    case Formulation::soc_relaxed:
      emit_storage_soc(pi, net, grid, mode);
      emit_network(pi, net, grid, NetworkKind::soc);
      build_objective(pi, net, grid, opts.segments);
      break;
    case Formulation::ac_nl:
    case Formulation::ac_mi:
      emit_storage_ac(pi, net, grid, opts.formulation == Formulation::ac_mi);
      break;
  }
  return pi;
}

}  // namespace gridstore
