#pragma once

// Ground-truth checks of storage schedules against the nonlinear storage
// model, forward simulation of the energy buffer, and bound-ordering reports.
//
// Residuals are in model units (per-unit on base_mva, per-unit hours).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridstore/datamodel.hpp"
#include "gridstore/discretize.hpp"
#include "gridstore/problem.hpp"
#include "gridstore/solution.hpp"
#include "gridstore/solve.hpp"

namespace gridstore {

struct Offender {
  std::string entity;
  std::string conductor;
  std::size_t step = npos;
};

/// Absolute residuals of one constraint family.
struct FamilyResidual {
  std::string family;
  bool evaluated = true;
  std::string note;
  double max = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
  Offender worst;

  void add(double r, const Offender& at) {
    r = std::abs(r);
    if (count == 0 || r > max) {
      max = r;
      worst = at;
    }
    mean += (r - mean) / static_cast<double>(++count);
  }
};

/// U^2 I^2 - |S|^2 per converter conductor and step. The nonlinear model
/// needs 0; a convex relaxation only guarantees >= 0.
struct ConeSlack {
  bool evaluated = false;
  double min = kInf;
  double max = -kInf;
  Offender most_negative;
  std::size_t count = 0;

  void add(double s, const Offender& at) {
    evaluated = true;
    ++count;
    if (s < min) {
      min = s;
      most_negative = at;
    }
    max = std::max(max, s);
  }
};

struct ViolationReport {
  std::string formulation;
  double tol = 0.0;
  std::vector<FamilyResidual> families;
  ConeSlack cone_slack;
  bool feasible = true;

  const FamilyResidual& family(const std::string& name) const {
    for (const auto& f : families)
      if (f.family == name) return f;
    throw Error("no residual family '" + name + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json fams = nlohmann::json::array();
    auto offender = [](const Offender& o) -> nlohmann::json {
      return {{"entity", o.entity}, {"conductor", o.conductor},
              {"step", o.step == npos ? nlohmann::json(nullptr) : nlohmann::json(o.step)}};
    };
    for (const auto& f : families) {
      nlohmann::json j{{"family", f.family}, {"evaluated", f.evaluated}};
      if (f.evaluated) {
        j["max"] = f.max;
        j["mean"] = f.mean;
        j["count"] = f.count;
        j["worst"] = offender(f.worst);
      }
      if (!f.note.empty()) j["note"] = f.note;
      fams.push_back(std::move(j));
    }
    nlohmann::json out{{"formulation", formulation}, {"tol", tol}, {"feasible", feasible}, {"families", fams}};
    if (cone_slack.evaluated)
      out["cone_slack"] = {{"min", cone_slack.min}, {"max", cone_slack.max}, {"count", cone_slack.count},
                           {"most_negative", offender(cone_slack.most_negative)}};
    return out;
  }

  std::string text() const {
    std::ostringstream os;
    os << "formulation " << formulation << ", tol " << tol << ": " << (feasible ? "feasible" : "infeasible") << "\n";
    for (const auto& f : families) {
      os << "  " << f.family << ": ";
      if (!f.evaluated) {
        os << "not evaluated";
      } else {
        os << "max " << f.max << " mean " << f.mean;
        if (f.count > 0 && f.max > 0.0)
          os << " at " << f.worst.entity << (f.worst.conductor.empty() ? "" : "/" + f.worst.conductor)
             << (f.worst.step == npos ? "" : " step " + std::to_string(f.worst.step));
      }
      if (!f.note.empty()) os << " (" << f.note << ")";
      os << "\n";
    }
    if (cone_slack.evaluated) os << "  cone slack: min " << cone_slack.min << " max " << cone_slack.max << "\n";
    return os.str();
  }
};

inline const std::vector<std::string>& residual_families() {
  static const std::vector<std::string> names{"complex_balance", "apparent_limit", "current_limit", "complementarity",
                                              "energy_dynamics", "bounds",         "voltage_bounds"};
  return names;
}

/// Residuals of the full nonlinear storage model at a keyed point.
///
/// Voltage magnitudes come from bus_vm (squared) or bus_w; converter currents
/// from stor_i (squared), stor_l, or else |S|^2 / U^2. Without any voltage
/// data the voltage-dependent families (complex balance with copper loss,
/// current limit, voltage bounds) are either an error or, when allowed,
/// reported as not evaluated.
class StorageAcResiduals {
public:
  StorageAcResiduals(const Network& net, const TimeGrid& grid) : net_(net), grid_(grid) {
    for (const auto& d : net.storages) {
      if (d.status.size() != grid.steps() || d.s_ext.size() != grid.steps())
        throw Error("storage '" + d.id + "': series length does not match the time grid");
      if (net.bus_index(d.bus) == npos) throw Error("storage '" + d.id + "': unknown bus '" + d.bus + "'");
    }
  }

  ViolationReport evaluate(const std::map<VarKey, double>& point, double tol, bool allow_missing_voltage = false) const {
    ViolationReport rep;
    rep.tol = tol;
    std::map<std::string, FamilyResidual> fam;
    for (const auto& n : residual_families()) fam[n].family = n;
    auto get = [&](const VarKey& k) -> std::optional<double> {
      auto it = point.find(k);
      if (it == point.end()) return std::nullopt;
      return it->second;
    };
    auto need = [&](const VarKey& k, const std::string& what) {
      auto v = get(k);
      if (!v) throw Error("point is missing " + what + " (" + role_name(k.role) + ") at step " + std::to_string(k.step));
      return *v;
    };
    auto bound = [&](double v, double lo, double hi, const Offender& at) {
      fam["bounds"].add(std::max({0.0, lo - v, v - hi}), at);
    };
    const double base = net_.base_mva;
    bool voltage_missing = false;

    for (std::size_t di = 0; di < net_.storages.size(); ++di) {
      const auto& d = net_.storages[di];
      const std::size_t bi = net_.bus_index(d.bus);
      const Bus& bus = net_.buses[bi];
      const auto rating = per_phase_rating(d, bus.conductors.size());
      const std::string ent = "storage '" + d.id + "'";
      const auto dyn = energy_dynamics(d, grid_);
      double e_prev = d.e_init / base;
      for (std::size_t k = 0; k < grid_.steps(); ++k) {
        const double s = d.status[k];
        const Offender dev_at{ent, "", k};
        const double pc = need({Role::stor_pc, di, 0, k}, "charge power");
        const double pd = need({Role::stor_pd, di, 0, k}, "discharge power");
        const double e = need({Role::stor_e, di, 0, k}, "energy");
        const double pstor = get({Role::stor_pstor, di, 0, k}).value_or(pd - pc);
        const auto qint = get({Role::stor_qint, di, 0, k});

        fam["complementarity"].add(pc * pd, dev_at);

        // Energy update against the preceding step.
        const auto& c = dyn.steps[k];
        double inc = c.c_now * pc + c.d_now * pd;
        if (k > 0) inc += c.c_prev * need({Role::stor_pc, di, 0, k - 1}, "charge power") +
                          c.d_prev * need({Role::stor_pd, di, 0, k - 1}, "discharge power");
        fam["energy_dynamics"].add(e - e_prev - inc, dev_at);
        e_prev = e;

        bound(pc, 0.0, d.p_c_max / base, dev_at);
        bound(pd, 0.0, d.p_d_max / base, dev_at);
        bound(e, 0.0, d.e_max / base, dev_at);
        bound(pstor, -d.s_rating_total / base, d.s_rating_total / base, dev_at);
        fam["bounds"].add(pstor - (pd - pc), dev_at);
        if (qint) bound(*qint, -s * d.s_rating_total / base, s * d.s_rating_total / base, dev_at);

        double sum_p = 0.0, sum_q = 0.0, loss_p = 0.0, loss_q = 0.0;
        bool have_q = false, have_loss = true;
        for (std::size_t p = 0; p < bus.conductors.size(); ++p) {
          const auto cond = bus.conductors[p];
          const Offender at{ent, net_.conductors[cond], k};
          const double pp = need({Role::stor_p, di, cond, k}, "converter active power");
          const auto qq = get({Role::stor_q, di, cond, k});
          have_q = have_q || qq.has_value();
          const double q = qq.value_or(0.0);
          sum_p += pp;
          sum_q += q;
          const double lim = s * rating[p] / base;
          bound(pp, -lim, lim, at);
          if (qq) bound(q, -lim, lim, at);
          fam["apparent_limit"].add(std::max(0.0, std::hypot(pp, q) - lim), at);

          // Squared voltage and current.
          std::optional<double> u2;
          if (auto vm = get({Role::bus_vm, bi, cond, k})) u2 = *vm * *vm;
          else if (auto w = get({Role::bus_w, bi, cond, k})) u2 = *w;
          std::optional<double> i2;
          bool explicit_current = true;
          if (auto i = get({Role::stor_i, di, cond, k})) i2 = *i * *i;
          else if (auto l = get({Role::stor_l, di, cond, k})) i2 = *l;
          else explicit_current = false;
          if (!u2) {
            voltage_missing = true;
            have_loss = have_loss && i2.has_value();
          } else {
            const double u = std::sqrt(std::max(0.0, *u2));
            const double umin = bus.u_min[p], umax = bus.u_max[p];
            fam["voltage_bounds"].add(std::max({0.0, umin - u, u - umax}), at);
            if (!i2) i2 = *u2 > 0.0 ? (pp * pp + q * q) / *u2 : kInf;
            if (explicit_current) rep.cone_slack.add(*u2 * *i2 - (pp * pp + q * q), at);
          }
          if (i2) {
            loss_p += d.z_phase[p].real() * *i2;
            loss_q += d.z_phase[p].imag() * *i2;
            const double i = std::sqrt(std::max(0.0, *i2));
            const double i_lim = d.i_rating_phase ? s * (*d.i_rating_phase)[p] : (s == 0.0 ? 0.0 : kInf);
            fam["current_limit"].add(std::max(0.0, i - i_lim), at);
          }
        }
        if (have_loss) {
          const double re = sum_p + pstor - loss_p - d.s_ext[k].real() / base;
          double im = 0.0;
          if (have_q && qint) im = sum_q - *qint - loss_q - d.s_ext[k].imag() / base;
          fam["complex_balance"].add(std::hypot(re, im), dev_at);
        }
      }
      const auto bc = boundary_constraint(d, grid_.steps());
      const Offender end_at{ent, "", grid_.steps() - 1};
      const double e_end = need({Role::stor_e, di, 0, grid_.steps() - 1}, "energy");
      if (bc.kind == BoundaryConstraint::Kind::final_ge_initial)
        fam["energy_dynamics"].add(std::max(0.0, bc.rhs_mwh / base - e_end), end_at);
      else if (bc.kind == BoundaryConstraint::Kind::final_fixed)
        fam["energy_dynamics"].add(e_end - bc.rhs_mwh / base, end_at);
    }

    if (voltage_missing) {
      if (!allow_missing_voltage) throw Error("point has no voltage data for the storage converter buses");
      for (const char* n : {"complex_balance", "current_limit", "voltage_bounds"}) {
        auto& f = fam[n];
        f = FamilyResidual{};
        f.family = n;
        f.evaluated = false;
        f.note = "needs voltage magnitudes";
      }
      fam["apparent_limit"].note = "active power only";
    }
    for (const auto& n : residual_families()) {
      rep.families.push_back(fam[n]);
      const auto& f = rep.families.back();
      if (f.evaluated && !(f.max <= tol)) rep.feasible = false;
    }
    return rep;
  }

private:
  const Network& net_;
  const TimeGrid& grid_;
};

inline StorageAcResiduals emit_storage_ac_residuals(const Network& net, const TimeGrid& grid) {
  return StorageAcResiduals(net, grid);
}

/// Evaluates a solution against the nonlinear storage model. DC solutions have
/// no voltages, so their voltage-dependent families are not evaluated; SOC
/// solutions are evaluated in their lifted W/L coordinates and report the
/// cone slack.
inline ViolationReport check_solution(const Network& net, const TimeGrid& grid, const Solution& sol, double tol) {
  if (!(tol >= 0.0)) throw Error("check_solution: tolerance must be >= 0");
  for (std::size_t di = 0; di < net.storages.size(); ++di) {
    const Bus& bus = net.bus(net.storages[di].bus);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      for (Role r : {Role::stor_pc, Role::stor_pd, Role::stor_e})
        if (!sol.get({r, di, 0, k}))
          throw Error("solution does not match the case: missing " + std::string(role_name(r)) + " for storage '" +
                      net.storages[di].id + "' at step " + std::to_string(k));
      for (auto c : bus.conductors)
        if (!sol.get({Role::stor_p, di, c, k}))
          throw Error("solution does not match the case: missing converter power for storage '" +
                      net.storages[di].id + "' at step " + std::to_string(k));
    }
    if (sol.get({Role::stor_pc, di, 0, grid.steps()}))
      throw Error("solution does not match the case: more steps than the time grid");
  }
  if (sol.get({Role::stor_pc, net.storages.size(), 0, 0}))
    throw Error("solution does not match the case: more storage devices than the network");
  auto rep = emit_storage_ac_residuals(net, grid).evaluate(sol.values, tol, is_dc(sol.formulation));
  rep.formulation = to_string(sol.formulation);
  return rep;
}

struct ClipEvent {
  std::size_t step = 0;
  std::string quantity;  // "p_charge" or "p_discharge"
  std::string reason;    // offline, negative, rating, energy_lower, energy_upper
  double commanded = 0.0;
  double applied = 0.0;

  double magnitude() const { return std::abs(commanded - applied); }
};

struct BufferTrajectory {
  std::vector<double> energy;     // MWh after each step
  std::vector<double> increment;  // MWh added in each step
  std::vector<double> p_c, p_d;   // applied MW
  std::vector<ClipEvent> clips;
  double unresolved = 0.0;  // energy bound excess no power clip could remove (MWh)

  bool clipped() const { return !clips.empty(); }
};

/// Forward-integrates the buffer under the grid's discretization rule.
/// Commands are first limited by status and ratings; a step that would leave
/// [0, E_max] has its discharge (or charge) power reduced so the energy lands
/// on the bound, and each change is reported.
inline BufferTrajectory simulate_buffer(const StorageDevice& dev, const TimeGrid& grid,
                                        const std::vector<ScheduleStep>& schedule) {
  if (schedule.size() != grid.steps())
    throw Error("simulate_buffer: schedule has " + std::to_string(schedule.size()) + " steps, grid has " +
                std::to_string(grid.steps()));
  const auto dyn = energy_dynamics(dev, grid);
  BufferTrajectory tr;
  double e = dev.e_init;
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    double pc = schedule[k].p_c, pd = schedule[k].p_d;
    const double s = schedule[k].status.value_or(k < dev.status.size() ? dev.status[k] : 1.0);
    auto limit = [&](double& p, const char* qty, double hi) {
      const double cmd = p;
      const char* why = nullptr;
      if (p < 0.0) {
        p = 0.0;
        why = "negative";
      }
      if (s == 0.0 && p > 0.0) {
        p = 0.0;
        why = "offline";
      }
      if (p > hi) {
        p = hi;
        why = "rating";
      }
      if (why) tr.clips.push_back({k, qty, why, cmd, p});
    };
    limit(pc, "p_charge", dev.p_c_max);
    limit(pd, "p_discharge", dev.p_d_max);

    const auto& c = dyn.steps[k];
    const double carried = k > 0 ? c.c_prev * tr.p_c.back() + c.d_prev * tr.p_d.back() : 0.0;
    double inc = carried + c.c_now * pc + c.d_now * pd;
    if (e + inc < 0.0 && pd > 0.0 && c.d_now < 0.0) {
      const double cmd = pd;
      pd = std::max(0.0, (e + carried + c.c_now * pc) / -c.d_now);
      tr.clips.push_back({k, "p_discharge", "energy_lower", cmd, pd});
      inc = carried + c.c_now * pc + c.d_now * pd;
    }
    if (e + inc > dev.e_max && pc > 0.0 && c.c_now > 0.0) {
      const double cmd = pc;
      pc = std::max(0.0, (dev.e_max - e - carried - c.d_now * pd) / c.c_now);
      tr.clips.push_back({k, "p_charge", "energy_upper", cmd, pc});
      inc = carried + c.c_now * pc + c.d_now * pd;
    }
    double next = e + inc;
    if (next < 0.0 || next > dev.e_max) {
      const double clamped = std::clamp(next, 0.0, dev.e_max);
      tr.unresolved += std::abs(next - clamped);
      next = clamped;
      inc = next - e;
    }
    tr.p_c.push_back(pc);
    tr.p_d.push_back(pd);
    tr.increment.push_back(inc);
    tr.energy.push_back(next);
    e = next;
  }
  return tr;
}

/// Objective and bound of one solve, for ordering checks.
struct BoundEntry {
  double objective = kInf;
  double bound = -kInf;
};

struct OrderingCheck {
  std::string lhs, rhs;  // lhs value must not exceed rhs value
  double lhs_value = 0.0, rhs_value = 0.0;
  bool holds = true;
};

struct OrderingReport {
  std::vector<OrderingCheck> checks;
  std::optional<double> soc_reference_gap;  // (ref - soc) / ref
  bool ok = true;

  nlohmann::json to_json() const {
    nlohmann::json cs = nlohmann::json::array();
    for (const auto& c : checks)
      cs.push_back({{"lhs", c.lhs}, {"rhs", c.rhs}, {"lhs_value", c.lhs_value}, {"rhs_value", c.rhs_value},
                    {"holds", c.holds}});
    nlohmann::json out{{"ok", ok}, {"checks", cs}};
    if (soc_reference_gap) out["soc_reference_gap"] = *soc_reference_gap;
    return out;
  }
};

/// Checks DC-MI objective <= SOC-MI bound, each relaxation bound <= its
/// mixed-integer bound, and SOC-MI bound <= an AC-feasible reference
/// objective when one is given. Violations beyond 1e-6 relative clear `ok`.
inline OrderingReport bound_report(const std::map<Formulation, BoundEntry>& results,
                                   std::optional<double> ac_reference = std::nullopt) {
  if (results.size() < 2) throw Error("bound_report: needs results for at least two formulations");
  constexpr double rel = 1e-6;
  OrderingReport rep;
  auto check = [&](std::string lhs, double a, std::string rhs, double b) {
    const bool holds = a <= b + rel * std::max(1.0, std::abs(b));
    rep.checks.push_back({std::move(lhs), std::move(rhs), a, b, holds});
    rep.ok = rep.ok && holds;
  };
  auto find = [&](Formulation f) -> const BoundEntry* {
    auto it = results.find(f);
    return it == results.end() ? nullptr : &it->second;
  };
  const auto* dc = find(Formulation::dc_mi);
  const auto* soc = find(Formulation::soc_mi);
  if (dc && soc) check("dc-mi objective", dc->objective, "soc-mi bound", soc->bound);
  for (auto [relaxed, mi] : {std::pair{Formulation::dc_relaxed, Formulation::dc_mi},
                             std::pair{Formulation::soc_relaxed, Formulation::soc_mi}}) {
    const auto* r = find(relaxed);
    const auto* m = find(mi);
    if (r && m) check(to_string(relaxed) + " bound", r->bound, to_string(mi) + " objective", m->objective);
  }
  if (ac_reference && soc) {
    check("soc-mi bound", soc->bound, "ac reference", *ac_reference);
    rep.soc_reference_gap = (*ac_reference - soc->bound) / *ac_reference;
  }
  return rep;
}

inline OrderingReport bound_report(const std::map<Formulation, SolveResult>& results,
                                   std::optional<double> ac_reference = std::nullopt) {
  std::map<Formulation, BoundEntry> entries;
  for (const auto& [f, r] : results) entries[f] = {r.objective, r.bound};
  return bound_report(entries, ac_reference);
}

}  // namespace gridstore
