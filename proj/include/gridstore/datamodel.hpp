#pragma once

// Domain types for the network, the storage fleet and the time grid.
//
// Quantities are kept in the user-facing engineering units (h, MW, MVA,
// MVAr, MWh; impedances and voltages in per-unit). Conversion to per-unit
// on base_mva happens when a formulation is emitted.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gridstore/types.hpp"

namespace gridstore {

enum class DiscretizationRule { endpoint, trapezoid };

inline std::string to_string(DiscretizationRule rule) {
  return rule == DiscretizationRule::endpoint ? "endpoint" : "trapezoid";
}

inline DiscretizationRule parse_rule(const std::string& s) {
  if (s == "endpoint") return DiscretizationRule::endpoint;
  if (s == "trapezoid") return DiscretizationRule::trapezoid;
  throw ParseError("unknown discretization rule '" + s + "' (expected endpoint or trapezoid)");
}

struct TimeGrid {
  std::vector<double> durations;  // T_k in hours
  DiscretizationRule rule = DiscretizationRule::endpoint;

  std::size_t steps() const { return durations.size(); }

  /// Start time of step k (0-based) in hours.
  double start_time(std::size_t k) const {
    return std::accumulate(durations.begin(), durations.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
  }

  static TimeGrid uniform(double dt_hours, std::size_t n,
                          DiscretizationRule rule = DiscretizationRule::endpoint) {
    return TimeGrid{std::vector<double>(n, dt_hours), rule};
  }

  bool operator==(const TimeGrid&) const = default;
};

struct TerminalCondition {
  enum class Kind { fixed_init, terminal_ge_initial, terminal_fixed };
  Kind kind = Kind::fixed_init;
  double value_mwh = 0.0;  // only for terminal_fixed

  bool operator==(const TerminalCondition&) const = default;
};

struct StorageDevice {
  std::string id;
  std::string bus;
  std::vector<double> status;    // s_{c,k} per step, 0 or 1
  std::vector<Complex> s_ext;    // MVA per step, positive real part leaves the converter node
  double s_rating_total = 0.0;   // MVA
  std::optional<std::vector<double>> s_rating_phase;  // MVA per conductor of the bus
  std::optional<std::vector<double>> i_rating_phase;  // pu current per conductor
  double eta_c = 1.0;
  double eta_d = 1.0;
  double e_init = 0.0;  // MWh
  double e_max = 0.0;   // MWh
  double p_c_max = 0.0; // MW
  double p_d_max = 0.0; // MW
  std::vector<Complex> z_phase;  // pu per conductor
  TerminalCondition terminal;

  bool operator==(const StorageDevice&) const = default;
};

struct Bus {
  std::string id;
  bool reference = false;
  std::vector<std::size_t> conductors;  // indices into Network::conductors
  std::vector<double> u_min;            // per bus conductor, pu
  std::vector<double> u_max;
  std::vector<std::vector<Complex>> load;  // [bus conductor][step], MVA
  double shunt_g = 0.0;  // MW consumed at 1 pu, per conductor
  double shunt_b = 0.0;  // MVAr injected at 1 pu, per conductor

  /// Position of network conductor `c` within this bus, or npos.
  std::size_t local_conductor(std::size_t c) const {
    auto it = std::find(conductors.begin(), conductors.end(), c);
    return it == conductors.end() ? npos : static_cast<std::size_t>(it - conductors.begin());
  }

  bool operator==(const Bus&) const = default;
};

struct QuadraticCost {
  double c2 = 0.0;  // $/MWh^2
  double c1 = 0.0;  // $/MWh
  double c0 = 0.0;  // $/h

  double operator()(double p_mw) const { return (c2 * p_mw + c1) * p_mw + c0; }
  bool operator==(const QuadraticCost&) const = default;
};

struct Generator {
  std::string id;
  std::string bus;
  std::size_t conductor = 0;
  double p_min = 0.0, p_max = 0.0;  // MW
  double q_min = 0.0, q_max = 0.0;  // MVAr
  QuadraticCost cost;

  bool operator==(const Generator&) const = default;
};

struct Branch {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  std::size_t conductor = 0;
  double r = 0.0;  // pu
  double x = 0.0;  // pu
  double b = 0.0;  // total line charging, pu
  double rating_mva = kInf;

  bool operator==(const Branch&) const = default;
};

struct Network {
  std::string name;
  double base_mva = 100.0;
  std::vector<std::string> conductors{"a"};
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<StorageDevice> storages;

  std::size_t bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == id) return i;
    return npos;
  }

  const Bus& bus(const std::string& id) const {
    auto i = bus_index(id);
    if (i == npos) throw Error("unknown bus '" + id + "'");
    return buses[i];
  }

  bool operator==(const Network&) const = default;
};

struct Finding {
  std::string entity;  // e.g. "storage 's1'"
  std::string field;
  std::string message;

  std::string str() const { return entity + "." + field + ": " + message; }
};

/// Per-conductor apparent power rating (MVA). Explicit ratings must sum to the
/// total within 1e-9 relative; otherwise the total is split evenly.
inline std::vector<double> per_phase_rating(const StorageDevice& dev, std::size_t n_conductors) {
  if (dev.s_rating_total < 0.0)
    throw ValidationError("storage '" + dev.id + "': s_rating_total must be >= 0");
  if (dev.s_rating_phase) {
    const auto& r = *dev.s_rating_phase;
    if (r.size() != n_conductors)
      throw ValidationError("storage '" + dev.id + "': s_rating_phase has " + std::to_string(r.size()) +
                            " entries, expected " + std::to_string(n_conductors));
    double sum = std::accumulate(r.begin(), r.end(), 0.0);
    if (std::abs(sum - dev.s_rating_total) > 1e-9 * std::max(1.0, std::abs(dev.s_rating_total))) {
      std::ostringstream msg;
      msg << "storage '" << dev.id << "': per-phase ratings sum to " << sum << " but s_rating_total is "
          << dev.s_rating_total;
      throw ValidationError(msg.str());
    }
    return r;
  }
  if (n_conductors == 0) return {};
  return std::vector<double>(n_conductors, dev.s_rating_total / static_cast<double>(n_conductors));
}

namespace detail {

inline bool finite(double v) { return std::isfinite(v); }

class FindingSink {
public:
  explicit FindingSink(std::vector<Finding>& out) : out_(out) {}
  void add(std::string entity, std::string field, std::string message) {
    out_.push_back({std::move(entity), std::move(field), std::move(message)});
  }

private:
  std::vector<Finding>& out_;
};

}  // namespace detail

/// Checks every parameter condition of the data model plus the structural
/// invariants. Returns an empty list iff the pair is usable.
inline std::vector<Finding> validate_network(const Network& net, const TimeGrid& grid) {
  std::vector<Finding> findings;
  detail::FindingSink sink(findings);
  const std::size_t n = grid.steps();

  if (n == 0) sink.add("time", "durations", "at least one step is required");
  for (std::size_t k = 0; k < n; ++k)
    if (!(grid.durations[k] > 0.0) || !detail::finite(grid.durations[k]))
      sink.add("time", "durations[" + std::to_string(k) + "]", "T_k must be > 0");

  if (!(net.base_mva > 0.0) || !detail::finite(net.base_mva))
    sink.add("network", "base_mva", "base_mva must be > 0");
  if (net.conductors.empty()) sink.add("network", "conductors", "conductor set must not be empty");
  {
    std::set<std::string> seen(net.conductors.begin(), net.conductors.end());
    if (seen.size() != net.conductors.size()) sink.add("network", "conductors", "duplicate conductor names");
  }

  std::set<std::string> bus_ids;
  for (const auto& bus : net.buses) {
    const std::string ent = "bus '" + bus.id + "'";
    if (!bus_ids.insert(bus.id).second) sink.add(ent, "id", "duplicate bus id");
    if (bus.conductors.empty()) sink.add(ent, "conductors", "bus must carry at least one conductor");
    std::set<std::size_t> cs;
    for (auto c : bus.conductors) {
      if (c >= net.conductors.size()) sink.add(ent, "conductors", "conductor index outside network conductor set");
      if (!cs.insert(c).second) sink.add(ent, "conductors", "duplicate conductor");
    }
    const std::size_t nc = bus.conductors.size();
    if (bus.u_min.size() != nc || bus.u_max.size() != nc) {
      sink.add(ent, "u_min/u_max", "one voltage bound per bus conductor required");
    } else {
      for (std::size_t p = 0; p < nc; ++p) {
        if (!(bus.u_min[p] >= 0.0)) sink.add(ent, "u_min", "u_min must be >= 0");
        if (!(bus.u_max[p] >= bus.u_min[p])) sink.add(ent, "u_max", "u_max must be >= u_min");
      }
    }
    if (bus.load.size() != nc) {
      sink.add(ent, "load", "one load series per bus conductor required");
    } else {
      for (const auto& series : bus.load) {
        if (series.size() != n) {
          sink.add(ent, "load", "load series length " + std::to_string(series.size()) + " != steps " +
                                    std::to_string(n));
          break;
        }
        for (const auto& s : series)
          if (!detail::finite(s.real()) || !detail::finite(s.imag())) {
            sink.add(ent, "load", "load values must be finite");
            break;
          }
      }
    }
  }

  auto check_bus_conductor = [&](const std::string& ent, const std::string& field, const std::string& bus_id,
                                 std::size_t conductor) {
    auto bi = net.bus_index(bus_id);
    if (bi == npos) {
      sink.add(ent, field, "references unknown bus '" + bus_id + "'");
      return;
    }
    if (net.buses[bi].local_conductor(conductor) == npos)
      sink.add(ent, "conductor", "conductor not present at bus '" + bus_id + "'");
  };

  std::set<std::string> gen_ids;
  for (const auto& g : net.generators) {
    const std::string ent = "generator '" + g.id + "'";
    if (!gen_ids.insert(g.id).second) sink.add(ent, "id", "duplicate generator id");
    check_bus_conductor(ent, "bus", g.bus, g.conductor);
    if (!(g.p_min <= g.p_max)) sink.add(ent, "p_max", "p_min must be <= p_max");
    if (!(g.q_min <= g.q_max)) sink.add(ent, "q_max", "q_min must be <= q_max");
    if (!(g.cost.c2 >= 0.0)) sink.add(ent, "cost.c2", "c2 must be >= 0 (convex cost)");
    if (!detail::finite(g.p_min) || !detail::finite(g.p_max))
      sink.add(ent, "p_min/p_max", "active power limits must be finite");
  }

  std::set<std::string> br_ids;
  for (const auto& br : net.branches) {
    const std::string ent = "branch '" + br.id + "'";
    if (!br_ids.insert(br.id).second) sink.add(ent, "id", "duplicate branch id");
    check_bus_conductor(ent, "from_bus", br.from_bus, br.conductor);
    check_bus_conductor(ent, "to_bus", br.to_bus, br.conductor);
    if (br.from_bus == br.to_bus) sink.add(ent, "to_bus", "branch must connect two distinct buses");
    if (br.x == 0.0 || !detail::finite(br.x)) sink.add(ent, "x", "x must be nonzero");
    if (!(br.r >= 0.0)) sink.add(ent, "r", "r must be >= 0");
    if (!(br.rating_mva > 0.0)) sink.add(ent, "rating_mva", "rating must be > 0");
  }

  std::set<std::string> st_ids;
  for (const auto& d : net.storages) {
    const std::string ent = "storage '" + d.id + "'";
    if (!st_ids.insert(d.id).second) sink.add(ent, "id", "duplicate storage id");
    auto bi = net.bus_index(d.bus);
    std::size_t nc = 0;
    if (bi == npos) sink.add(ent, "bus", "references unknown bus '" + d.bus + "'");
    else nc = net.buses[bi].conductors.size();

    if (d.status.size() != n) sink.add(ent, "status", "status series length must equal the step count");
    for (double s : d.status)
      if (s != 0.0 && s != 1.0) {
        sink.add(ent, "status", "status must be 0 or 1");
        break;
      }
    if (d.s_ext.size() != n) sink.add(ent, "s_ext", "s_ext series length must equal the step count");
    for (const auto& s : d.s_ext)
      if (!detail::finite(s.real()) || !detail::finite(s.imag())) {
        sink.add(ent, "s_ext", "s_ext values must be finite");
        break;
      }

    if (!(d.s_rating_total >= 0.0)) sink.add(ent, "s_rating_total", "s_rating_total must be >= 0");
    if (d.s_rating_phase) {
      bool neg = std::any_of(d.s_rating_phase->begin(), d.s_rating_phase->end(), [](double v) { return !(v >= 0.0); });
      if (neg) sink.add(ent, "s_rating_phase", "s_rating_phase must be >= 0");
      if (bi != npos && d.s_rating_phase->size() != nc)
        sink.add(ent, "s_rating_phase", "one rating per bus conductor required");
      else if (bi != npos) {
        double sum = std::accumulate(d.s_rating_phase->begin(), d.s_rating_phase->end(), 0.0);
        if (std::abs(sum - d.s_rating_total) > 1e-9 * std::max(1.0, std::abs(d.s_rating_total)))
          sink.add(ent, "s_rating_phase", "per-phase ratings must sum to s_rating_total");
      }
    }
    if (d.i_rating_phase) {
      bool neg = std::any_of(d.i_rating_phase->begin(), d.i_rating_phase->end(), [](double v) { return !(v >= 0.0); });
      if (neg) sink.add(ent, "i_rating_phase", "i_rating_phase must be >= 0");
      if (bi != npos && d.i_rating_phase->size() != nc)
        sink.add(ent, "i_rating_phase", "one current rating per bus conductor required");
    }
    if (!(d.eta_d > 0.0)) sink.add(ent, "eta_d", "eta_d must be > 0");
    if (!(d.eta_d <= 1.0)) sink.add(ent, "eta_d", "eta_d must be <= 1");
    if (!(d.eta_c >= 0.0)) sink.add(ent, "eta_c", "eta_c must be >= 0");
    if (!(d.eta_c <= 1.0)) sink.add(ent, "eta_c", "eta_c must be <= 1");
    if (!(d.e_init >= 0.0)) sink.add(ent, "e_init", "e_init must be >= 0");
    if (!(d.e_max >= 0.0)) sink.add(ent, "e_max", "e_max must be >= 0");
    if (!(d.p_c_max >= 0.0) || !detail::finite(d.p_c_max)) sink.add(ent, "p_c_max", "p_c_max must be finite and >= 0");
    if (!(d.p_d_max >= 0.0) || !detail::finite(d.p_d_max)) sink.add(ent, "p_d_max", "p_d_max must be finite and >= 0");
    if (d.e_init > d.e_max && d.e_max >= 0.0) sink.add(ent, "e_init", "e_init exceeds e_max");
    if (bi != npos && d.z_phase.size() != nc) sink.add(ent, "z_phase", "one impedance per bus conductor required");
    for (const auto& z : d.z_phase)
      if (!detail::finite(z.real()) || !detail::finite(z.imag())) {
        sink.add(ent, "z_phase", "impedance must be finite");
        break;
      }
    if (d.terminal.kind == TerminalCondition::Kind::terminal_fixed) {
      if (d.terminal.value_mwh > d.e_max) sink.add(ent, "terminal_condition", "terminal_fixed exceeds e_max");
      if (d.terminal.value_mwh < 0.0) sink.add(ent, "terminal_condition", "terminal_fixed must be >= 0");
    }
  }
  return findings;
}

inline std::string format_findings(const std::vector<Finding>& findings) {
  std::ostringstream os;
  for (std::size_t i = 0; i < findings.size(); ++i) os << (i ? "; " : "") << findings[i].str();
  return os.str();
}

}  // namespace gridstore
