#pragma once

// Solutions keyed by variable role, their JSON form, and the per-step
// dispatch table.
//
// Values are stored in model units: per-unit on base_mva for powers,
// per-unit hours for energies, squared per-unit for W and L.

#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridstore/datamodel.hpp"
#include "gridstore/ingest.hpp"
#include "gridstore/problem.hpp"
#include "gridstore/solve.hpp"

namespace gridstore {

struct Solution {
  Formulation formulation = Formulation::dc_mi;
  std::string status = "optimal";
  double objective = kInf;
  double bound = -kInf;
  double gap = kInf;
  double seconds = 0.0;
  std::map<VarKey, double> values;

  std::optional<double> get(const VarKey& key) const {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  }
  double at(const VarKey& key) const {
    auto it = values.find(key);
    if (it == values.end())
      throw Error(std::string("solution has no value for ") + role_name(key.role) + " entity " +
                  std::to_string(key.entity) + " step " + std::to_string(key.step));
    return it->second;
  }
  bool has_role(Role r) const {
    for (const auto& [k, v] : values)
      if (k.role == r) return true;
    return false;
  }
};

inline std::optional<Role> parse_role(const std::string& s) {
  for (int r = 0; r <= static_cast<int>(Role::stor_e); ++r)
    if (s == role_name(static_cast<Role>(r))) return static_cast<Role>(r);
  return std::nullopt;
}

/// Keyed column values of a solve result; throws if the result has no point.
inline Solution extract_solution(const ProblemInstance& pi, const SolveResult& r) {
  if (!r.has_solution()) throw Error(std::string("no solution to extract (status ") + to_string(r.status) + ")");
  if (r.x.size() != pi.columns.size()) throw Error("solution length does not match the instance");
  Solution sol;
  sol.formulation = pi.formulation;
  sol.status = to_string(r.status);
  sol.objective = r.objective;
  sol.bound = r.bound;
  sol.gap = r.gap;
  sol.seconds = r.seconds;
  for (const auto& [key, col] : pi.index) sol.values[key] = r.x[col];
  return sol;
}

/// Column vector of `pi` filled from keyed values; unkeyed or missing columns
/// take `fill`.
inline std::vector<double> to_column_vector(const ProblemInstance& pi, const Solution& sol, double fill = 0.0) {
  std::vector<double> x(pi.columns.size(), fill);
  for (const auto& [key, col] : pi.index)
    if (auto v = sol.get(key)) x[col] = *v;
  return x;
}

inline nlohmann::json solution_to_json(const Solution& sol, const Network& net) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& [k, v] : sol.values)
    vals.push_back({{"role", role_name(k.role)},
                    {"entity", k.entity},
                    {"conductor", k.conductor},
                    {"step", k.step},
                    {"extra", k.extra},
                    {"value", v}});
  return {{"network", net.name},
          {"base_mva", net.base_mva},
          {"formulation", to_string(sol.formulation)},
          {"status", sol.status},
          {"objective", num(sol.objective)},
          {"bound", num(sol.bound)},
          {"gap", num(sol.gap)},
          {"seconds", sol.seconds},
          {"values", std::move(vals)}};
}

inline Solution solution_from_json(const nlohmann::json& doc) {
  auto number_or = [](const nlohmann::json& j, double fallback) { return j.is_number() ? j.get<double>() : fallback; };
  try {
    if (!doc.is_object()) throw ParseError("solution: top level must be an object");
    Solution sol;
    sol.formulation = parse_formulation(doc.at("formulation").get<std::string>());
    sol.status = doc.value("status", std::string("optimal"));
    sol.objective = number_or(doc.value("objective", nlohmann::json()), kInf);
    sol.bound = number_or(doc.value("bound", nlohmann::json()), -kInf);
    sol.gap = number_or(doc.value("gap", nlohmann::json()), kInf);
    sol.seconds = doc.value("seconds", 0.0);
    const auto& vals = doc.at("values");
    if (!vals.is_array()) throw ParseError("solution: 'values' must be an array");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const auto& e = vals[i];
      const auto role = parse_role(e.at("role").get<std::string>());
      if (!role) throw ParseError("solution: values[" + std::to_string(i) + "].role is unknown");
      VarKey key{*role, e.at("entity").get<std::size_t>(), e.value("conductor", std::size_t{0}),
                 e.at("step").get<std::size_t>(), e.value("extra", std::size_t{0})};
      sol.values[key] = e.at("value").get<double>();
    }
    return sol;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("solution: ") + e.what());
  }
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

/// Per-step storage dispatch in engineering units: one row per device and
/// step with per-conductor p/q columns for every network conductor (empty
/// where the device has no such conductor or the formulation has no Q).
inline std::string dispatch_csv(const Network& net, const TimeGrid& grid, const Solution& sol) {
  std::ostringstream os;
  os << "step,time_h,device,p_charge_mw,p_discharge_mw,energy_mwh";
  for (const auto& c : net.conductors) os << ",p_" << c << "_mw,q_" << c << "_mvar";
  os << "\n";
  const double base = net.base_mva;
  for (std::size_t di = 0; di < net.storages.size(); ++di) {
    const auto& d = net.storages[di];
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      os << k << "," << format_number(grid.start_time(k)) << "," << d.id << ","
         << format_number(sol.at({Role::stor_pc, di, 0, k}) * base) << ","
         << format_number(sol.at({Role::stor_pd, di, 0, k}) * base) << ","
         << format_number(sol.at({Role::stor_e, di, 0, k}) * base);
      for (std::size_t c = 0; c < net.conductors.size(); ++c) {
        const auto p = sol.get({Role::stor_p, di, c, k});
        const auto q = sol.get({Role::stor_q, di, c, k});
        os << "," << (p ? format_number(*p * base) : "") << "," << (q ? format_number(*q * base) : "");
      }
      os << "\n";
    }
  }
  return os.str();
}

/// One commanded step of a storage schedule (MW).
struct ScheduleStep {
  double p_c = 0.0;
  double p_d = 0.0;
  std::optional<double> status;  // overrides the device status when set
};

/// Reads a schedule CSV with columns step, device, p_charge_mw,
/// p_discharge_mw and optionally status (extra columns, such as those of the
/// dispatch table, are ignored). Returns device id -> steps in order.
inline std::map<std::string, std::vector<ScheduleStep>> read_schedule_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (header.empty() && std::getline(is, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) header = detail::split(detail::trim(line), ',');
  }
  auto column = [&](const std::string& name, bool required) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (detail::trim(header[i]) == name) return i;
    if (required) throw ParseError("schedule CSV: missing column '" + name + "'");
    return npos;
  };
  const auto c_step = column("step", true), c_dev = column("device", true);
  const auto c_pc = column("p_charge_mw", true), c_pd = column("p_discharge_mw", true);
  const auto c_status = column("status", false);
  std::map<std::string, std::vector<ScheduleStep>> out;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line, ',');
    const std::string where = "schedule CSV line " + std::to_string(line_no);
    if (f.size() < header.size()) throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields");
    const auto dev = detail::trim(f[c_dev]);
    auto& steps = out[dev];
    const double step = detail::parse_number(f[c_step], where + " step");
    if (step != static_cast<double>(steps.size()))
      throw ParseError(where + ": steps of device '" + dev + "' must be 0, 1, 2, ... in order");
    ScheduleStep s{detail::parse_number(f[c_pc], where + " p_charge_mw"), detail::parse_number(f[c_pd], where + " p_discharge_mw"), {}};
    if (c_status != npos && !detail::trim(f[c_status]).empty()) s.status = detail::parse_number(f[c_status], where + " status");
    steps.push_back(s);
  }
  return out;
}

}  // namespace gridstore
