#pragma once

// Load profiles and network transformations used to build study cases.

#include <array>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gridstore/datamodel.hpp"

namespace gridstore {

struct LoadProfile {
  std::vector<double> hours;        // optional time stamps, same length as multipliers when present
  std::vector<double> multipliers;  // nonnegative scalars

  bool operator==(const LoadProfile&) const = default;
};

namespace detail {

inline std::vector<double> lerp_series(const std::vector<double>& v, int factor) {
  if (v.size() < 2) return v;
  std::vector<double> out;
  out.reserve((v.size() - 1) * static_cast<std::size_t>(factor) + 1);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    out.push_back(v[i]);
    for (int j = 1; j < factor; ++j) {
      const double w = static_cast<double>(j) / factor;
      out.push_back(v[i] + (v[i + 1] - v[i]) * w);
    }
  }
  out.push_back(v.back());
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": '" + s + "' is not a number");
  }
}

}  // namespace detail

/// Piecewise-linear refinement: (len-1)*factor+1 samples, original samples kept exactly.
inline LoadProfile interpolate_profile(const LoadProfile& p, int factor) {
  if (factor < 1) throw Error("interpolate_profile: factor must be >= 1");
  for (double m : p.multipliers)
    if (!(m >= 0.0)) throw ValidationError("interpolate_profile: multipliers must be >= 0");
  if (factor == 1) return p;
  if (p.multipliers.size() < 2) throw Error("interpolate_profile: at least two samples are needed");
  LoadProfile out;
  out.multipliers = detail::lerp_series(p.multipliers, factor);
  if (!p.hours.empty()) {
    if (p.hours.size() != p.multipliers.size()) throw Error("interpolate_profile: hours/multipliers length mismatch");
    out.hours = detail::lerp_series(p.hours, factor);
  }
  return out;
}

/// Treats the profile as one period of a cycle (e.g. a day): the first sample
/// is appended before refinement and the duplicate endpoint dropped after, so
/// the result has len*factor samples.
inline LoadProfile interpolate_periodic(const LoadProfile& p, int factor) {
  if (p.multipliers.empty()) throw Error("interpolate_periodic: empty profile");
  LoadProfile wrapped;
  wrapped.multipliers = p.multipliers;
  wrapped.multipliers.push_back(p.multipliers.front());
  if (!p.hours.empty()) {
    if (p.hours.size() != p.multipliers.size()) throw Error("interpolate_periodic: hours/multipliers length mismatch");
    const double period = p.hours.size() > 1 ? (p.hours.back() - p.hours.front()) * p.hours.size() /
                                                   static_cast<double>(p.hours.size() - 1)
                                             : 1.0;
    wrapped.hours = p.hours;
    wrapped.hours.push_back(p.hours.front() + period);
  }
  LoadProfile out = interpolate_profile(wrapped, factor);
  out.multipliers.pop_back();
  if (!out.hours.empty()) out.hours.pop_back();
  return out;
}

/// Reads a CSV with header `hour,multiplier`.
inline LoadProfile read_profile_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  LoadProfile p;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto cells = detail::split(line, ',');
    if (!header) {
      if (cells.size() != 2 || cells[0] != "hour" || cells[1] != "multiplier")
        throw ParseError("profile csv line " + std::to_string(lineno) + ": expected header 'hour,multiplier'");
      header = true;
      continue;
    }
    if (cells.size() != 2) throw ParseError("profile csv line " + std::to_string(lineno) + ": expected 2 columns");
    const std::string where = "profile csv line " + std::to_string(lineno);
    p.hours.push_back(detail::parse_number(cells[0], where));
    double m = detail::parse_number(cells[1], where);
    if (!(m >= 0.0)) throw ValidationError(where + ": multiplier must be >= 0");
    p.multipliers.push_back(m);
  }
  if (!header) throw ParseError("profile csv: missing header 'hour,multiplier'");
  return p;
}

inline std::string write_profile_csv(const LoadProfile& p) {
  std::ostringstream os;
  os.precision(17);
  os << "hour,multiplier\n";
  for (std::size_t i = 0; i < p.multipliers.size(); ++i)
    os << (p.hours.empty() ? static_cast<double>(i) : p.hours[i]) << ',' << p.multipliers[i] << '\n';
  return os.str();
}

/// Builds a three-conductor network from a single-conductor one: every
/// branch and generator is replicated once per phase with one third of the
/// original capacity (impedances scaled by 3, quadratic cost by 3) so that a
/// balanced split reproduces the original system; bus loads are split by the
/// given fractions and storage devices become three-conductor converters
/// around one shared energy buffer.
inline Network make_three_phase(const Network& net, const std::array<double, 3>& splits) {
  if (net.conductors.size() != 1) throw Error("make_three_phase: input network must have exactly one conductor");
  double sum = 0.0;
  for (double s : splits) {
    if (!(s >= 0.0)) throw Error("make_three_phase: splits must be >= 0");
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << "make_three_phase: splits must sum to 1 (got " << sum << ")";
    throw Error(msg.str());
  }
  static const std::array<std::string, 3> names{"a", "b", "c"};
  constexpr double third = 1.0 / 3.0;

  Network out;
  out.name = net.name.empty() ? std::string("three_phase") : net.name + "_3ph";
  out.base_mva = net.base_mva;
  out.conductors.assign(names.begin(), names.end());

  for (const auto& bus : net.buses) {
    Bus b;
    b.id = bus.id;
    b.reference = bus.reference;
    b.conductors = {0, 1, 2};
    b.u_min.assign(3, bus.u_min.at(0));
    b.u_max.assign(3, bus.u_max.at(0));
    b.load.resize(3);
    for (std::size_t p = 0; p < 3; ++p) {
      b.load[p].reserve(bus.load.at(0).size());
      for (const auto& s : bus.load[0]) b.load[p].push_back(s * splits[p]);
    }
    b.shunt_g = bus.shunt_g * third;
    b.shunt_b = bus.shunt_b * third;
    out.buses.push_back(std::move(b));
  }
  for (const auto& br : net.branches)
    for (std::size_t p = 0; p < 3; ++p) {
      Branch c = br;
      c.id = br.id + "." + names[p];
      c.conductor = p;
      c.r = br.r * 3.0;
      c.x = br.x * 3.0;
      c.b = br.b * third;
      c.rating_mva = br.rating_mva * third;
      out.branches.push_back(std::move(c));
    }
  for (const auto& g : net.generators)
    for (std::size_t p = 0; p < 3; ++p) {
      Generator c = g;
      c.id = g.id + "." + names[p];
      c.conductor = p;
      c.p_min = g.p_min * third;
      c.p_max = g.p_max * third;
      c.q_min = g.q_min * third;
      c.q_max = g.q_max * third;
      c.cost.c2 = g.cost.c2 * 3.0;
      c.cost.c0 = g.cost.c0 * third;
      out.generators.push_back(std::move(c));
    }
  for (const auto& d : net.storages) {
    StorageDevice c = d;
    c.s_rating_phase.reset();
    const Complex z = d.z_phase.empty() ? Complex{} : d.z_phase.front();
    c.z_phase.assign(3, z * 3.0);
    if (d.i_rating_phase) c.i_rating_phase = std::vector<double>(3, d.i_rating_phase->at(0) * third);
    out.storages.push_back(std::move(c));
  }
  return out;
}

}  // namespace gridstore
