#pragma once

// Case file reader/writer.
//
// A case is one JSON document:
//
//   {
//     "name": "...", "base_mva": 100, "conductors": ["a"],
//     "time": {"dt_hours": 0.25, "n": 96, "rule": "endpoint"}   // or {"durations": [...]}
//     "profiles": {"day": {"csv": "day.csv", "interp_factor": 4, "periodic": true}},
//     "profile": "day",                                          // global multiplier series
//     "buses": [{"id": "1", "type": "ref", "u_min": 0.94, "u_max": 1.06}],
//     "branches": [{"id": "1-2", "from_bus": "1", "to_bus": "2", "r": 0.01, "x": 0.05, "b": 0.0, "rating_mva": 100}],
//     "generators": [{"id": "g1", "bus": "1", "p_min": 0, "p_max": 300, "q_min": -50, "q_max": 50,
//                     "cost": {"c2": 0.2, "c1": 8, "c0": 0}}],
//     "storages": [{"id": "s1", "bus": "2", "status": 1, "s_ext": {"p": 0, "q": 0}, "s_rating_total": 100,
//                   "eta_c": 0.9, "eta_d": 0.9, "e_init": 1, "e_max": 10, "p_c_max": 5, "p_d_max": 5,
//                   "z_phase": {"r": 0.1, "x": 0.01}, "terminal_condition": "fixed_init"}],
//     "loads": [{"bus": "2", "p_mw": 20, "q_mvar": 5}]
//   }
//
// Series fields (status, s_ext.p/q, load p_mw/q_mvar) take a scalar, which is
// broadcast over the horizon, or an explicit per-step array. Scalar loads are
// scaled by the load's own "profile" or else by the global one. Unknown keys
// are rejected.

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gridstore/datamodel.hpp"
#include "gridstore/ingest.hpp"

namespace gridstore {

struct Case {
  Network network;
  TimeGrid grid;

  bool operator==(const Case&) const = default;
};

namespace case_detail {

using nlohmann::json;

class Reader {
public:
  explicit Reader(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}

  Case read(const json& doc) {
    if (!doc.is_object()) fail("$", "top level must be an object");
    allow(doc, "$", {"name", "base_mva", "conductors", "time", "profiles", "profile", "buses", "branches",
                     "generators", "storages", "loads"});
    Case c;
    auto& net = c.network;
    if (doc.contains("name")) net.name = str(doc["name"], "$.name");
    net.base_mva = number(req(doc, "base_mva", "$"), "$.base_mva");
    if (doc.contains("conductors")) {
      const auto& cs = array(doc["conductors"], "$.conductors");
      net.conductors.clear();
      for (std::size_t i = 0; i < cs.size(); ++i) net.conductors.push_back(str(cs[i], idx("$.conductors", i)));
    }
    c.grid = read_time(req(doc, "time", "$"));
    n_ = c.grid.steps();

    if (doc.contains("profiles")) read_profiles(doc["profiles"]);
    if (doc.contains("profile")) {
      global_profile_ = str(doc["profile"], "$.profile");
      profile(global_profile_, "$.profile");
    }

    const auto& buses = array(req(doc, "buses", "$"), "$.buses");
    for (std::size_t i = 0; i < buses.size(); ++i) net.buses.push_back(read_bus(buses[i], idx("$.buses", i), net));
    if (doc.contains("branches")) {
      const auto& a = array(doc["branches"], "$.branches");
      for (std::size_t i = 0; i < a.size(); ++i) net.branches.push_back(read_branch(a[i], idx("$.branches", i), net));
    }
    if (doc.contains("generators")) {
      const auto& a = array(doc["generators"], "$.generators");
      for (std::size_t i = 0; i < a.size(); ++i)
        net.generators.push_back(read_generator(a[i], idx("$.generators", i), net));
    }
    if (doc.contains("storages")) {
      const auto& a = array(doc["storages"], "$.storages");
      for (std::size_t i = 0; i < a.size(); ++i) net.storages.push_back(read_storage(a[i], idx("$.storages", i)));
    }
    if (doc.contains("loads")) {
      const auto& a = array(doc["loads"], "$.loads");
      for (std::size_t i = 0; i < a.size(); ++i) read_load(a[i], idx("$.loads", i), net);
    }
    return c;
  }

private:
  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ParseError(path + ": " + msg);
  }
  static std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

  static void allow(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!ok.count(it.key())) fail(path + "." + it.key(), "unknown key");
  }
  static const json& req(const json& obj, const char* key, const std::string& path) {
    if (!obj.contains(key)) fail(path + "." + key, "missing required field");
    return obj[key];
  }
  static double number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
  }
  static std::string str(const json& v, const std::string& path) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    fail(path, "expected a string");
  }
  static const json& array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
  }
  static const json& object(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object");
    return v;
  }

  std::vector<double> series(const json& v, const std::string& path) const {
    if (v.is_number()) return std::vector<double>(n_, v.get<double>());
    const auto& a = array(v, path);
    if (a.size() != n_)
      fail(path, "series has " + std::to_string(a.size()) + " entries, expected " + std::to_string(n_));
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(number(a[i], idx(path, i)));
    return out;
  }

  std::vector<double> numbers(const json& v, const std::string& path) const {
    const auto& a = array(v, path);
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(number(a[i], idx(path, i)));
    return out;
  }

  TimeGrid read_time(const json& t) {
    object(t, "$.time");
    allow(t, "$.time", {"durations", "dt_hours", "n", "rule"});
    TimeGrid g;
    if (t.contains("rule")) g.rule = parse_rule(str(t["rule"], "$.time.rule"));
    if (t.contains("durations")) {
      if (t.contains("dt_hours") || t.contains("n")) fail("$.time", "give either durations or dt_hours/n");
      g.durations = numbers(t["durations"], "$.time.durations");
    } else {
      double dt = number(req(t, "dt_hours", "$.time"), "$.time.dt_hours");
      const auto& nv = req(t, "n", "$.time");
      if (!nv.is_number_integer() || nv.get<long long>() < 0) fail("$.time.n", "expected a nonnegative integer");
      g.durations.assign(static_cast<std::size_t>(nv.get<long long>()), dt);
    }
    return g;
  }

  void read_profiles(const json& ps) {
    object(ps, "$.profiles");
    for (auto it = ps.begin(); it != ps.end(); ++it) {
      const std::string path = "$.profiles." + it.key();
      const auto& p = object(it.value(), path);
      allow(p, path, {"multipliers", "csv", "interp_factor", "periodic"});
      LoadProfile prof;
      if (p.contains("multipliers") == p.contains("csv")) fail(path, "give exactly one of multipliers or csv");
      if (p.contains("multipliers")) {
        prof.multipliers = numbers(p["multipliers"], path + ".multipliers");
      } else {
        auto file = base_dir_ / str(p["csv"], path + ".csv");
        std::ifstream in(file);
        if (!in) fail(path + ".csv", "cannot open '" + file.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        prof = read_profile_csv(ss.str());
      }
      for (double m : prof.multipliers)
        if (!(m >= 0.0)) fail(path, "multipliers must be >= 0");
      int factor = 1;
      if (p.contains("interp_factor")) {
        if (!p["interp_factor"].is_number_integer()) fail(path + ".interp_factor", "expected an integer");
        factor = p["interp_factor"].get<int>();
        if (factor < 1) fail(path + ".interp_factor", "must be >= 1");
      }
      bool periodic = false;
      if (p.contains("periodic")) {
        if (!p["periodic"].is_boolean()) fail(path + ".periodic", "expected a boolean");
        periodic = p["periodic"].get<bool>();
      }
      LoadProfile fine = periodic ? interpolate_periodic(prof, factor) : interpolate_profile(prof, factor);
      if (fine.multipliers.size() != n_)
        fail(path, "profile has " + std::to_string(fine.multipliers.size()) + " samples after interpolation, expected " +
                       std::to_string(n_));
      profiles_[it.key()] = fine.multipliers;
    }
  }

  const std::vector<double>& profile(const std::string& name, const std::string& path) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end()) fail(path, "unknown profile '" + name + "'");
    return it->second;
  }

  std::size_t conductor_index(const Network& net, const std::string& name, const std::string& path) const {
    for (std::size_t i = 0; i < net.conductors.size(); ++i)
      if (net.conductors[i] == name) return i;
    fail(path, "unknown conductor '" + name + "'");
  }

  Bus read_bus(const json& b, const std::string& path, const Network& net) {
    object(b, path);
    allow(b, path, {"id", "type", "conductors", "u_min", "u_max", "shunt_g_mw", "shunt_b_mvar"});
    Bus bus;
    bus.id = str(req(b, "id", path), path + ".id");
    if (b.contains("type")) {
      auto t = str(b["type"], path + ".type");
      if (t != "ref" && t != "pq" && t != "pv") fail(path + ".type", "expected ref, pv or pq");
      bus.reference = (t == "ref");
    }
    if (b.contains("conductors")) {
      const auto& cs = array(b["conductors"], path + ".conductors");
      for (std::size_t i = 0; i < cs.size(); ++i)
        bus.conductors.push_back(conductor_index(net, str(cs[i], idx(path + ".conductors", i)), idx(path + ".conductors", i)));
    } else {
      for (std::size_t i = 0; i < net.conductors.size(); ++i) bus.conductors.push_back(i);
    }
    const std::size_t nc = bus.conductors.size();
    auto per_conductor = [&](const char* key, double dflt) {
      if (!b.contains(key)) return std::vector<double>(nc, dflt);
      const auto& v = b[key];
      if (v.is_number()) return std::vector<double>(nc, v.get<double>());
      auto out = numbers(v, path + "." + key);
      if (out.size() != nc) fail(path + "." + key, "expected one value per bus conductor");
      return out;
    };
    bus.u_min = per_conductor("u_min", 0.9);
    bus.u_max = per_conductor("u_max", 1.1);
    if (b.contains("shunt_g_mw")) bus.shunt_g = number(b["shunt_g_mw"], path + ".shunt_g_mw");
    if (b.contains("shunt_b_mvar")) bus.shunt_b = number(b["shunt_b_mvar"], path + ".shunt_b_mvar");
    bus.load.assign(nc, std::vector<Complex>(n_, Complex{}));
    return bus;
  }

  std::size_t optional_conductor(const json& o, const std::string& path, const Network& net) const {
    if (!o.contains("conductor")) return 0;
    return conductor_index(net, str(o["conductor"], path + ".conductor"), path + ".conductor");
  }

  Branch read_branch(const json& b, const std::string& path, const Network& net) {
    object(b, path);
    allow(b, path, {"id", "from_bus", "to_bus", "conductor", "r", "x", "b", "rating_mva"});
    Branch br;
    br.id = str(req(b, "id", path), path + ".id");
    br.from_bus = str(req(b, "from_bus", path), path + ".from_bus");
    br.to_bus = str(req(b, "to_bus", path), path + ".to_bus");
    br.conductor = optional_conductor(b, path, net);
    br.r = number(req(b, "r", path), path + ".r");
    br.x = number(req(b, "x", path), path + ".x");
    if (b.contains("b")) br.b = number(b["b"], path + ".b");
    if (b.contains("rating_mva")) br.rating_mva = number(b["rating_mva"], path + ".rating_mva");
    return br;
  }

  Generator read_generator(const json& g, const std::string& path, const Network& net) {
    object(g, path);
    allow(g, path, {"id", "bus", "conductor", "p_min", "p_max", "q_min", "q_max", "cost"});
    Generator gen;
    gen.id = str(req(g, "id", path), path + ".id");
    gen.bus = str(req(g, "bus", path), path + ".bus");
    gen.conductor = optional_conductor(g, path, net);
    gen.p_min = number(req(g, "p_min", path), path + ".p_min");
    gen.p_max = number(req(g, "p_max", path), path + ".p_max");
    if (g.contains("q_min")) gen.q_min = number(g["q_min"], path + ".q_min");
    if (g.contains("q_max")) gen.q_max = number(g["q_max"], path + ".q_max");
    if (g.contains("cost")) {
      const auto& c = object(g["cost"], path + ".cost");
      allow(c, path + ".cost", {"c2", "c1", "c0"});
      if (c.contains("c2")) gen.cost.c2 = number(c["c2"], path + ".cost.c2");
      if (c.contains("c1")) gen.cost.c1 = number(c["c1"], path + ".cost.c1");
      if (c.contains("c0")) gen.cost.c0 = number(c["c0"], path + ".cost.c0");
    }
    return gen;
  }

  static Complex impedance(const json& z, const std::string& path) {
    object(z, path);
    allow(z, path, {"r", "x"});
    return {number(req(z, "r", path), path + ".r"), number(req(z, "x", path), path + ".x")};
  }

  StorageDevice read_storage(const json& s, const std::string& path) {
    object(s, path);
    allow(s, path, {"id", "bus", "status", "s_ext", "s_rating_total", "s_rating_phase", "i_rating_phase", "eta_c",
                    "eta_d", "e_init", "e_max", "p_c_max", "p_d_max", "z_phase", "terminal_condition"});
    StorageDevice d;
    d.id = str(req(s, "id", path), path + ".id");
    d.bus = str(req(s, "bus", path), path + ".bus");
    d.status = s.contains("status") ? series(s["status"], path + ".status") : std::vector<double>(n_, 1.0);
    std::vector<double> pe(n_, 0.0), qe(n_, 0.0);
    if (s.contains("s_ext")) {
      const auto& e = object(s["s_ext"], path + ".s_ext");
      allow(e, path + ".s_ext", {"p", "q"});
      if (e.contains("p")) pe = series(e["p"], path + ".s_ext.p");
      if (e.contains("q")) qe = series(e["q"], path + ".s_ext.q");
    }
    for (std::size_t k = 0; k < n_; ++k) d.s_ext.emplace_back(pe[k], qe[k]);
    d.s_rating_total = number(req(s, "s_rating_total", path), path + ".s_rating_total");
    if (s.contains("s_rating_phase")) d.s_rating_phase = numbers(s["s_rating_phase"], path + ".s_rating_phase");
    if (s.contains("i_rating_phase")) d.i_rating_phase = numbers(s["i_rating_phase"], path + ".i_rating_phase");
    d.eta_c = number(req(s, "eta_c", path), path + ".eta_c");
    d.eta_d = number(req(s, "eta_d", path), path + ".eta_d");
    d.e_init = number(req(s, "e_init", path), path + ".e_init");
    d.e_max = number(req(s, "e_max", path), path + ".e_max");
    d.p_c_max = number(req(s, "p_c_max", path), path + ".p_c_max");
    d.p_d_max = number(req(s, "p_d_max", path), path + ".p_d_max");
    const auto& z = req(s, "z_phase", path);
    if (z.is_array()) {
      for (std::size_t i = 0; i < z.size(); ++i) d.z_phase.push_back(impedance(z[i], idx(path + ".z_phase", i)));
    } else {
      z_broadcast_.emplace_back(d.id, impedance(z, path + ".z_phase"));
    }
    if (s.contains("terminal_condition")) {
      const auto& t = s["terminal_condition"];
      const std::string tp = path + ".terminal_condition";
      if (t.is_string()) {
        auto k = t.get<std::string>();
        if (k == "fixed_init") d.terminal.kind = TerminalCondition::Kind::fixed_init;
        else if (k == "terminal_ge_initial") d.terminal.kind = TerminalCondition::Kind::terminal_ge_initial;
        else fail(tp, "expected fixed_init, terminal_ge_initial or {\"terminal_fixed\": value}");
      } else {
        object(t, tp);
        allow(t, tp, {"terminal_fixed"});
        d.terminal.kind = TerminalCondition::Kind::terminal_fixed;
        d.terminal.value_mwh = number(req(t, "terminal_fixed", tp), tp + ".terminal_fixed");
      }
    }
    return d;
  }

  void read_load(const json& l, const std::string& path, Network& net) {
    object(l, path);
    allow(l, path, {"bus", "conductor", "p_mw", "q_mvar", "profile"});
    auto bus_id = str(req(l, "bus", path), path + ".bus");
    auto bi = net.bus_index(bus_id);
    if (bi == npos) fail(path + ".bus", "unknown bus '" + bus_id + "'");
    Bus& bus = net.buses[bi];
    std::size_t local = 0;
    if (l.contains("conductor")) {
      local = bus.local_conductor(conductor_index(net, str(l["conductor"], path + ".conductor"), path + ".conductor"));
      if (local == npos) fail(path + ".conductor", "conductor not present at bus '" + bus_id + "'");
    } else if (bus.conductors.size() != 1) {
      fail(path + ".conductor", "required for multi-conductor bus '" + bus_id + "'");
    }
    const std::vector<double>* scale = nullptr;
    if (l.contains("profile")) {
      if (!l["profile"].is_null()) scale = &profile(str(l["profile"], path + ".profile"), path + ".profile");
    } else if (!global_profile_.empty()) {
      scale = &profile(global_profile_, "$.profile");
    }
    auto component = [&](const char* key) {
      if (!l.contains(key)) return std::vector<double>(n_, 0.0);
      const auto& v = l[key];
      if (v.is_number()) {
        std::vector<double> out(n_, v.get<double>());
        if (scale)
          for (std::size_t k = 0; k < n_; ++k) out[k] *= (*scale)[k];
        return out;
      }
      if (scale && l.contains("profile")) fail(path + ".profile", "profile applies to scalar loads only");
      return series(v, path + "." + key);
    };
    auto p = component("p_mw");
    auto q = component("q_mvar");
    for (std::size_t k = 0; k < n_; ++k) bus.load[local][k] += Complex(p[k], q[k]);
  }

public:
  void finish(Network& net) {
    for (auto& [id, z] : z_broadcast_)
      for (auto& d : net.storages)
        if (d.id == id) {
          auto bi = net.bus_index(d.bus);
          std::size_t nc = bi == npos ? 1 : net.buses[bi].conductors.size();
          d.z_phase.assign(nc, z);
        }
  }

private:
  std::filesystem::path base_dir_;
  std::size_t n_ = 0;
  std::map<std::string, std::vector<double>> profiles_;
  std::string global_profile_;
  std::vector<std::pair<std::string, Complex>> z_broadcast_;
};

}  // namespace case_detail

/// Parses and validates a case document. Relative profile CSV paths resolve
/// against `base_dir`.
inline Case parse_case(const std::string& text, const std::filesystem::path& base_dir = ".") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("$: malformed JSON: ") + e.what());
  }
  case_detail::Reader reader(base_dir);
  Case c = reader.read(doc);
  reader.finish(c.network);
  auto findings = validate_network(c.network, c.grid);
  if (!findings.empty()) throw ValidationError("case validation failed: " + format_findings(findings));
  return c;
}

inline Case load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_case(ss.str(), path.parent_path());
}

/// Canonical JSON form: explicit per-step series, durations array, no profiles.
inline nlohmann::json case_to_json(const Network& net, const TimeGrid& grid) {
  using nlohmann::json;
  json doc;
  if (!net.name.empty()) doc["name"] = net.name;
  doc["base_mva"] = net.base_mva;
  doc["conductors"] = net.conductors;
  doc["time"] = {{"durations", grid.durations}, {"rule", to_string(grid.rule)}};
  doc["buses"] = json::array();
  doc["loads"] = json::array();
  for (const auto& b : net.buses) {
    json jb{{"id", b.id}, {"type", b.reference ? "ref" : "pq"}, {"u_min", b.u_min}, {"u_max", b.u_max}};
    json cs = json::array();
    for (auto c : b.conductors) cs.push_back(net.conductors.at(c));
    jb["conductors"] = cs;
    if (b.shunt_g != 0.0) jb["shunt_g_mw"] = b.shunt_g;
    if (b.shunt_b != 0.0) jb["shunt_b_mvar"] = b.shunt_b;
    doc["buses"].push_back(jb);
    for (std::size_t p = 0; p < b.conductors.size(); ++p) {
      std::vector<double> pm, qm;
      bool any = false;
      for (const auto& s : b.load[p]) {
        pm.push_back(s.real());
        qm.push_back(s.imag());
        any = any || s != Complex{};
      }
      if (!any) continue;
      doc["loads"].push_back({{"bus", b.id}, {"conductor", net.conductors.at(b.conductors[p])}, {"p_mw", pm},
                              {"q_mvar", qm}, {"profile", nullptr}});
    }
  }
  doc["branches"] = json::array();
  for (const auto& br : net.branches) {
    json j{{"id", br.id}, {"from_bus", br.from_bus}, {"to_bus", br.to_bus}, {"conductor", net.conductors.at(br.conductor)},
           {"r", br.r}, {"x", br.x}, {"b", br.b}};
    if (std::isfinite(br.rating_mva)) j["rating_mva"] = br.rating_mva;
    doc["branches"].push_back(j);
  }
  doc["generators"] = json::array();
  for (const auto& g : net.generators)
    doc["generators"].push_back({{"id", g.id}, {"bus", g.bus}, {"conductor", net.conductors.at(g.conductor)},
                                 {"p_min", g.p_min}, {"p_max", g.p_max}, {"q_min", g.q_min}, {"q_max", g.q_max},
                                 {"cost", {{"c2", g.cost.c2}, {"c1", g.cost.c1}, {"c0", g.cost.c0}}}});
  doc["storages"] = json::array();
  for (const auto& d : net.storages) {
    std::vector<double> pe, qe;
    for (const auto& s : d.s_ext) {
      pe.push_back(s.real());
      qe.push_back(s.imag());
    }
    json z = json::array();
    for (const auto& zz : d.z_phase) z.push_back({{"r", zz.real()}, {"x", zz.imag()}});
    json j{{"id", d.id}, {"bus", d.bus}, {"status", d.status}, {"s_ext", {{"p", pe}, {"q", qe}}},
           {"s_rating_total", d.s_rating_total}, {"eta_c", d.eta_c}, {"eta_d", d.eta_d}, {"e_init", d.e_init},
           {"e_max", d.e_max}, {"p_c_max", d.p_c_max}, {"p_d_max", d.p_d_max}, {"z_phase", z}};
    if (d.s_rating_phase) j["s_rating_phase"] = *d.s_rating_phase;
    if (d.i_rating_phase) j["i_rating_phase"] = *d.i_rating_phase;
    switch (d.terminal.kind) {
      case TerminalCondition::Kind::fixed_init: j["terminal_condition"] = "fixed_init"; break;
      case TerminalCondition::Kind::terminal_ge_initial: j["terminal_condition"] = "terminal_ge_initial"; break;
      case TerminalCondition::Kind::terminal_fixed:
        j["terminal_condition"] = {{"terminal_fixed", d.terminal.value_mwh}};
        break;
    }
    doc["storages"].push_back(j);
  }
  return doc;
}

inline std::string dump_case(const Network& net, const TimeGrid& grid, int indent = 1) {
  return case_to_json(net, grid).dump(indent);
}

}  // namespace gridstore
