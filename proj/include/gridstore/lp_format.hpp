#pragma once

// Export of problem instances: CPLEX-style LP text for (mixed-binary) linear
// instances, and a JSON document for any instance including cones and the
// nonlinear storage relations.
//
// JSON schema (infinite bounds are written as null):
//   {"format": "gridstore-problem", "version": 1, "formulation": "dc-mi",
//    "objective_constant": c, "pwl_error_bound": e,
//    "columns":   [{"name", "lb", "ub", "cost", "binary", "key": {"role", "entity", "conductor", "step", "extra"}}],
//    "rows":      [{"name", "family", "sense": "<=|>=|=", "rhs", "terms": [[col, coef], ...]}],
//    "cones":     [{"name", "family", "x": [col, ...], "u": {"col", "scale", "constant"}, "v": {...}}],
//    "nonlinear": [{"kind", "name", "cols": [...], "params": [...]}],
//    "nonlinear_kinds": {kind: description}}
// A cone reads sum x_i^2 <= u v with u = scale * x[col] + constant (col null
// for a constant side).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gridstore/problem.hpp"
#include "gridstore/solution.hpp"

namespace gridstore {

namespace lp_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_terms(std::ostringstream& os, const std::vector<Term>& terms, const ProblemInstance& pi) {
  if (terms.empty()) {
    os << " 0 " << pi.columns.front().name;
    return;
  }
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (i > 0 && i % 8 == 0) os << "\n   ";
    const double c = terms[i].coef;
    os << (c < 0.0 ? " - " : " + ") << num(std::abs(c)) << " " << pi.columns[terms[i].col].name;
  }
}

}  // namespace lp_detail

/// LP text of a linear or mixed-binary instance. Throws if cones or
/// nonlinear relations remain (take an outer-approximation snapshot first).
inline std::string lp_text(const ProblemInstance& pi) {
  using namespace lp_detail;
  if (!pi.cones.empty())
    throw Error("export_lp: instance has " + std::to_string(pi.cones.size()) +
                " cone constraints; replace them by outer-approximation cuts first");
  if (!pi.nonlinear.empty()) throw Error("export_lp: instance has nonlinear relations");
  if (pi.columns.empty()) throw Error("export_lp: instance has no columns");
  std::ostringstream os;
  os << "\\ formulation " << to_string(pi.formulation) << "\n";
  os << "\\ columns " << pi.columns.size() << ", rows " << pi.rows.size() << "\n";
  os << "Minimize\n obj:";
  std::vector<Term> obj;
  for (std::size_t j = 0; j < pi.columns.size(); ++j)
    if (pi.columns[j].cost != 0.0) obj.push_back({j, pi.columns[j].cost});
  write_terms(os, obj, pi);
  if (pi.objective_constant != 0.0)
    os << (pi.objective_constant < 0.0 ? " - " : " + ") << num(std::abs(pi.objective_constant));
  os << "\nSubject To\n";
  for (const auto& r : pi.rows) {
    os << " " << r.name << ":";
    write_terms(os, r.terms, pi);
    os << " " << sense_symbol(r.sense) << " " << num(r.rhs) << "\n";
  }
  os << "Bounds\n";
  for (const auto& c : pi.columns) {
    if (c.binary && c.lb == 0.0 && c.ub == 1.0) continue;
    if (c.lb == c.ub) os << " " << c.name << " = " << num(c.lb) << "\n";
    else if (!std::isfinite(c.lb) && !std::isfinite(c.ub)) os << " " << c.name << " free\n";
    else
      os << " " << (std::isfinite(c.lb) ? num(c.lb) : "-inf") << " <= " << c.name << " <= "
         << (std::isfinite(c.ub) ? num(c.ub) : "+inf") << "\n";
  }
  bool any_binary = false;
  for (const auto& c : pi.columns) {
    if (!c.binary) continue;
    if (!any_binary) os << "Binary\n";
    any_binary = true;
    os << " " << c.name << "\n";
  }
  os << "End\n";
  return os.str();
}

inline void export_lp(const ProblemInstance& pi, const std::string& path) {
  const auto text = lp_text(pi);
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

inline nlohmann::json problem_to_json(const ProblemInstance& pi) {
  using nlohmann::json;
  auto bound = [](double v) -> json { return std::isfinite(v) ? json(v) : json(nullptr); };
  auto side = [](const ConeTerm& t) -> json {
    return {{"col", t.col == npos ? json(nullptr) : json(t.col)}, {"scale", t.scale}, {"constant", t.constant}};
  };
  json cols = json::array(), rows = json::array(), cones = json::array(), nl = json::array();
  for (const auto& c : pi.columns) {
    json j{{"name", c.name}, {"lb", bound(c.lb)}, {"ub", bound(c.ub)}, {"cost", c.cost}, {"binary", c.binary}};
    if (c.key)
      j["key"] = {{"role", role_name(c.key->role)}, {"entity", c.key->entity}, {"conductor", c.key->conductor},
                  {"step", c.key->step}, {"extra", c.key->extra}};
    cols.push_back(std::move(j));
  }
  for (const auto& r : pi.rows) {
    json terms = json::array();
    for (const auto& t : r.terms) terms.push_back({t.col, t.coef});
    rows.push_back({{"name", r.name}, {"family", r.family}, {"sense", sense_symbol(r.sense)}, {"rhs", r.rhs},
                    {"terms", std::move(terms)}});
  }
  for (const auto& c : pi.cones)
    cones.push_back({{"name", c.name}, {"family", c.family}, {"x", c.x}, {"u", side(c.u)}, {"v", side(c.v)}});
  for (const auto& n : pi.nonlinear)
    nl.push_back({{"kind", kind_name(n.kind)}, {"name", n.name}, {"cols", n.cols}, {"params", n.params}});
  return {{"format", "gridstore-problem"},
          {"version", 1},
          {"formulation", to_string(pi.formulation)},
          {"objective_constant", pi.objective_constant},
          {"pwl_error_bound", pi.pwl_error_bound},
          {"columns", std::move(cols)},
          {"rows", std::move(rows)},
          {"cones", std::move(cones)},
          {"nonlinear", std::move(nl)},
          {"nonlinear_kinds",
           {{"complex_balance",
             "cols [P_p..., Q_p..., I_p..., Pstor, Qint], params [R_p..., X_p..., Re Sext, Im Sext]: "
             "sum P + Pstor - sum R I^2 = Re Sext and sum Q - Qint - sum X I^2 = Im Sext"},
            {"power_current_voltage", "cols [P, Q, U, I]: P^2 + Q^2 = U^2 I^2"},
            {"current_limit", "cols [I], params [limit]: I <= limit"},
            {"complementarity", "cols [Pc, Pd]: Pc * Pd = 0"}}}};
}

inline ProblemInstance problem_from_json(const nlohmann::json& doc) {
  using nlohmann::json;
  try {
    if (doc.value("format", std::string()) != "gridstore-problem") throw ParseError("problem JSON: unknown format");
    auto bound = [](const json& j, double inf) { return j.is_null() ? inf : j.get<double>(); };
    ProblemInstance pi;
    pi.formulation = parse_formulation(doc.at("formulation").get<std::string>());
    pi.objective_constant = doc.at("objective_constant").get<double>();
    pi.pwl_error_bound = doc.value("pwl_error_bound", 0.0);
    for (const auto& c : doc.at("columns")) {
      std::optional<VarKey> key;
      if (c.contains("key")) {
        const auto& k = c["key"];
        auto role = parse_role(k.at("role").get<std::string>());
        if (!role) throw ParseError("problem JSON: unknown role in column '" + c.at("name").get<std::string>() + "'");
        key = VarKey{*role, k.at("entity").get<std::size_t>(), k.at("conductor").get<std::size_t>(),
                     k.at("step").get<std::size_t>(), k.at("extra").get<std::size_t>()};
      }
      pi.add_column(c.at("name").get<std::string>(), bound(c.at("lb"), -kInf), bound(c.at("ub"), kInf),
                    c.at("cost").get<double>(), c.at("binary").get<bool>(), key);
    }
    for (const auto& r : doc.at("rows")) {
      std::vector<Term> terms;
      for (const auto& t : r.at("terms")) terms.push_back({t.at(0).get<std::size_t>(), t.at(1).get<double>()});
      const auto s = r.at("sense").get<std::string>();
      const Sense sense = s == "<=" ? Sense::le : s == ">=" ? Sense::ge : s == "=" ? Sense::eq
                                    : throw ParseError("problem JSON: bad sense '" + s + "'");
      pi.add_row(r.at("name").get<std::string>(), r.at("family").get<std::string>(), std::move(terms), sense,
                 r.at("rhs").get<double>());
    }
    auto side = [](const json& j) {
      return ConeTerm{j.at("col").is_null() ? npos : j.at("col").get<std::size_t>(), j.at("scale").get<double>(),
                      j.at("constant").get<double>()};
    };
    for (const auto& c : doc.at("cones"))
      pi.cones.push_back({c.at("name").get<std::string>(), c.at("family").get<std::string>(),
                          c.at("x").get<std::vector<std::size_t>>(), side(c.at("u")), side(c.at("v"))});
    for (const auto& n : doc.at("nonlinear")) {
      const auto kind = n.at("kind").get<std::string>();
      NonlinearConstraint nc{};
      bool found = false;
      for (auto k : {NonlinearConstraint::Kind::complex_balance, NonlinearConstraint::Kind::power_current_voltage,
                     NonlinearConstraint::Kind::current_limit, NonlinearConstraint::Kind::complementarity})
        if (kind == kind_name(k)) {
          nc.kind = k;
          found = true;
        }
      if (!found) throw ParseError("problem JSON: unknown nonlinear kind '" + kind + "'");
      nc.name = n.at("name").get<std::string>();
      nc.cols = n.at("cols").get<std::vector<std::size_t>>();
      nc.params = n.at("params").get<std::vector<double>>();
      pi.nonlinear.push_back(std::move(nc));
    }
    const auto ncols = pi.columns.size();
    for (const auto& r : pi.rows)
      for (const auto& t : r.terms)
        if (t.col >= ncols) throw ParseError("problem JSON: row '" + r.name + "' references a missing column");
    return pi;
  } catch (const json::exception& e) {
    throw ParseError(std::string("problem JSON: ") + e.what());
  }
}

}  // namespace gridstore
