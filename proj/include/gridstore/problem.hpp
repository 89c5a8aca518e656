#pragma once

// ProblemInstance: an explicit optimization model over named columns.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gridstore/types.hpp"

namespace gridstore {

enum class Formulation { dc_mi, dc_relaxed, soc_mi, soc_relaxed, ac_nl, ac_mi };

inline std::string to_string(Formulation f) {
  switch (f) {
    case Formulation::dc_mi: return "dc-mi";
    case Formulation::dc_relaxed: return "relaxed-dc";
    case Formulation::soc_mi: return "soc-mi";
    case Formulation::soc_relaxed: return "relaxed-soc";
    case Formulation::ac_nl: return "ac-nl";
    case Formulation::ac_mi: return "ac-mi";
  }
  return "?";
}

inline Formulation parse_formulation(const std::string& s) {
  for (auto f : {Formulation::dc_mi, Formulation::dc_relaxed, Formulation::soc_mi, Formulation::soc_relaxed,
                 Formulation::ac_nl, Formulation::ac_mi})
    if (to_string(f) == s) return f;
  throw ParseError("unknown formulation '" + s + "'");
}

inline bool is_dc(Formulation f) { return f == Formulation::dc_mi || f == Formulation::dc_relaxed; }
inline bool is_soc(Formulation f) { return f == Formulation::soc_mi || f == Formulation::soc_relaxed; }
inline bool is_ac(Formulation f) { return f == Formulation::ac_nl || f == Formulation::ac_mi; }
inline bool has_binaries(Formulation f) {
  return f == Formulation::dc_mi || f == Formulation::soc_mi || f == Formulation::ac_mi;
}

/// Semantic role of a column.
enum class Role {
  bus_angle,      // theta_{i,p,k}
  bus_w,          // W_{i,p,k} = |U|^2
  bus_vm,         // |U_{i,p,k}| (AC)
  gen_p,
  gen_q,
  gen_segment,    // PWL cost segment, `extra` = segment index
  branch_flow,    // DC flow
  branch_p_from,
  branch_q_from,
  branch_p_to,
  branch_q_to,
  branch_l,       // series current squared
  stor_p,         // P_{c,p,k}
  stor_q,         // Q_{c,p,k}
  stor_l,         // L_{c,p,k} = |I|^2
  stor_i,         // |I_{c,p,k}| (AC)
  stor_pstor,
  stor_pc,
  stor_pd,
  stor_z,
  stor_qint,
  stor_e,
};

inline const char* role_name(Role r) {
  switch (r) {
    case Role::bus_angle: return "va";
    case Role::bus_w: return "w";
    case Role::bus_vm: return "vm";
    case Role::gen_p: return "pg";
    case Role::gen_q: return "qg";
    case Role::gen_segment: return "pgseg";
    case Role::branch_flow: return "pf";
    case Role::branch_p_from: return "pft";
    case Role::branch_q_from: return "qft";
    case Role::branch_p_to: return "ptf";
    case Role::branch_q_to: return "qtf";
    case Role::branch_l: return "lbr";
    case Role::stor_p: return "ps";
    case Role::stor_q: return "qs";
    case Role::stor_l: return "ls";
    case Role::stor_i: return "is";
    case Role::stor_pstor: return "pstor";
    case Role::stor_pc: return "pc";
    case Role::stor_pd: return "pd";
    case Role::stor_z: return "zc";
    case Role::stor_qint: return "qint";
    case Role::stor_e: return "e";
  }
  return "?";
}

/// (role, entity, conductor, step, extra). Entities index the corresponding
/// Network vector; conductor is the network conductor index (0 when unused).
struct VarKey {
  Role role;
  std::size_t entity = 0;
  std::size_t conductor = 0;
  std::size_t step = 0;
  std::size_t extra = 0;

  auto tie() const { return std::tie(role, entity, conductor, step, extra); }
  bool operator<(const VarKey& o) const { return tie() < o.tie(); }
  bool operator==(const VarKey& o) const { return tie() == o.tie(); }
};

enum class Sense { le, ge, eq };

inline const char* sense_symbol(Sense s) { return s == Sense::le ? "<=" : s == Sense::ge ? ">=" : "="; }

struct Term {
  std::size_t col;
  double coef;

  bool operator==(const Term&) const = default;
};

struct Row {
  std::string name;
  std::string family;
  std::vector<Term> terms;
  Sense sense = Sense::eq;
  double rhs = 0.0;

  double activity(const std::vector<double>& x) const {
    double a = 0.0;
    for (const auto& t : terms) a += t.coef * x[t.col];
    return a;
  }
  /// Amount by which x violates the row (>= 0).
  double violation(const std::vector<double>& x) const {
    const double a = activity(x);
    switch (sense) {
      case Sense::le: return std::max(0.0, a - rhs);
      case Sense::ge: return std::max(0.0, rhs - a);
      case Sense::eq: return std::abs(a - rhs);
    }
    return 0.0;
  }
};

struct Column {
  std::string name;
  double lb = 0.0;
  double ub = kInf;
  double cost = 0.0;
  bool binary = false;
  std::optional<VarKey> key;
};

/// Affine scalar `scale * x[col] + constant`; col == npos means constant only.
struct ConeTerm {
  std::size_t col = npos;
  double scale = 1.0;
  double constant = 0.0;

  double value(const std::vector<double>& x) const { return (col == npos ? 0.0 : scale * x[col]) + constant; }
  static ConeTerm column(std::size_t c) { return {c, 1.0, 0.0}; }
  static ConeTerm fixed(double v) { return {npos, 0.0, v}; }
};

/// Rotated second-order cone  sum_i x_i^2 <= u * v  with u, v >= 0.
struct ConeConstraint {
  std::string name;
  std::string family;
  std::vector<std::size_t> x;
  ConeTerm u;
  ConeTerm v;

  /// sum x^2 - u v, positive when violated.
  double violation(const std::vector<double>& val) const {
    double s = 0.0;
    for (auto c : x) s += val[c] * val[c];
    return s - u.value(val) * v.value(val);
  }
};

/// Nonlinear relations of the AC storage model, kept for export and residual
/// evaluation. Column and parameter layout per kind:
///   complex_balance:  cols = [P_p..., Q_p..., I_p..., Pstor, Qint], params = [R_p..., X_p..., Re Sext, Im Sext]
///                     sum P + Pstor - sum R I^2 = Re Sext ; sum Q - Qint - sum X I^2 = Im Sext
///   power_current_voltage: cols = [P, Q, U, I]   P^2 + Q^2 = U^2 I^2
///   current_limit:    cols = [I], params = [limit]   I <= limit
///   complementarity:  cols = [Pc, Pd]   Pc * Pd = 0
struct NonlinearConstraint {
  enum class Kind { complex_balance, power_current_voltage, current_limit, complementarity };
  Kind kind;
  std::string name;
  std::vector<std::size_t> cols;
  std::vector<double> params;
};

inline const char* kind_name(NonlinearConstraint::Kind k) {
  switch (k) {
    case NonlinearConstraint::Kind::complex_balance: return "complex_balance";
    case NonlinearConstraint::Kind::power_current_voltage: return "power_current_voltage";
    case NonlinearConstraint::Kind::current_limit: return "current_limit";
    case NonlinearConstraint::Kind::complementarity: return "complementarity";
  }
  return "?";
}

struct ProblemInstance {
  Formulation formulation = Formulation::dc_mi;
  std::vector<Column> columns;
  std::vector<Row> rows;
  std::vector<ConeConstraint> cones;
  std::vector<NonlinearConstraint> nonlinear;
  double objective_constant = 0.0;
  double pwl_error_bound = 0.0;  // $ over the horizon
  std::map<VarKey, std::size_t> index;

  std::size_t add_column(std::string name, double lb, double ub, double cost = 0.0, bool binary = false,
                         std::optional<VarKey> key = std::nullopt) {
    const std::size_t c = columns.size();
    if (key) {
      if (index.count(*key)) throw Error("duplicate column key for '" + name + "'");
      index[*key] = c;
    }
    columns.push_back({std::move(name), lb, ub, cost, binary, key});
    return c;
  }

  std::size_t add_row(std::string name, std::string family, std::vector<Term> terms, Sense sense, double rhs) {
    rows.push_back({std::move(name), std::move(family), std::move(terms), sense, rhs});
    return rows.size() - 1;
  }

  std::optional<std::size_t> find(const VarKey& key) const {
    auto it = index.find(key);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }

  std::size_t col(const VarKey& key) const {
    auto it = index.find(key);
    if (it == index.end())
      throw Error(std::string("no column for role ") + role_name(key.role) + " entity " + std::to_string(key.entity) +
                  " step " + std::to_string(key.step));
    return it->second;
  }

  std::vector<std::size_t> binaries() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j].binary) out.push_back(j);
    return out;
  }

  std::size_t count_rows(const std::string& family) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](const Row& r) { return r.family == family; }));
  }

  std::size_t count_cones(const std::string& family) const {
    return static_cast<std::size_t>(
        std::count_if(cones.begin(), cones.end(), [&](const ConeConstraint& c) { return c.family == family; }));
  }

  double objective(const std::vector<double>& x) const {
    double v = objective_constant;
    for (std::size_t j = 0; j < columns.size(); ++j) v += columns[j].cost * x[j];
    return v;
  }

  bool is_linear() const { return cones.empty() && nonlinear.empty(); }
};

}  // namespace gridstore
