#pragma once

// Minimal reader for the LP text written by lp_text(). Handles only the
// subset the writer produces: one objective, named rows, explicit bounds,
// a Binary section. Row families and variable keys are not part of the
// format and come back empty; columns appear in first-use order.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gridstore/problem.hpp"

namespace gridstore::testing {

inline double lp_number(const std::string& tok) {
  if (tok == "+inf" || tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  std::size_t used = 0;
  double v = std::stod(tok, &used);
  if (used != tok.size()) throw ParseError("lp: bad number '" + tok + "'");
  return v;
}

inline ProblemInstance read_lp(const std::string& text) {
  enum class Section { none, objective, constraints, bounds, binary, end };
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<std::string>> statements[5];
  Section sec = Section::none;
  std::vector<std::string> current;
  auto flush = [&] {
    if (!current.empty()) statements[static_cast<int>(sec)].push_back(current);
    current.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '\\') continue;
    if (line == "Minimize") { flush(); sec = Section::objective; continue; }
    if (line == "Subject To") { flush(); sec = Section::constraints; continue; }
    if (line == "Bounds") { flush(); sec = Section::bounds; continue; }
    if (line == "Binary") { flush(); sec = Section::binary; continue; }
    if (line == "End") { flush(); sec = Section::end; continue; }
    // continuation lines start with more than one space
    const bool continuation = line.rfind("   ", 0) == 0;
    if (!continuation) flush();
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) current.push_back(tok);
  }
  flush();

  ProblemInstance pi;
  std::map<std::string, std::size_t> cols;
  auto col = [&](const std::string& name) {
    auto it = cols.find(name);
    if (it != cols.end()) return it->second;
    const auto j = pi.add_column(name, 0.0, kInf, 0.0, false);
    cols.emplace(name, j);
    return j;
  };
  // terms "+ c x - c y ..." from position i up to a sense token or the end;
  // a trailing signed number without a variable is a constant
  auto terms = [&](const std::vector<std::string>& s, std::size_t& i, double& constant) {
    std::vector<Term> out;
    while (i < s.size() && s[i] != "<=" && s[i] != ">=" && s[i] != "=") {
      const double sign = s[i] == "-" ? -1.0 : 1.0;
      if (s[i] != "+" && s[i] != "-") throw ParseError("lp: expected sign, got '" + s[i] + "'");
      const double c = lp_number(s.at(i + 1));
      if (i + 2 >= s.size() || s[i + 2] == "+" || s[i + 2] == "-" || s[i + 2] == "<=" || s[i + 2] == ">=" ||
          s[i + 2] == "=") {
        constant += sign * c;
        i += 2;
        continue;
      }
      out.push_back({col(s[i + 2]), sign * c});
      i += 3;
    }
    return out;
  };
  for (const auto& s : statements[static_cast<int>(Section::constraints)]) {
    std::string name = s.at(0);
    if (name.back() != ':') throw ParseError("lp: unnamed row");
    name.pop_back();
    std::size_t i = 1;
    double constant = 0.0;
    std::vector<Term> t;
    if (s.at(1) == "0") {
      col(s.at(2));
      i = 3;
    } else {
      t = terms(s, i, constant);
    }
    const auto& op = s.at(i);
    const Sense sense = op == "<=" ? Sense::le : op == ">=" ? Sense::ge : Sense::eq;
    pi.add_row(name, "", std::move(t), sense, lp_number(s.at(i + 1)) - constant);
  }
  for (const auto& s : statements[static_cast<int>(Section::objective)]) {
    std::size_t i = 1;
    if (s.size() > 1 && s[1] == "0") {
      col(s.at(2));
      i = 3;
    }
    double constant = 0.0;
    for (const auto& t : terms(s, i, constant)) pi.columns[t.col].cost += t.coef;
    pi.objective_constant = constant;
  }
  for (const auto& s : statements[static_cast<int>(Section::bounds)]) {
    if (s.size() == 2 && s[1] == "free") {
      auto& c = pi.columns[col(s[0])];
      c.lb = -kInf;
      c.ub = kInf;
    } else if (s.size() == 3 && s[1] == "=") {
      auto& c = pi.columns[col(s[0])];
      c.lb = c.ub = lp_number(s[2]);
    } else if (s.size() == 5) {
      auto& c = pi.columns[col(s[2])];
      c.lb = lp_number(s[0]);
      c.ub = lp_number(s[4]);
    } else {
      throw ParseError("lp: unsupported bound statement");
    }
  }
  for (const auto& s : statements[static_cast<int>(Section::binary)])
    for (const auto& name : s) {
      auto& c = pi.columns[col(name)];
      if (!c.binary && c.lb == 0.0 && c.ub == kInf) c.ub = 1.0;
      c.binary = true;
    }
  return pi;
}

}  // namespace gridstore::testing
