#pragma once

// Supporting-hyperplane cuts for rotated second-order cones.
//
// sum x_i^2 <= u v with u, v >= 0 is the Lorentz cone
//   || (2x, u - v) || <= u + v.
// The gradient of the left side at a point p gives the cut
//   (sum 4 x^_i x_i + (u^ - v^)(u - v)) / N <= u + v,   N = || (2x^, u^ - v^) ||,
// which holds for every cone point by Cauchy-Schwarz.

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "gridstore/problem.hpp"
#include "gridstore/simplex.hpp"

namespace gridstore {

/// terms . x <= rhs
struct LinearCut {
  std::vector<Term> terms;
  double rhs = 0.0;

  double activity(const std::vector<double>& x) const {
    double a = 0.0;
    for (const auto& t : terms) a += t.coef * x[t.col];
    return a;
  }
  double violation(const std::vector<double>& x) const { return activity(x) - rhs; }
};

/// Tangent cut of `cone` at x; nullopt at the apex where no direction exists.
inline std::optional<LinearCut> tangent_cut(const ConeConstraint& cone, const std::vector<double>& x) {
  const double uh = cone.u.value(x), vh = cone.v.value(x);
  double n2 = (uh - vh) * (uh - vh);
  for (auto c : cone.x) n2 += 4.0 * x[c] * x[c];
  const double n = std::sqrt(n2);
  if (!(n > 0.0) || !std::isfinite(n)) return std::nullopt;
  const double a = (uh - vh) / n;
  std::map<std::size_t, double> coef;
  double rhs = 0.0;
  for (auto c : cone.x) coef[c] += 4.0 * x[c] / n;
  // (a - 1) u - (a + 1) v with u, v affine in one column each.
  auto add_affine = [&](const ConeTerm& t, double k) {
    if (t.col != npos) coef[t.col] += k * t.scale;
    rhs -= k * t.constant;
  };
  add_affine(cone.u, a - 1.0);
  add_affine(cone.v, -(a + 1.0));
  LinearCut cut;
  cut.rhs = rhs;
  for (const auto& [c, v] : coef)
    if (v != 0.0) cut.terms.push_back({c, v});
  return cut;
}

/// Appends cuts as rows (-inf, rhs] to lp.
inline void append_cuts(LinearProgram& lp, const std::vector<LinearCut>& cuts) {
  if (cuts.empty()) return;
  std::vector<std::vector<std::pair<std::size_t, double>>> extra(lp.ncols);
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    for (const auto& t : cuts[i].terms) extra[t.col].push_back({lp.nrows + i, t.coef});
    lp.row_lb.push_back(-kInf);
    lp.row_ub.push_back(cuts[i].rhs);
  }
  std::vector<std::size_t> start(lp.ncols + 1, 0), index;
  std::vector<double> value;
  index.reserve(lp.row_index.size());
  value.reserve(lp.value.size());
  for (std::size_t j = 0; j < lp.ncols; ++j) {
    for (std::size_t p = lp.col_start[j]; p < lp.col_start[j + 1]; ++p) {
      index.push_back(lp.row_index[p]);
      value.push_back(lp.value[p]);
    }
    for (const auto& [r, v] : extra[j]) {
      index.push_back(r);
      value.push_back(v);
    }
    start[j + 1] = index.size();
  }
  lp.col_start = std::move(start);
  lp.row_index = std::move(index);
  lp.value = std::move(value);
  lp.nrows += cuts.size();
}

/// Largest cone violation sum x^2 - u v over all cones, and its index.
inline std::pair<double, std::size_t> max_cone_violation(const std::vector<ConeConstraint>& cones,
                                                         const std::vector<double>& x) {
  double worst = -kInf;
  std::size_t at = npos;
  for (std::size_t i = 0; i < cones.size(); ++i) {
    const double v = cones[i].violation(x);
    if (v > worst) {
      worst = v;
      at = i;
    }
  }
  return {worst, at};
}

/// ProblemInstance with its cones replaced by the given cuts (family "oa_cut"),
/// which makes it exportable as a plain (MI)LP.
inline ProblemInstance oa_snapshot(const ProblemInstance& pi, const std::vector<LinearCut>& cuts) {
  ProblemInstance out = pi;
  out.cones.clear();
  for (std::size_t i = 0; i < cuts.size(); ++i)
    out.add_row("oa_cut_" + std::to_string(i), "oa_cut", cuts[i].terms, Sense::le, cuts[i].rhs);
  return out;
}

}  // namespace gridstore
