#pragma once

// Bounded revised simplex (dual and primal).
//
//   min c'x  s.t.  row_lb <= A x <= row_ub,  col_lb <= x <= col_ub
//
// Each row gets a logical variable s_i with A_i x - s_i = 0 and bounds
// [row_lb_i, row_ub_i], so the basis always has exactly one variable per
// row. The basis inverse is a sparse LU with product-form updates
// (sparse_lu.hpp).
//
// Primal: composite phase 1 (sum of basic bound violations), Dantzig
// pricing with a Bland fallback while the objective stalls, Harris two-pass
// ratio test with bound flips, random bound perturbation against
// degeneracy.
//
// Dual: dual steepest-edge row choice, bound-flipping ratio test with
// Harris tolerances. Columns that cannot be made dual feasible by a bound
// flip get a temporary box; the primal simplex finishes from the dual
// optimal basis once the box is removed. Warm starts after bound changes
// or appended rows keep dual feasibility, which is what branch-and-bound
// and cutting planes need.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "gridstore/problem.hpp"
#include "gridstore/sparse_lu.hpp"

namespace gridstore {

/// Linear program in column-compressed form.
struct LinearProgram {
  std::size_t ncols = 0;
  std::size_t nrows = 0;
  std::vector<double> col_lb, col_ub, cost;
  std::vector<double> row_lb, row_ub;
  std::vector<std::size_t> col_start;  // size ncols + 1
  std::vector<std::size_t> row_index;
  std::vector<double> value;
  double objective_constant = 0.0;

  double objective(const std::vector<double>& x) const {
    double v = objective_constant;
    for (std::size_t j = 0; j < ncols; ++j) v += cost[j] * x[j];
    return v;
  }

  std::vector<double> row_activity(const std::vector<double>& x) const {
    std::vector<double> a(nrows, 0.0);
    for (std::size_t j = 0; j < ncols; ++j)
      for (std::size_t p = col_start[j]; p < col_start[j + 1]; ++p) a[row_index[p]] += value[p] * x[j];
    return a;
  }

  /// Largest bound or row violation of x.
  double max_violation(const std::vector<double>& x) const {
    double v = 0.0;
    for (std::size_t j = 0; j < ncols; ++j) v = std::max({v, col_lb[j] - x[j], x[j] - col_ub[j]});
    const auto a = row_activity(x);
    for (std::size_t i = 0; i < nrows; ++i) v = std::max({v, row_lb[i] - a[i], a[i] - row_ub[i]});
    return v;
  }
};

/// Builds a LinearProgram from rows given as term lists.
class LinearProgramBuilder {
public:
  std::size_t add_column(double lb, double ub, double cost) {
    lb_.push_back(lb);
    ub_.push_back(ub);
    cost_.push_back(cost);
    return lb_.size() - 1;
  }

  std::size_t add_row(const std::vector<Term>& terms, double lo, double hi) {
    const std::size_t i = row_lb_.size();
    for (const auto& t : terms)
      if (t.coef != 0.0) trip_.push_back({t.col, i, t.coef});
    row_lb_.push_back(lo);
    row_ub_.push_back(hi);
    return i;
  }

  LinearProgram build(double objective_constant = 0.0) const {
    LinearProgram lp;
    lp.ncols = lb_.size();
    lp.nrows = row_lb_.size();
    lp.col_lb = lb_;
    lp.col_ub = ub_;
    lp.cost = cost_;
    lp.row_lb = row_lb_;
    lp.row_ub = row_ub_;
    lp.objective_constant = objective_constant;
    auto sorted = trip_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Trip& a, const Trip& b) {
      return a.col != b.col ? a.col < b.col : a.row < b.row;
    });
    lp.col_start.assign(lp.ncols + 1, 0);
    std::size_t prev_col = npos, prev_row = npos;
    for (const auto& t : sorted) {
      if (t.col >= lp.ncols) throw Error("LinearProgramBuilder: term references unknown column");
      if (t.col == prev_col && t.row == prev_row) {
        lp.value.back() += t.val;  // duplicate (row, col) entries are summed
        continue;
      }
      lp.row_index.push_back(t.row);
      lp.value.push_back(t.val);
      ++lp.col_start[t.col + 1];
      prev_col = t.col;
      prev_row = t.row;
    }
    for (std::size_t j = 0; j < lp.ncols; ++j) lp.col_start[j + 1] += lp.col_start[j];
    return lp;
  }

private:
  struct Trip {
    std::size_t col, row;
    double val;
  };
  std::vector<double> lb_, ub_, cost_, row_lb_, row_ub_;
  std::vector<Trip> trip_;
};

/// Linear relaxation of a ProblemInstance (binaries become [lb, ub] continuous,
/// cones and nonlinear relations are dropped).
inline LinearProgram to_linear_program(const ProblemInstance& pi) {
  LinearProgramBuilder b;
  for (const auto& c : pi.columns) b.add_column(c.lb, c.ub, c.cost);
  for (const auto& r : pi.rows) {
    const double lo = r.sense == Sense::le ? -kInf : r.rhs;
    const double hi = r.sense == Sense::ge ? kInf : r.rhs;
    b.add_row(r.terms, lo, hi);
  }
  return b.build(pi.objective_constant);
}

enum class VarStatus : std::uint8_t { basic, at_lower, at_upper, at_zero };

/// Simplex basis over ncols structural then nrows logical variables.
struct Basis {
  std::vector<VarStatus> status;

  bool empty() const { return status.empty(); }
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit, time_limit, numerical_error };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
    case LpStatus::time_limit: return "time_limit";
    case LpStatus::numerical_error: return "numerical_error";
  }
  return "?";
}

enum class LpAlgorithm { dual, primal };

struct LpOptions {
  LpAlgorithm algorithm = LpAlgorithm::dual;
  double feas_tol = 1e-7;   // primal, on scaled values
  double dual_tol = 1e-7;   // reduced cost, on scaled costs normalized to max 1
  double pivot_tol = 1e-9;
  std::size_t max_iterations = 0;  // 0 = automatic
  double time_limit = kInf;        // seconds
  std::size_t refactor_every = 100;
  std::size_t stall_iterations = 1000;
  bool scale = true;
  // Random relative expansion of bounds during primal iterations, removed
  // before the final optimality check.
  double perturbation = 1e-6;
  std::uint64_t seed = 0;
};

struct LpResult {
  LpStatus status = LpStatus::numerical_error;
  double objective = kInf;
  std::vector<double> x;
  std::vector<double> row_activity;
  Basis basis;
  std::size_t iterations = 0;
  std::size_t dual_iterations = 0;
  std::size_t primal_iterations = 0;
  std::size_t phase1_iterations = 0;
  std::size_t bland_iterations = 0;
  std::size_t bound_flips = 0;
  std::size_t refactorizations = 0;
  std::size_t singular_repairs = 0;
  std::string message;
};

namespace simplex_detail {

using lu::WorkVector;

class Simplex {
public:
  Simplex(const LinearProgram& lp, const LpOptions& opt) : lp_(lp), opt_(opt) {
    m_ = static_cast<int>(lp.nrows);
    n_ = static_cast<int>(lp.ncols);
    nt_ = n_ + m_;
    scale_problem();
    work_col_.resize(m_);
    work_row_.resize(m_);
    work_tau_.resize(m_);
    work_flip_.resize(m_);
    prow_.resize(nt_);
  }

  LpResult run(const Basis* warm) {
    start_ = std::chrono::steady_clock::now();
    max_iter_ = opt_.max_iterations ? opt_.max_iterations : 50 * static_cast<std::size_t>(nt_) + 10000;
    if (!init_basis(warm)) init_slack_basis();
    refactor();
    compute_primal();
    LpResult res;
    if (opt_.algorithm == LpAlgorithm::dual) {
      const auto st = dual();
      if (st == LpStatus::iteration_limit || st == LpStatus::time_limit || st == LpStatus::numerical_error)
        return finish(res, st);
      if (st == LpStatus::infeasible && !boxed_) return finish(res, st);
      remove_boxes();
      remove_shifts();
    }
    return finish(res, primal(opt_.algorithm == LpAlgorithm::primal && opt_.perturbation > 0.0));
  }

private:
  const LinearProgram& lp_;
  LpOptions opt_;
  int m_ = 0, n_ = 0, nt_ = 0;

  // Scaled data. Variables 0..n-1 structural, n..n+m-1 logical (column -e_i).
  std::vector<double> colscale_, rowscale_;
  std::vector<int> a_start_, a_row_;
  std::vector<double> a_val_;
  std::vector<int> r_start_, r_col_;
  std::vector<double> r_val_;
  std::vector<double> lb_, ub_, cost_;

  std::vector<double> x_, d_;
  std::vector<VarStatus> status_;
  std::vector<int> head_, pos_;
  lu::BasisFactor factor_;
  WorkVector work_col_, work_row_, work_tau_, work_flip_, prow_;
  std::vector<double> dse_;

  std::size_t iter_ = 0, max_iter_ = 0, refactors_ = 0, repairs_ = 0;
  std::size_t dual_iter_ = 0, primal_iter_ = 0, phase1_iter_ = 0, bland_iter_ = 0, flips_ = 0;
  std::chrono::steady_clock::time_point start_;

  // Temporary boxes of the dual phase: original bounds of boxed columns.
  bool boxed_ = false;
  std::vector<std::pair<int, std::pair<double, double>>> boxes_;
  // Cost shifts of the dual phase: original costs.
  std::vector<std::pair<int, double>> shifts_;

  // ---------------------------------------------------------------- setup

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  bool out_of_time() const { return (iter_ & 31) == 0 && elapsed() > opt_.time_limit; }

  void scale_problem() {
    colscale_.assign(static_cast<std::size_t>(n_), 1.0);
    rowscale_.assign(static_cast<std::size_t>(m_), 1.0);
    a_start_.assign(lp_.col_start.begin(), lp_.col_start.end());
    a_row_.assign(lp_.row_index.begin(), lp_.row_index.end());
    a_val_ = lp_.value;
    if (opt_.scale) {
      std::vector<double> rmax(static_cast<std::size_t>(m_), 0.0);
      for (std::size_t p = 0; p < a_val_.size(); ++p)
        rmax[static_cast<std::size_t>(a_row_[p])] = std::max(rmax[static_cast<std::size_t>(a_row_[p])], std::abs(a_val_[p]));
      for (int i = 0; i < m_; ++i) rowscale_[static_cast<std::size_t>(i)] = rmax[static_cast<std::size_t>(i)] > 0.0 ? 1.0 / rmax[static_cast<std::size_t>(i)] : 1.0;
      for (int j = 0; j < n_; ++j) {
        double cmax = 0.0;
        for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p)
          cmax = std::max(cmax, std::abs(a_val_[static_cast<std::size_t>(p)] * rowscale_[static_cast<std::size_t>(a_row_[static_cast<std::size_t>(p)])]));
        colscale_[static_cast<std::size_t>(j)] = cmax > 0.0 ? 1.0 / cmax : 1.0;
      }
      for (int j = 0; j < n_; ++j)
        for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p)
          a_val_[static_cast<std::size_t>(p)] *= rowscale_[static_cast<std::size_t>(a_row_[static_cast<std::size_t>(p)])] * colscale_[static_cast<std::size_t>(j)];
    }
    // Row-wise copy.
    r_start_.assign(static_cast<std::size_t>(m_) + 1, 0);
    for (int r : a_row_) ++r_start_[static_cast<std::size_t>(r) + 1];
    for (int i = 0; i < m_; ++i) r_start_[static_cast<std::size_t>(i) + 1] += r_start_[static_cast<std::size_t>(i)];
    r_col_.assign(a_row_.size(), 0);
    r_val_.assign(a_row_.size(), 0.0);
    std::vector<int> fill(r_start_.begin(), r_start_.end() - 1);
    for (int j = 0; j < n_; ++j)
      for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p) {
        const int q = fill[static_cast<std::size_t>(a_row_[static_cast<std::size_t>(p)])]++;
        r_col_[static_cast<std::size_t>(q)] = j;
        r_val_[static_cast<std::size_t>(q)] = a_val_[static_cast<std::size_t>(p)];
      }

    lb_.resize(static_cast<std::size_t>(nt_));
    ub_.resize(static_cast<std::size_t>(nt_));
    cost_.assign(static_cast<std::size_t>(nt_), 0.0);
    double cmax = 0.0;
    for (int j = 0; j < n_; ++j) {
      const auto u = static_cast<std::size_t>(j);
      lb_[u] = lp_.col_lb[u] / colscale_[u];
      ub_[u] = lp_.col_ub[u] / colscale_[u];
      cost_[u] = lp_.cost[u] * colscale_[u];
      cmax = std::max(cmax, std::abs(cost_[u]));
    }
    if (cmax > 0.0)
      for (int j = 0; j < n_; ++j) cost_[static_cast<std::size_t>(j)] /= cmax;
    for (int i = 0; i < m_; ++i) {
      const auto u = static_cast<std::size_t>(i);
      lb_[static_cast<std::size_t>(n_ + i)] = lp_.row_lb[u] * rowscale_[u];
      ub_[static_cast<std::size_t>(n_ + i)] = lp_.row_ub[u] * rowscale_[u];
    }
  }

  double lb(int j) const { return lb_[static_cast<std::size_t>(j)]; }
  double ub(int j) const { return ub_[static_cast<std::size_t>(j)]; }
  double& xv(int j) { return x_[static_cast<std::size_t>(j)]; }
  double& dv(int j) { return d_[static_cast<std::size_t>(j)]; }
  VarStatus& st(int j) { return status_[static_cast<std::size_t>(j)]; }
  int hd(int r) const { return head_[static_cast<std::size_t>(r)]; }

  /// Value of a nonbasic variable for its status, repairing statuses that
  /// point at infinite bounds.
  double nonbasic_value(int j) {
    VarStatus& s = st(j);
    if (lb(j) == ub(j)) {
      s = VarStatus::at_lower;
      return lb(j);
    }
    if (s == VarStatus::at_upper && std::isfinite(ub(j))) return ub(j);
    if (s == VarStatus::at_lower && std::isfinite(lb(j))) return lb(j);
    if (std::isfinite(lb(j))) {
      s = VarStatus::at_lower;
      return lb(j);
    }
    if (std::isfinite(ub(j))) {
      s = VarStatus::at_upper;
      return ub(j);
    }
    s = VarStatus::at_zero;
    return 0.0;
  }

  void init_slack_basis() {
    status_.assign(static_cast<std::size_t>(nt_), VarStatus::at_lower);
    x_.assign(static_cast<std::size_t>(nt_), 0.0);
    head_.resize(static_cast<std::size_t>(m_));
    pos_.assign(static_cast<std::size_t>(nt_), -1);
    for (int j = 0; j < n_; ++j) xv(j) = nonbasic_value(j);
    for (int i = 0; i < m_; ++i) {
      st(n_ + i) = VarStatus::basic;
      head_[static_cast<std::size_t>(i)] = n_ + i;
      pos_[static_cast<std::size_t>(n_ + i)] = i;
    }
  }

  bool init_basis(const Basis* warm) {
    if (!warm || warm->status.size() != static_cast<std::size_t>(nt_)) return false;
    status_ = warm->status;
    x_.assign(static_cast<std::size_t>(nt_), 0.0);
    head_.clear();
    pos_.assign(static_cast<std::size_t>(nt_), -1);
    for (int j = 0; j < nt_; ++j) {
      if (st(j) == VarStatus::basic) {
        pos_[static_cast<std::size_t>(j)] = static_cast<int>(head_.size());
        head_.push_back(j);
      } else {
        xv(j) = nonbasic_value(j);
      }
    }
    return head_.size() == static_cast<std::size_t>(m_);
  }

  // ------------------------------------------------------- linear algebra

  void load_column(int j, WorkVector& v) const {
    v.clear();
    if (j < n_) {
      for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p)
        v.set(a_row_[static_cast<std::size_t>(p)], a_val_[static_cast<std::size_t>(p)]);
    } else {
      v.set(j - n_, -1.0);
    }
  }

  /// Refactors B; dependent columns are swapped for logicals.
  void refactor() {
    ++refactors_;
    std::vector<int> cs(static_cast<std::size_t>(m_) + 1, 0), ri;
    std::vector<double> vv;
    for (int r = 0; r < m_; ++r) {
      const int j = hd(r);
      if (j < n_) {
        for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p) {
          ri.push_back(a_row_[static_cast<std::size_t>(p)]);
          vv.push_back(a_val_[static_cast<std::size_t>(p)]);
        }
      } else {
        ri.push_back(j - n_);
        vv.push_back(-1.0);
      }
      cs[static_cast<std::size_t>(r) + 1] = static_cast<int>(ri.size());
    }
    const auto out = factor_.factor(m_, cs, ri, vv);
    for (const auto& [r, row] : out.replaced) {
      const int old = hd(r);
      const int nw = n_ + row;
      st(old) = VarStatus::at_lower;
      pos_[static_cast<std::size_t>(old)] = -1;
      xv(old) = nonbasic_value(old);
      head_[static_cast<std::size_t>(r)] = nw;
      st(nw) = VarStatus::basic;
      pos_[static_cast<std::size_t>(nw)] = r;
      ++repairs_;
    }
    if (!dse_.empty()) std::fill(dse_.begin(), dse_.end(), 1.0);
  }

  bool need_refactor() const {
    return factor_.num_updates() >= opt_.refactor_every ||
           factor_.eta_nonzeros() > 3 * factor_.factor_nonzeros() + static_cast<std::size_t>(10 * m_);
  }

  /// x_B = -B^{-1} N x_N.
  void compute_primal() {
    if (m_ == 0) return;
    WorkVector& rhs = work_col_;
    rhs.clear();
    for (int j = 0; j < nt_; ++j) {
      if (st(j) == VarStatus::basic) continue;
      const double v = xv(j);
      if (v == 0.0) continue;
      if (j < n_) {
        for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p)
          rhs.add(a_row_[static_cast<std::size_t>(p)], -a_val_[static_cast<std::size_t>(p)] * v);
      } else {
        rhs.add(j - n_, v);
      }
    }
    factor_.ftran(rhs);
    for (int r = 0; r < m_; ++r) xv(hd(r)) = rhs[r];
  }

  /// d = c - A'y with y = B^{-T} c_B, for a given cost vector.
  void compute_duals(const std::vector<double>& c) {
    d_.assign(static_cast<std::size_t>(nt_), 0.0);
    if (m_ == 0) {
      for (int j = 0; j < nt_; ++j) dv(j) = c[static_cast<std::size_t>(j)];
      return;
    }
    WorkVector& y = work_row_;
    y.clear();
    for (int r = 0; r < m_; ++r) {
      const double cb = c[static_cast<std::size_t>(hd(r))];
      if (cb != 0.0) y.set(r, cb);
    }
    factor_.btran(y);
    for (int j = 0; j < n_; ++j) {
      if (st(j) == VarStatus::basic) continue;
      double dj = c[static_cast<std::size_t>(j)];
      for (int p = a_start_[static_cast<std::size_t>(j)]; p < a_start_[static_cast<std::size_t>(j) + 1]; ++p)
        dj -= y[a_row_[static_cast<std::size_t>(p)]] * a_val_[static_cast<std::size_t>(p)];
      dv(j) = dj;
    }
    for (int i = 0; i < m_; ++i)
      if (st(n_ + i) != VarStatus::basic) dv(n_ + i) = c[static_cast<std::size_t>(n_ + i)] + y[i];
  }

  /// Pivot row alpha_j = rho' a_j over nonbasic j, into prow_.
  void pivot_row(const WorkVector& rho) {
    prow_.clear();
    for (int i : rho.idx) {
      const double ri = rho[i];
      if (ri == 0.0) continue;
      for (int p = r_start_[static_cast<std::size_t>(i)]; p < r_start_[static_cast<std::size_t>(i) + 1]; ++p) {
        const int j = r_col_[static_cast<std::size_t>(p)];
        if (st(j) != VarStatus::basic) prow_.add(j, ri * r_val_[static_cast<std::size_t>(p)]);
      }
      if (st(n_ + i) != VarStatus::basic) prow_.add(n_ + i, -ri);
    }
  }

  /// Basis change: q enters at position r (alpha = B^{-1} a_q); the leaving
  /// variable takes `leave_status`.
  void change_basis(int q, int r, const WorkVector& alpha, VarStatus leave_status) {
    const int p = hd(r);
    st(p) = leave_status;
    pos_[static_cast<std::size_t>(p)] = -1;
    factor_.update(r, alpha);
    head_[static_cast<std::size_t>(r)] = q;
    st(q) = VarStatus::basic;
    pos_[static_cast<std::size_t>(q)] = r;
  }

  // ----------------------------------------------------------- dual simplex

  static constexpr double kShiftLimit = 1e-3;
  static constexpr double kDualPivotTol = 1e-7;

  /// Flips boxed nonbasics to the bound matching their reduced cost. The
  /// remaining dual infeasible columns get a cost shift when the infeasibility
  /// is tiny and a temporary box otherwise. Returns true if x_N changed.
  bool make_dual_feasible() {
    bool moved = false;
    for (int j = 0; j < nt_; ++j) {
      if (st(j) == VarStatus::basic || lb(j) == ub(j)) continue;
      const double dj = dv(j);
      const bool lo = std::isfinite(lb(j)), hi = std::isfinite(ub(j));
      VarStatus want = st(j);
      if (dj > opt_.dual_tol) want = VarStatus::at_lower;
      else if (dj < -opt_.dual_tol) want = VarStatus::at_upper;
      else if (st(j) == VarStatus::at_zero && !lo && !hi) continue;
      if (want == VarStatus::at_zero) want = lo ? VarStatus::at_lower : VarStatus::at_upper;
      const bool ok = (want == VarStatus::at_lower && lo) || (want == VarStatus::at_upper && hi);
      if (!ok && std::abs(dj) <= kShiftLimit) {
        // Small infeasibility: shift the cost instead of boxing.
        shifts_.push_back({j, cost_[static_cast<std::size_t>(j)]});
        cost_[static_cast<std::size_t>(j)] -= dj;
        dv(j) = 0.0;
        continue;
      }
      if (!ok) {
        const double big = 1e6 * std::max({1.0, lo ? std::abs(lb(j)) : 0.0, hi ? std::abs(ub(j)) : 0.0});
        boxes_.push_back({j, {lb(j), ub(j)}});
        boxed_ = true;
        if (!lo) lb_[static_cast<std::size_t>(j)] = (hi ? ub(j) : 0.0) - big;
        if (!hi) ub_[static_cast<std::size_t>(j)] = (lo ? lb(j) : 0.0) + big;
      }
      const double nv = want == VarStatus::at_lower ? lb(j) : ub(j);
      if (st(j) != want || xv(j) != nv) moved = true;
      st(j) = want;
      xv(j) = nv;
    }
    return moved;
  }

  void remove_boxes() {
    if (!boxed_) return;
    for (auto it = boxes_.rbegin(); it != boxes_.rend(); ++it) {
      lb_[static_cast<std::size_t>(it->first)] = it->second.first;
      ub_[static_cast<std::size_t>(it->first)] = it->second.second;
    }
    for (const auto& b : boxes_) {
      const int j = b.first;
      if (st(j) != VarStatus::basic) xv(j) = nonbasic_value(j);
    }
    boxes_.clear();
    boxed_ = false;
    compute_primal();
  }

  void remove_shifts() {
    for (auto it = shifts_.rbegin(); it != shifts_.rend(); ++it) cost_[static_cast<std::size_t>(it->first)] = it->second;
    shifts_.clear();
  }

  void dual_refresh() {
    refactor();
    compute_primal();
    compute_duals(cost_);
    if (make_dual_feasible()) compute_primal();
  }

  LpStatus dual() {
    dse_.assign(static_cast<std::size_t>(m_), 1.0);
    compute_duals(cost_);
    if (make_dual_feasible()) compute_primal();
    std::size_t retries = 0;
    struct Cand {
      int j;
      double ratio, relaxed, abs_alpha;
    };
    std::vector<Cand> cands;
    std::vector<int> flips;

    for (;;) {
      if (iter_ >= max_iter_) return LpStatus::iteration_limit;
      if (out_of_time()) return LpStatus::time_limit;
      if (need_refactor()) dual_refresh();

      // Leaving row: dual steepest edge.
      int r = -1;
      double best = 0.0;
      for (int i = 0; i < m_; ++i) {
        const int p = hd(i);
        const double v = xv(p);
        double inf = 0.0;
        if (v < lb(p) - opt_.feas_tol) inf = lb(p) - v;
        else if (v > ub(p) + opt_.feas_tol) inf = v - ub(p);
        else continue;
        const double score = inf * inf / dse_[static_cast<std::size_t>(i)];
        if (score > best) {
          best = score;
          r = i;
        }
      }
      if (r < 0) {
        if (factor_.num_updates() > 0 && retries < 2) {
          // Confirm on a fresh factorization.
          ++retries;
          dual_refresh();
          continue;
        }
        return LpStatus::optimal;
      }
      const int p = hd(r);
      const bool to_upper = xv(p) > ub(p);
      const double sigma = to_upper ? 1.0 : -1.0;
      const double bound = to_upper ? ub(p) : lb(p);

      WorkVector& rho = work_row_;
      rho.clear();
      rho.set(r, 1.0);
      factor_.btran(rho);
      pivot_row(rho);

      // Bound-flipping ratio test.
      cands.clear();
      for (int j : prow_.idx) {
        const double a = sigma * prow_[j];
        if (std::abs(a) < kDualPivotTol || lb(j) == ub(j)) continue;
        double sgn;
        switch (st(j)) {
          case VarStatus::at_lower:
            if (a <= 0.0) continue;
            sgn = 1.0;
            break;
          case VarStatus::at_upper:
            if (a >= 0.0) continue;
            sgn = -1.0;
            break;
          case VarStatus::at_zero: sgn = a > 0.0 ? 1.0 : -1.0; break;
          default: continue;
        }
        const double aa = std::abs(a);
        const double dj = sgn * dv(j);
        cands.push_back({j, std::max(dj, 0.0) / aa, (dj + opt_.dual_tol) / aa, aa});
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        return a.ratio != b.ratio ? a.ratio < b.ratio : a.j < b.j;
      });
      double slope = std::abs(xv(p) - bound);
      flips.clear();
      int q = -1;
      double t = 0.0;
      std::size_t k = 0;
      while (k < cands.size()) {
        double tmax = kInf;
        for (std::size_t i = k; i < cands.size() && cands[i].ratio <= tmax; ++i) tmax = std::min(tmax, cands[i].relaxed);
        std::size_t end = k, pick = k;
        double reduction = 0.0;
        for (; end < cands.size() && cands[end].ratio <= tmax; ++end) {
          const auto& c = cands[end];
          if (c.abs_alpha > cands[pick].abs_alpha) pick = end;
          const double range = ub(c.j) - lb(c.j);
          reduction += std::isfinite(range) ? c.abs_alpha * range : kInf;
        }
        if (end == k) {
          end = k + 1;
          pick = k;
          const double range = ub(cands[k].j) - lb(cands[k].j);
          reduction = std::isfinite(range) ? cands[k].abs_alpha * range : kInf;
        }
        if (slope - reduction > 0.0) {
          for (std::size_t i = k; i < end; ++i) flips.push_back(cands[i].j);
          slope -= reduction;
          k = end;
          continue;
        }
        q = cands[pick].j;
        t = cands[pick].ratio;
        break;
      }
      if (q < 0) return LpStatus::infeasible;

      // Entering column and consistency check against the pivot row.
      WorkVector& alpha = work_col_;
      load_column(q, alpha);
      factor_.ftran(alpha);
      const double arq = alpha[r];
      const double arq_row = prow_[q];
      if (std::abs(arq - arq_row) > 1e-7 * (1.0 + std::abs(arq)) || std::abs(arq) < opt_.pivot_tol) {
        if (factor_.num_updates() == 0) return LpStatus::numerical_error;
        dual_refresh();
        continue;
      }

      // DSE: tau = B^{-1} rho.
      double wr = 0.0;
      for (int i : rho.idx) wr += rho[i] * rho[i];
      WorkVector& tau = work_tau_;
      tau.clear();
      for (int i : rho.idx)
        if (rho[i] != 0.0) tau.set(i, rho[i]);
      factor_.ftran(tau);

      // Exact dual step. A Harris choice may have a slightly wrong-signed d_q;
      // its cost is shifted to make d_q zero so the update stays consistent.
      t = dv(q) / (sigma * arq_row);
      if (t < 0.0) {
        shifts_.push_back({q, cost_[static_cast<std::size_t>(q)]});
        cost_[static_cast<std::size_t>(q)] -= dv(q);
        dv(q) = 0.0;
        t = 0.0;
      }

      // Dual update.
      const double s = sigma * t;
      for (int j : prow_.idx) {
        if (st(j) == VarStatus::basic) continue;
        dv(j) -= s * prow_[j];
      }
      dv(p) = -s;
      dv(q) = 0.0;

      // Bound flips and their primal effect.
      if (!flips.empty()) {
        WorkVector& f = work_flip_;
        f.clear();
        for (int j : flips) {
          const double delta = st(j) == VarStatus::at_lower ? ub(j) - lb(j) : lb(j) - ub(j);
          st(j) = st(j) == VarStatus::at_lower ? VarStatus::at_upper : VarStatus::at_lower;
          xv(j) = st(j) == VarStatus::at_lower ? lb(j) : ub(j);
          if (j < n_) {
            for (int pp = a_start_[static_cast<std::size_t>(j)]; pp < a_start_[static_cast<std::size_t>(j) + 1]; ++pp)
              f.add(a_row_[static_cast<std::size_t>(pp)], a_val_[static_cast<std::size_t>(pp)] * delta);
          } else {
            f.add(j - n_, -delta);
          }
        }
        factor_.ftran(f);
        for (int i : f.idx) xv(hd(i)) -= f[i];
        flips_ += flips.size();
      }

      // Primal step.
      const double theta = (xv(p) - bound) / arq;
      if (theta != 0.0)
        for (int i : alpha.idx) xv(hd(i)) -= theta * alpha[i];
      xv(q) += theta;

      // DSE weight update.
      for (int i : alpha.idx) {
        if (i == r) continue;
        const double ai = alpha[i];
        if (ai == 0.0) continue;
        const double kap = ai / arq;
        double& w = dse_[static_cast<std::size_t>(i)];
        w = std::max(w - 2.0 * kap * tau[i] + kap * kap * wr, 1e-8);
      }
      dse_[static_cast<std::size_t>(r)] = std::max(wr / (arq * arq), 1e-8);

      change_basis(q, r, alpha, to_upper ? VarStatus::at_upper : VarStatus::at_lower);
      xv(p) = bound;
      ++iter_;
      ++dual_iter_;
    }
  }

  // --------------------------------------------------------- primal simplex

  /// Primal simplex from the current basis. After a dual solve it only has to
  /// repair what removing shifts and boxes broke, so no perturbation then.
  LpStatus primal(bool perturb) {
    if (perturb) perturb_bounds();
    std::size_t stall = 0, verify_rounds = 0, fallbacks = 0;
    // Progress is tracked per phase so that toggling between them on
    // round-off does not hide a stall.
    double progress[2] = {kInf, kInf};
    bool bland = false;
    std::vector<double> c(static_cast<std::size_t>(nt_), 0.0);

    for (;;) {
      if (iter_ >= max_iter_) return LpStatus::iteration_limit;
      if (out_of_time()) return LpStatus::time_limit;
      if (need_refactor()) {
        refactor();
        compute_primal();
      }

      // Phase selection: cost vector of the composite objective.
      double infeas = 0.0;
      bool phase1 = false;
      std::fill(c.begin(), c.end(), 0.0);
      for (int i = 0; i < m_; ++i) {
        const int j = hd(i);
        const double v = xv(j);
        if (v < lb(j) - opt_.feas_tol) {
          c[static_cast<std::size_t>(j)] = -1.0;
          infeas += lb(j) - v;
          phase1 = true;
        } else if (v > ub(j) + opt_.feas_tol) {
          c[static_cast<std::size_t>(j)] = 1.0;
          infeas += v - ub(j);
          phase1 = true;
        }
      }
      if (!phase1) c = cost_;
      double obj = infeas;
      if (!phase1) {
        obj = 0.0;
        for (int j = 0; j < n_; ++j) obj += cost_[static_cast<std::size_t>(j)] * xv(j);
      }
      double& best_obj = progress[phase1 ? 1 : 0];
      if (!std::isfinite(best_obj) || obj < best_obj - 1e-9 * std::max(1.0, std::abs(best_obj))) {
        best_obj = obj;
        stall = 0;
        bland = false;
      } else if (++stall > opt_.stall_iterations) {
        bland = true;
      }

      compute_duals(c);

      // Pricing.
      int q = -1;
      double best = 0.0;
      for (int j = 0; j < nt_; ++j) {
        if (st(j) == VarStatus::basic || lb(j) == ub(j)) continue;
        const double dj = dv(j);
        double score = 0.0;
        switch (st(j)) {
          case VarStatus::at_lower: score = dj < -opt_.dual_tol ? -dj : 0.0; break;
          case VarStatus::at_upper: score = dj > opt_.dual_tol ? dj : 0.0; break;
          case VarStatus::at_zero: score = std::abs(dj) > opt_.dual_tol ? std::abs(dj) : 0.0; break;
          case VarStatus::basic: break;
        }
        if (score <= 0.0) continue;
        if (bland) {
          q = j;
          break;
        }
        if (score > best) {
          best = score;
          q = j;
        }
      }

      if (q < 0 && perturbed_) {
        restore_bounds();
        refactor();
        compute_primal();
        progress[0] = progress[1] = kInf;
        continue;
      }
      if (q < 0) {
        if (factor_.num_updates() > 0 && verify_rounds < 3) {
          ++verify_rounds;
          refactor();
          compute_primal();
          continue;
        }
        return phase1 ? LpStatus::infeasible : LpStatus::optimal;
      }
      verify_rounds = 0;
      if (phase1) ++phase1_iter_;
      if (bland) ++bland_iter_;

      const double dir = dv(q) < 0.0 ? 1.0 : -1.0;
      WorkVector& alpha = work_col_;
      load_column(q, alpha);
      factor_.ftran(alpha);

      // Harris pass 1.
      auto target = [&](int i, double delta, double& t) -> bool {
        const int j = hd(i);
        const double v = xv(j);
        if (delta < 0.0) {
          if (phase1 && v > ub(j) + opt_.feas_tol) t = ub(j);
          else if (phase1 && v < lb(j) - opt_.feas_tol) return false;
          else t = lb(j);
        } else {
          if (phase1 && v < lb(j) - opt_.feas_tol) t = lb(j);
          else if (phase1 && v > ub(j) + opt_.feas_tol) return false;
          else t = ub(j);
        }
        return std::isfinite(t);
      };
      const double range = ub(q) - lb(q);
      double theta_max = kInf;
      for (int i : alpha.idx) {
        const double a = alpha[i];
        if (std::abs(a) < opt_.pivot_tol) continue;
        const double delta = -dir * a;
        double t;
        if (!target(i, delta, t)) continue;
        const double ratio = (t - xv(hd(i))) / delta;
        theta_max = std::min(theta_max, bland ? ratio : ratio + opt_.feas_tol / std::abs(delta));
      }
      // Pass 2.
      int r = -1;
      double r_ratio = 0.0, r_target = 0.0, r_abs = 0.0;
      for (int i : alpha.idx) {
        const double a = alpha[i];
        if (std::abs(a) < opt_.pivot_tol) continue;
        const double delta = -dir * a;
        double t;
        if (!target(i, delta, t)) continue;
        const double ratio = (t - xv(hd(i))) / delta;
        if (ratio > theta_max) continue;
        bool take;
        if (bland) take = r < 0 || ratio < r_ratio || (ratio == r_ratio && hd(i) < hd(r));
        else take = std::abs(a) > r_abs || (std::abs(a) == r_abs && hd(i) < hd(r));
        if (take) {
          r = i;
          r_ratio = ratio;
          r_target = t;
          r_abs = std::abs(a);
        }
      }

      if (std::isfinite(range) && (r < 0 || range <= std::max(r_ratio, 0.0))) {
        apply_primal_step(q, dir * range, alpha);
        st(q) = st(q) == VarStatus::at_upper ? VarStatus::at_lower : VarStatus::at_upper;
        xv(q) = st(q) == VarStatus::at_upper ? ub(q) : lb(q);
        ++iter_;
        ++primal_iter_;
        ++flips_;
        continue;
      }
      if (r < 0) {
        if (phase1) {
          if (++fallbacks > 3) return LpStatus::numerical_error;
          refactor();
          compute_primal();
          continue;
        }
        return LpStatus::unbounded;
      }
      const double theta = std::max(r_ratio, 0.0);
      apply_primal_step(q, dir * theta, alpha);
      const int leave = hd(r);
      const VarStatus ls = r_target == lb(leave) ? VarStatus::at_lower : VarStatus::at_upper;
      change_basis(q, r, alpha, ls);
      xv(leave) = r_target;
      ++iter_;
      ++primal_iter_;
    }
  }

  bool perturbed_ = false;
  std::vector<double> orig_lb_, orig_ub_;

  void perturb_bounds() {
    std::mt19937_64 rng(opt_.seed);
    std::uniform_real_distribution<double> u(0.5, 1.0);
    orig_lb_ = lb_;
    orig_ub_ = ub_;
    for (int j = 0; j < nt_; ++j) {
      if (lb(j) == ub(j)) continue;
      const double a = u(rng), b = u(rng);
      if (std::isfinite(lb(j))) lb_[static_cast<std::size_t>(j)] -= opt_.perturbation * (1.0 + std::abs(lb(j))) * a;
      if (std::isfinite(ub(j))) ub_[static_cast<std::size_t>(j)] += opt_.perturbation * (1.0 + std::abs(ub(j))) * b;
      if (st(j) == VarStatus::at_lower) xv(j) = lb(j);
      else if (st(j) == VarStatus::at_upper) xv(j) = ub(j);
    }
    perturbed_ = true;
    compute_primal();
  }

  void restore_bounds() {
    lb_ = orig_lb_;
    ub_ = orig_ub_;
    for (int j = 0; j < nt_; ++j)
      if (st(j) != VarStatus::basic) xv(j) = nonbasic_value(j);
    perturbed_ = false;
  }

  void apply_primal_step(int q, double step, const WorkVector& alpha) {
    if (step == 0.0) return;
    xv(q) += step;
    for (int i : alpha.idx) {
      const double a = alpha[i];
      if (a != 0.0) xv(hd(i)) -= step * a;
    }
  }

  // ---------------------------------------------------------------- result

  LpResult& finish(LpResult& res, LpStatus s) {
    if (perturbed_) {
      restore_bounds();
      refactor();
      compute_primal();
    }
    res.status = s;
    res.iterations = iter_;
    res.dual_iterations = dual_iter_;
    res.primal_iterations = primal_iter_;
    res.phase1_iterations = phase1_iter_;
    res.bland_iterations = bland_iter_;
    res.bound_flips = flips_;
    res.refactorizations = refactors_;
    res.singular_repairs = repairs_;
    res.basis.status = status_;
    res.x.assign(static_cast<std::size_t>(n_), 0.0);
    for (int j = 0; j < n_; ++j) res.x[static_cast<std::size_t>(j)] = xv(j) * colscale_[static_cast<std::size_t>(j)];
    if (s == LpStatus::optimal)
      for (std::size_t j = 0; j < res.x.size(); ++j) res.x[j] = std::clamp(res.x[j], lp_.col_lb[j], lp_.col_ub[j]);
    res.row_activity = lp_.row_activity(res.x);
    res.objective = lp_.objective(res.x);
    return res;
  }
};

}  // namespace simplex_detail

/// Solves the LP. `warm` may carry a basis from a previous solve of an LP
/// with the same dimensions (bounds may differ); it is ignored otherwise.
inline LpResult solve_lp(const LinearProgram& lp, const LpOptions& opt = {}, const Basis* warm = nullptr) {
  if (lp.col_lb.size() != lp.ncols || lp.col_ub.size() != lp.ncols || lp.cost.size() != lp.ncols ||
      lp.row_lb.size() != lp.nrows || lp.row_ub.size() != lp.nrows || lp.col_start.size() != lp.ncols + 1)
    throw Error("solve_lp: inconsistent LinearProgram dimensions");
  LpResult bad;
  bad.status = LpStatus::infeasible;
  for (std::size_t j = 0; j < lp.ncols; ++j)
    if (lp.col_lb[j] > lp.col_ub[j]) {
      bad.message = "column bounds cross";
      return bad;
    }
  for (std::size_t i = 0; i < lp.nrows; ++i)
    if (lp.row_lb[i] > lp.row_ub[i]) {
      bad.message = "row bounds cross";
      return bad;
    }
  simplex_detail::Simplex s(lp, opt);
  return s.run(warm);
}

}  // namespace gridstore
