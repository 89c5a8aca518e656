#pragma once

// Optimization driver: LP, best-bound branch-and-bound over binary columns,
// and outer approximation of rotated cones.
//
// Cones are handled by a global cut pool. The root relaxation runs OA rounds
// until every cone is satisfied within cone_tol; afterwards cuts are added
// lazily whenever a node produces an integral point that still violates a
// cone. Cuts never remove cone-feasible points, so every node bound is a
// valid bound on the conic problem.

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridstore/outer_approximation.hpp"
#include "gridstore/problem.hpp"
#include "gridstore/simplex.hpp"

namespace gridstore {

struct SolveOptions {
  double feas_tol = 1e-7;
  double opt_tol = 1e-6;  // relative, node pruning
  double cone_tol = 1e-6;
  double mip_gap = 1e-4;
  std::size_t max_oa_rounds = 200;
  std::size_t node_limit = 1000000;
  double time_limit = kInf;  // seconds
  std::uint64_t deterministic_seed = 0;
  double int_tol = 1e-6;
  LpAlgorithm lp_algorithm = LpAlgorithm::dual;
  std::function<void(const std::string&)> on_log;  // called for every log line as it is produced

  void validate() const {
    if (!(feas_tol > 0.0) || !(opt_tol > 0.0) || !(cone_tol > 0.0) || !(mip_gap > 0.0) || !(int_tol > 0.0))
      throw ValidationError("solve options: tolerances must be positive");
    if (!(time_limit > 0.0)) throw ValidationError("solve options: time_limit must be positive");
  }
};

enum class SolveStatus { optimal, infeasible, unbounded, gap_limit, node_limit, time_limit, numerical_error };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::gap_limit: return "gap_limit";
    case SolveStatus::node_limit: return "node_limit";
    case SolveStatus::time_limit: return "time_limit";
    case SolveStatus::numerical_error: return "numerical_error";
  }
  return "?";
}

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_error;
  std::vector<double> x;  // column values of the incumbent, empty if none
  double objective = kInf;
  double bound = -kInf;
  double gap = kInf;
  std::size_t lp_solves = 0;
  std::size_t lp_iterations = 0;
  std::size_t nodes = 0;
  std::size_t oa_rounds = 0;
  std::size_t cuts = 0;
  double max_cone_violation = 0.0;
  double seconds = 0.0;
  double lp_seconds = 0.0;
  std::vector<LinearCut> cut_pool;
  std::vector<std::string> log;
  std::string message;

  bool has_solution() const { return !x.empty(); }
};

inline double relative_gap(double incumbent, double bound) {
  if (!std::isfinite(incumbent) || !std::isfinite(bound)) return kInf;
  return std::max(0.0, incumbent - bound) / std::max(1.0, std::abs(incumbent));
}

inline nlohmann::json summary_json(const SolveResult& r) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"status", to_string(r.status)},
          {"objective", num(r.objective)},
          {"bound", num(r.bound)},
          {"gap", num(r.gap)},
          {"seconds", r.seconds},
          {"lp_seconds", r.lp_seconds},
          {"lp_solves", r.lp_solves},
          {"lp_iterations", r.lp_iterations},
          {"nodes", r.nodes},
          {"oa_rounds", r.oa_rounds},
          {"cuts", r.cuts},
          {"max_cone_violation", r.max_cone_violation},
          {"message", r.message}};
}

namespace solve_detail {

class Engine {
public:
  Engine(const ProblemInstance& pi, const SolveOptions& opt) : pi_(pi), opt_(opt), lp_(to_linear_program(pi)) {
    opt_.validate();
    binaries_ = pi.binaries();
    base_rows_ = lp_.nrows;
    start_ = std::chrono::steady_clock::now();
  }

  SolveResult run() {
    res_.status = SolveStatus::infeasible;
    root();
    res_.seconds = elapsed();
    res_.cut_pool = pool_;
    res_.cuts = pool_.size();
    if (res_.has_solution()) {
      res_.objective = pi_.objective(res_.x);
      res_.max_cone_violation = pi_.cones.empty() ? 0.0 : max_cone_violation(pi_.cones, res_.x).first;
    }
    res_.gap = relative_gap(res_.objective, res_.bound);
    logf("done status=" + std::string(to_string(res_.status)) + " objective=" + fmt(res_.objective) +
         " bound=" + fmt(res_.bound) + " gap=" + fmt(res_.gap) + " time=" + fmt(res_.seconds));
    return std::move(res_);
  }

private:
  struct Node {
    std::size_t id;
    double bound;
    std::vector<std::pair<std::size_t, double>> fix;  // binary column, value
    std::shared_ptr<const Basis> basis;
  };
  struct NodeOrder {
    bool operator()(const Node& a, const Node& b) const { return a.bound != b.bound ? a.bound < b.bound : a.id < b.id; }
  };
  enum class LpOutcome { solved, infeasible, unbounded, limit, error };

  const ProblemInstance& pi_;
  SolveOptions opt_;
  LinearProgram lp_;
  std::vector<std::size_t> binaries_;
  std::vector<LinearCut> pool_;
  SolveResult res_;
  std::chrono::steady_clock::time_point start_;
  std::size_t next_id_ = 0;
  double dropped_ = kInf;  // lowest bound among abandoned subtrees
  std::size_t base_rows_ = 0;
  double last_lp_seconds_ = 0.0;

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  bool out_of_time() const { return elapsed() > opt_.time_limit; }

  static std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
  }
  void logf(std::string line) {
    if (opt_.on_log) opt_.on_log(line);
    res_.log.push_back(std::move(line));
  }

  /// Solves the current LP with the given column bounds. Falls back to a cold
  /// primal solve when the warm dual run breaks down.
  LpOutcome solve(const std::vector<double>& lb, const std::vector<double>& ub, const Basis* warm, LpResult& out) {
    LinearProgram lp = lp_;
    lp.col_lb = lb;
    lp.col_ub = ub;
    LpOptions lo;
    lo.algorithm = opt_.lp_algorithm;
    lo.feas_tol = opt_.feas_tol;
    lo.seed = opt_.deterministic_seed;
    lo.time_limit = std::max(1e-3, opt_.time_limit - elapsed());
    Basis padded;
    if (warm) {
      padded = *warm;
      padded.status.resize(lp.ncols + lp.nrows, VarStatus::basic);
    }
    const auto t0 = std::chrono::steady_clock::now();
    out = solve_lp(lp, lo, warm ? &padded : nullptr);
    if (out.status == LpStatus::numerical_error || out.status == LpStatus::iteration_limit) {
      logf(std::string("lp fallback status=") + to_string(out.status) + " iterations=" + std::to_string(out.iterations) + " " +
           out.message);
      lo.algorithm = LpAlgorithm::primal;
      res_.lp_iterations += out.iterations;
      out = solve_lp(lp, lo, nullptr);
    }
    last_lp_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res_.lp_seconds += last_lp_seconds_;
    ++res_.lp_solves;
    res_.lp_iterations += out.iterations;
    switch (out.status) {
      case LpStatus::optimal: return LpOutcome::solved;
      case LpStatus::infeasible: return LpOutcome::infeasible;
      case LpStatus::unbounded: return LpOutcome::unbounded;
      case LpStatus::time_limit: return LpOutcome::limit;
      default: return LpOutcome::error;
    }
  }

  /// Cuts for every cone violated by more than cone_tol at x.
  std::size_t add_cuts(const std::vector<double>& x) {
    std::vector<LinearCut> cuts;
    for (const auto& cone : pi_.cones) {
      if (cone.violation(x) <= opt_.cone_tol) continue;
      if (auto c = tangent_cut(cone, x)) cuts.push_back(std::move(*c));
    }
    append_cuts(lp_, cuts);
    pool_.insert(pool_.end(), cuts.begin(), cuts.end());
    return cuts.size();
  }

  /// Drops cut rows that are basic and clearly slack at `out`, keeping the
  /// basis and row activities aligned with the shrunken LP. Cuts stay in the pool.
  void purge_slack_cuts(LpResult& out) {
    const std::size_t n = lp_.ncols;
    std::vector<char> keep(lp_.nrows, 1);
    std::size_t removed = 0;
    for (std::size_t r = base_rows_; r < lp_.nrows; ++r) {
      const double slack = lp_.row_ub[r] - out.row_activity[r];
      if (out.basis.status[n + r] == VarStatus::basic && slack > 1e-3 * (1.0 + std::abs(lp_.row_ub[r]))) {
        keep[r] = 0;
        ++removed;
      }
    }
    if (removed == 0) return;
    std::vector<std::size_t> new_row(lp_.nrows, npos);
    std::size_t next = 0;
    for (std::size_t r = 0; r < lp_.nrows; ++r)
      if (keep[r]) new_row[r] = next++;
    LinearProgram lp;
    lp.ncols = n;
    lp.nrows = next;
    lp.cost = lp_.cost;
    lp.objective_constant = lp_.objective_constant;
    lp.col_lb = lp_.col_lb;
    lp.col_ub = lp_.col_ub;
    lp.col_start.assign(n + 1, 0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = lp_.col_start[j]; p < lp_.col_start[j + 1]; ++p) {
        const auto r = new_row[lp_.row_index[p]];
        if (r == npos) continue;
        lp.row_index.push_back(r);
        lp.value.push_back(lp_.value[p]);
      }
      lp.col_start[j + 1] = lp.row_index.size();
    }
    Basis basis;
    basis.status.assign(out.basis.status.begin(), out.basis.status.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<double> activity;
    for (std::size_t r = 0; r < lp_.nrows; ++r) {
      if (!keep[r]) continue;
      lp.row_lb.push_back(lp_.row_lb[r]);
      lp.row_ub.push_back(lp_.row_ub[r]);
      basis.status.push_back(out.basis.status[n + r]);
      activity.push_back(out.row_activity[r]);
    }
    lp_ = std::move(lp);
    out.basis = std::move(basis);
    out.row_activity = std::move(activity);
  }

  /// LP + OA rounds at fixed column bounds. Returns the final LP outcome;
  /// `converged` reports whether all cones hold within cone_tol.
  LpOutcome solve_with_cuts(const std::vector<double>& lb, const std::vector<double>& ub,
                            std::shared_ptr<const Basis> warm, LpResult& out, bool& converged, std::size_t max_rounds,
                            const char* where, bool purge = false) {
    converged = false;
    for (std::size_t round = 0;; ++round) {
      const auto st = solve(lb, ub, warm.get(), out);
      if (st != LpOutcome::solved) return st;
      if (pi_.cones.empty()) {
        converged = true;
        return st;
      }
      const auto [viol, at] = max_cone_violation(pi_.cones, out.x);
      if (viol <= opt_.cone_tol) {
        converged = true;
        return st;
      }
      if (round >= max_rounds || out_of_time()) return st;
      if (purge) purge_slack_cuts(out);
      const auto added = add_cuts(out.x);
      ++res_.oa_rounds;
      logf(std::string("oa ") + where + " round=" + std::to_string(round + 1) + " lp=" + fmt(out.objective) +
           " max_violation=" + fmt(viol) + " worst=" + pi_.cones[at].name + " cuts=" + std::to_string(added) +
           " pool=" + std::to_string(pool_.size()) + " iterations=" + std::to_string(out.iterations) +
           " lp_seconds=" + fmt(last_lp_seconds_));
      if (added == 0) return st;
      warm = std::make_shared<const Basis>(out.basis);
    }
  }

  /// Most fractional binary, ties to the lowest column; npos if integral.
  std::size_t branching_column(const std::vector<double>& x) const {
    std::size_t best = npos;
    double best_frac = opt_.int_tol;
    for (auto j : binaries_) {
      const double f = std::abs(x[j] - std::round(x[j]));
      if (f > best_frac) {
        best_frac = f;
        best = j;
      }
    }
    return best;
  }

  /// Fixes every binary to its rounded value and re-solves; on success the
  /// result becomes the incumbent if it improves on it.
  /// Rounds each binary to the value that keeps the rows through it least
  /// violated at x (other columns held), nearest integer on ties. Binaries are
  /// processed in column order and row activities follow each choice.
  std::vector<std::pair<std::size_t, double>> round_binaries(const std::vector<double>& x) const {
    auto act = lp_.row_activity(x);
    auto excess = [&](std::size_t r, double a) {
      const double tol = opt_.feas_tol * (1.0 + std::abs(a));
      return std::max({0.0, lp_.row_lb[r] - a - tol, a - lp_.row_ub[r] - tol});
    };
    std::vector<std::pair<std::size_t, double>> out;
    for (auto j : binaries_) {
      const double near = std::round(x[j]);
      double best_v = near, best_cost = kInf;
      for (double v : {near, 1.0 - near}) {
        double cost = 0.0;
        for (std::size_t p = lp_.col_start[j]; p < lp_.col_start[j + 1]; ++p) {
          const auto r = lp_.row_index[p];
          cost += excess(r, act[r] + lp_.value[p] * (v - x[j]));
        }
        if (cost < best_cost) {
          best_cost = cost;
          best_v = v;
        }
      }
      for (std::size_t p = lp_.col_start[j]; p < lp_.col_start[j + 1]; ++p)
        act[lp_.row_index[p]] += lp_.value[p] * (best_v - x[j]);
      out.push_back({j, best_v});
    }
    return out;
  }

  void polish(const std::vector<double>& x, std::shared_ptr<const Basis> warm, const char* where) {
    if (binaries_.empty()) return;
    auto lb = lp_.col_lb, ub = lp_.col_ub;
    for (const auto& [j, v] : round_binaries(x)) lb[j] = ub[j] = std::clamp(v, lb[j], ub[j]);
    LpResult r;
    bool conv = false;
    const auto st = solve_with_cuts(lb, ub, std::move(warm), r, conv, opt_.max_oa_rounds, where);
    if (st != LpOutcome::solved || !conv) return;
    offer(r.x, where);
  }

  void offer(std::vector<double> x, const char* where) {
    for (auto j : binaries_) x[j] = std::round(x[j]);
    const double obj = pi_.objective(x);
    if (obj < res_.objective) {
      res_.objective = obj;
      res_.x = std::move(x);
      logf(std::string("incumbent ") + where + " objective=" + fmt(obj));
    }
  }

  void root() {
    LpResult r;
    bool conv = false;
    const auto st = solve_with_cuts(lp_.col_lb, lp_.col_ub, nullptr, r, conv, opt_.max_oa_rounds, "root", true);
    logf("root lp status=" + std::string(to_string(r.status)) + " objective=" + fmt(r.objective) + " iterations=" +
         std::to_string(r.iterations) + " rows=" + std::to_string(lp_.nrows) + " cols=" + std::to_string(lp_.ncols));
    switch (st) {
      case LpOutcome::infeasible: res_.status = SolveStatus::infeasible; return;
      case LpOutcome::unbounded: res_.status = SolveStatus::unbounded; return;
      case LpOutcome::limit: res_.status = SolveStatus::time_limit; return;
      case LpOutcome::error:
        res_.status = SolveStatus::numerical_error;
        res_.message = r.message.empty() ? "LP breakdown at the root" : r.message;
        return;
      case LpOutcome::solved: break;
    }
    res_.bound = r.objective;
    if (binaries_.empty()) {
      res_.x = r.x;
      res_.objective = r.objective;
      res_.status = conv ? SolveStatus::optimal : (out_of_time() ? SolveStatus::time_limit : SolveStatus::gap_limit);
      if (!conv) res_.message = "outer approximation stopped before all cones were satisfied";
      return;
    }
    if (!conv) {
      res_.status = out_of_time() ? SolveStatus::time_limit : SolveStatus::gap_limit;
      res_.message = "outer approximation round limit reached at the root";
      return;
    }
    auto basis = std::make_shared<const Basis>(r.basis);
    if (branching_column(r.x) == npos) offer(r.x, "root");
    polish(r.x, basis, "rounding");
    tree(Node{next_id_++, r.objective, {}, basis});
  }

  void tree(Node root_node) {
    std::set<Node, NodeOrder> open;
    open.insert(std::move(root_node));
    double global = res_.bound;
    std::size_t lazy_rounds = 0;
    while (!open.empty()) {
      global = std::max(global, open.begin()->bound);
      res_.bound = std::min({global, res_.objective, dropped_});
      if (relative_gap(res_.objective, res_.bound) <= opt_.mip_gap) break;
      if (res_.nodes >= opt_.node_limit) {
        res_.status = SolveStatus::node_limit;
        finish_bound(open);
        return;
      }
      if (out_of_time()) {
        res_.status = SolveStatus::time_limit;
        finish_bound(open);
        return;
      }
      Node node = *open.begin();
      open.erase(open.begin());
      ++res_.nodes;
      if (prunable(node.bound)) continue;

      auto lb = lp_.col_lb, ub = lp_.col_ub;
      for (const auto& [j, v] : node.fix) lb[j] = ub[j] = v;
      LpResult r;
      LpOutcome st;
      std::size_t br;
      auto warm = node.basis;
      for (;;) {
        st = solve(lb, ub, warm.get(), r);
        if (st != LpOutcome::solved) break;
        br = branching_column(r.x);
        if (br != npos || pi_.cones.empty()) break;
        // Integral point: lazy cone check.
        const auto [viol, at] = max_cone_violation(pi_.cones, r.x);
        if (viol <= opt_.cone_tol || lazy_rounds >= opt_.max_oa_rounds) break;
        ++lazy_rounds;
        ++res_.oa_rounds;
        const auto added = add_cuts(r.x);
        logf("oa lazy node=" + std::to_string(node.id) + " max_violation=" + fmt(viol) + " cuts=" +
             std::to_string(added));
        if (added == 0) break;
        warm = std::make_shared<const Basis>(r.basis);
      }
      if (st == LpOutcome::limit) {
        res_.status = SolveStatus::time_limit;
        open.insert(node);
        finish_bound(open);
        return;
      }
      if (st == LpOutcome::error) dropped_ = std::min(dropped_, node.bound);
      if (st != LpOutcome::solved) continue;
      const double bound = std::max(node.bound, r.objective);
      if ((res_.nodes & 63) == 1)
        logf("node=" + std::to_string(res_.nodes) + " open=" + std::to_string(open.size()) + " lp=" + fmt(r.objective) +
             " incumbent=" + fmt(res_.objective) + " bound=" + fmt(global) + " gap=" +
             fmt(relative_gap(res_.objective, global)));
      if (prunable(bound)) continue;
      auto basis = std::make_shared<const Basis>(r.basis);
      if (br == npos) {
        if (pi_.cones.empty() || max_cone_violation(pi_.cones, r.x).first <= opt_.cone_tol) offer(r.x, "node");
        else dropped_ = std::min(dropped_, bound);  // lazy round budget exhausted
        continue;
      }
      if ((res_.nodes & 15) == 1) polish(r.x, basis, "dive");
      for (double v : {0.0, 1.0}) {
        Node child{next_id_++, bound, node.fix, basis};
        child.fix.push_back({br, v});
        open.insert(std::move(child));
      }
    }
    if (!res_.has_solution()) {
      res_.status = std::isfinite(dropped_) ? SolveStatus::numerical_error : SolveStatus::infeasible;
      if (std::isfinite(dropped_)) res_.message = "subtrees dropped after LP breakdown or OA budget exhaustion";
      return;
    }
    res_.bound = std::min({open.empty() ? res_.objective : global, res_.objective, dropped_});
    res_.status = relative_gap(res_.objective, res_.bound) <= opt_.mip_gap ? SolveStatus::optimal : SolveStatus::gap_limit;
    if (std::isfinite(dropped_)) res_.message = "some subtrees were dropped; their parent bounds are kept";
  }

  bool prunable(double bound) const {
    if (!std::isfinite(res_.objective)) return false;
    return bound >= res_.objective - opt_.opt_tol * std::max(1.0, std::abs(res_.objective));
  }

  void finish_bound(const std::set<Node, NodeOrder>& open) {
    double b = std::min(res_.objective, dropped_);
    if (!open.empty()) b = std::min(b, open.begin()->bound);
    res_.bound = b;
  }
};

}  // namespace solve_detail

/// Solves any linear, mixed-binary, or conic ProblemInstance.
inline SolveResult solve(const ProblemInstance& pi, const SolveOptions& opt = {}) {
  if (!pi.nonlinear.empty())
    throw Error("instance '" + to_string(pi.formulation) + "' has nonlinear relations and is export-only");
  return solve_detail::Engine(pi, opt).run();
}

inline SolveResult lp_solve(const ProblemInstance& pi, const SolveOptions& opt = {}) {
  if (!pi.is_linear() || !pi.binaries().empty()) throw Error("lp_solve: instance has binaries or cones");
  return solve(pi, opt);
}

inline SolveResult mip_solve(const ProblemInstance& pi, const SolveOptions& opt = {}) {
  if (!pi.nonlinear.empty()) throw Error("mip_solve: instance has nonlinear relations");
  return solve(pi, opt);
}

inline SolveResult oa_loop(const ProblemInstance& pi, const SolveOptions& opt = {}) {
  if (pi.cones.empty()) throw Error("oa_loop: instance has no cone constraints");
  return solve(pi, opt);
}

}  // namespace gridstore
