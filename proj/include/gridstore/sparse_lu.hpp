#pragma once

// LU factorization of simplex basis matrices with hypersparse solves.
//
// Left-looking (Gilbert-Peierls) factorization of B Q = P^T L U with a
// COLAMD column order and threshold partial pivoting. Triangular factors are
// relabeled in pivot-step space and stored both by column and by row so all
// four triangular solves run in scatter form over the reach of the right-hand
// side. Basis changes are appended as product-form eta vectors.
//
// Index spaces: "row" = constraint row of B, "position" = column of B (basis
// slot), "step" = pivot order. FTRAN maps row space to position space and
// BTRAN the reverse.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

namespace gridstore::lu {

/// Dense values plus the list of positions that may be nonzero.
struct WorkVector {
  std::vector<double> val;
  std::vector<int> idx;
  std::vector<char> mark;

  void resize(int n) {
    val.assign(static_cast<std::size_t>(n), 0.0);
    mark.assign(static_cast<std::size_t>(n), 0);
    idx.clear();
  }
  int size() const { return static_cast<int>(val.size()); }
  void clear() {
    if (idx.size() * 4 > val.size()) {
      std::fill(val.begin(), val.end(), 0.0);
      std::fill(mark.begin(), mark.end(), 0);
    } else {
      for (int i : idx) {
        val[static_cast<std::size_t>(i)] = 0.0;
        mark[static_cast<std::size_t>(i)] = 0;
      }
    }
    idx.clear();
  }
  void touch(int i) {
    if (!mark[static_cast<std::size_t>(i)]) {
      mark[static_cast<std::size_t>(i)] = 1;
      idx.push_back(i);
    }
  }
  void add(int i, double v) {
    touch(i);
    val[static_cast<std::size_t>(i)] += v;
  }
  void set(int i, double v) {
    touch(i);
    val[static_cast<std::size_t>(i)] = v;
  }
  double operator[](int i) const { return val[static_cast<std::size_t>(i)]; }
  /// Rebuilds idx from a full scan (after dense-mode operations).
  void reindex() {
    idx.clear();
    for (std::size_t i = 0; i < val.size(); ++i) {
      mark[i] = val[i] != 0.0;
      if (mark[i]) idx.push_back(static_cast<int>(i));
    }
  }
  /// Drops tiny entries from the pattern.
  void drop(double tol) {
    std::size_t k = 0;
    for (int i : idx) {
      auto u = static_cast<std::size_t>(i);
      if (std::abs(val[u]) > tol) idx[k++] = i;
      else {
        val[u] = 0.0;
        mark[u] = 0;
      }
    }
    idx.resize(k);
  }
};

/// Adjacency in compressed form with one value per edge.
struct Graph {
  std::vector<int> start;  // size n + 1
  std::vector<int> index;
  std::vector<double> value;
};

class BasisFactor {
public:
  struct Outcome {
    int rank_deficiency = 0;
    /// (basis position, row) pairs: the column at that position was dependent
    /// and has been replaced by the logical (-e_row) of the given row.
    std::vector<std::pair<int, int>> replaced;
  };

  double pivot_threshold = 0.1;
  double singular_tol = 1e-11;
  double drop_tol = 1e-14;

  /// Factorizes the m x m matrix given column-wise (one column per basis position).
  Outcome factor(int m, const std::vector<int>& col_start, const std::vector<int>& row_index,
                 const std::vector<double>& value) {
    m_ = m;
    Outcome out;
    clear_etas();
    const auto mz = static_cast<std::size_t>(m);
    step_of_row_.assign(mz, -1);
    row_of_step_.assign(mz, -1);
    pos_of_step_.assign(mz, -1);
    udiag_.assign(mz, 0.0);
    // Raw factors per step with row indices until relabeling.
    Graph lraw, uraw;
    lraw.start.assign(1, 0);
    uraw.start.assign(1, 0);

    const auto order = column_order(m, col_start, row_index);
    WorkVector x;
    x.resize(m);
    std::vector<int> topo, stack, child;
    std::vector<char> visited(mz, 0);
    std::vector<int> singular_pos;
    int step = 0;
    for (int c : order) {
      x.clear();
      for (int p = col_start[static_cast<std::size_t>(c)]; p < col_start[static_cast<std::size_t>(c) + 1]; ++p)
        x.add(row_index[static_cast<std::size_t>(p)], value[static_cast<std::size_t>(p)]);
      // Reach over pivoted rows through the L columns built so far.
      topo.clear();
      for (int i : x.idx) {
        if (step_of_row_[static_cast<std::size_t>(i)] < 0 || visited[static_cast<std::size_t>(i)]) continue;
        dfs_rows(i, lraw, visited, stack, child, topo);
      }
      for (int i : topo) visited[static_cast<std::size_t>(i)] = 0;
      // topo holds postorder; process in reverse (topological) order.
      const std::size_t u_begin = uraw.index.size();
      for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        const int i = *it;
        const double xi = x[i];
        if (xi == 0.0) continue;
        uraw.index.push_back(i);
        uraw.value.push_back(xi);
        const auto k = static_cast<std::size_t>(step_of_row_[static_cast<std::size_t>(i)]);
        for (int q = lraw.start[k]; q < lraw.start[k + 1]; ++q)
          x.add(lraw.index[static_cast<std::size_t>(q)], -lraw.value[static_cast<std::size_t>(q)] * xi);
      }
      // Pivot among unpivoted rows.
      double best = 0.0;
      for (int i : x.idx)
        if (step_of_row_[static_cast<std::size_t>(i)] < 0) best = std::max(best, std::abs(x[i]));
      if (best <= singular_tol) {
        uraw.index.resize(u_begin);
        uraw.value.resize(u_begin);
        singular_pos.push_back(c);
        continue;
      }
      int piv = -1;
      for (int i : x.idx) {
        if (step_of_row_[static_cast<std::size_t>(i)] >= 0) continue;
        const double a = std::abs(x[i]);
        if (a < pivot_threshold * best) continue;
        // Largest magnitude; ties go to the lowest row.
        if (piv < 0 || a > std::abs(x[piv]) || (a == std::abs(x[piv]) && i < piv)) piv = i;
      }
      const double d = x[piv];
      udiag_[static_cast<std::size_t>(step)] = d;
      uraw.start.push_back(static_cast<int>(uraw.index.size()));
      for (int i : x.idx) {
        if (i == piv || step_of_row_[static_cast<std::size_t>(i)] >= 0) continue;
        const double l = x[i] / d;
        if (std::abs(l) > drop_tol) {
          lraw.index.push_back(i);
          lraw.value.push_back(l);
        }
      }
      lraw.start.push_back(static_cast<int>(lraw.index.size()));
      step_of_row_[static_cast<std::size_t>(piv)] = step;
      row_of_step_[static_cast<std::size_t>(step)] = piv;
      pos_of_step_[static_cast<std::size_t>(step)] = c;
      ++step;
    }
    // Dependent columns: pivot a logical in each remaining row.
    if (!singular_pos.empty()) {
      int k = 0;
      for (int r = 0; r < m; ++r) {
        if (step_of_row_[static_cast<std::size_t>(r)] >= 0) continue;
        const int c = singular_pos[static_cast<std::size_t>(k++)];
        udiag_[static_cast<std::size_t>(step)] = -1.0;
        step_of_row_[static_cast<std::size_t>(r)] = step;
        row_of_step_[static_cast<std::size_t>(step)] = r;
        pos_of_step_[static_cast<std::size_t>(step)] = c;
        lraw.start.push_back(static_cast<int>(lraw.index.size()));
        uraw.start.push_back(static_cast<int>(uraw.index.size()));
        out.replaced.emplace_back(c, r);
        ++step;
      }
      out.rank_deficiency = static_cast<int>(singular_pos.size());
    }
    finalize(std::move(lraw), std::move(uraw));
    return out;
  }

  int dim() const { return m_; }

  /// Solves B x = b. Input indexed by row, output by basis position.
  void ftran(WorkVector& x) {
    to_steps(x, step_of_row_);
    solve(lc_, nullptr, x, true);
    solve(uc_, &udiag_, x, false);
    from_steps(x, pos_of_step_);
    for (std::size_t e = 0; e < eta_r_.size(); ++e) {
      const int r = eta_r_[e];
      double xr = x[r];
      if (xr == 0.0) continue;
      xr /= eta_pivot_[e];
      x.set(r, xr);
      for (int p = eta_start_[e]; p < eta_start_[e + 1]; ++p)
        x.add(eta_index_[static_cast<std::size_t>(p)], -eta_value_[static_cast<std::size_t>(p)] * xr);
    }
  }

  /// Solves B^T y = c. Input indexed by basis position, output by row.
  void btran(WorkVector& x) {
    for (std::size_t e = eta_r_.size(); e-- > 0;) {
      const int r = eta_r_[e];
      double s = x[r];
      for (int p = eta_start_[e]; p < eta_start_[e + 1]; ++p)
        s -= eta_value_[static_cast<std::size_t>(p)] * x[eta_index_[static_cast<std::size_t>(p)]];
      if (s != 0.0 || x.mark[static_cast<std::size_t>(r)]) x.set(r, s / eta_pivot_[e]);
    }
    to_steps(x, step_of_pos_);
    solve(ur_, &udiag_, x, true);
    solve(lr_, nullptr, x, false);
    from_steps(x, row_of_step_);
  }

  /// Records the basis change at position r with entering column
  /// alpha = B^{-1} a_q (position space).
  void update(int r, const WorkVector& alpha) {
    eta_r_.push_back(r);
    eta_pivot_.push_back(alpha[r]);
    for (int i : alpha.idx) {
      if (i == r) continue;
      const double a = alpha[i];
      if (std::abs(a) > drop_tol) {
        eta_index_.push_back(i);
        eta_value_.push_back(a);
      }
    }
    eta_start_.push_back(static_cast<int>(eta_index_.size()));
  }

  std::size_t num_updates() const { return eta_r_.size(); }
  std::size_t eta_nonzeros() const { return eta_index_.size(); }
  std::size_t factor_nonzeros() const { return lc_.index.size() + uc_.index.size() + static_cast<std::size_t>(m_); }

private:
  int m_ = 0;
  std::vector<int> step_of_row_, row_of_step_, pos_of_step_, step_of_pos_;
  std::vector<double> udiag_;
  Graph lc_, uc_, ur_, lr_;  // step-space triangular factors (see solve())
  std::vector<int> eta_r_, eta_start_{0}, eta_index_;
  std::vector<double> eta_pivot_, eta_value_;
  WorkVector tmp_;
  std::vector<int> topo_, stack_, child_;
  std::vector<char> visited_;

  void clear_etas() {
    eta_r_.clear();
    eta_start_.assign(1, 0);
    eta_index_.clear();
    eta_pivot_.clear();
    eta_value_.clear();
  }

  /// Singleton columns first (each claims its row), then a COLAMD order of the
  /// remaining columns restricted to the unclaimed rows.
  static std::vector<int> column_order(int m, const std::vector<int>& col_start, const std::vector<int>& row_index) {
    std::vector<char> claimed(static_cast<std::size_t>(m), 0);
    std::vector<int> order, rest;
    for (int c = 0; c < m; ++c) {
      const int b = col_start[static_cast<std::size_t>(c)];
      if (col_start[static_cast<std::size_t>(c) + 1] - b == 1 && !claimed[static_cast<std::size_t>(row_index[static_cast<std::size_t>(b)])]) {
        claimed[static_cast<std::size_t>(row_index[static_cast<std::size_t>(b)])] = 1;
        order.push_back(c);
      } else {
        rest.push_back(c);
      }
    }
    if (rest.empty()) return order;
    std::vector<int> row_map(static_cast<std::size_t>(m), -1);
    int nr = 0;
    for (int r = 0; r < m; ++r)
      if (!claimed[static_cast<std::size_t>(r)]) row_map[static_cast<std::size_t>(r)] = nr++;
    const int nc = static_cast<int>(rest.size());
    Eigen::SparseMatrix<double, Eigen::ColMajor, int> pat(nr, nc);
    std::vector<Eigen::Triplet<double, int>> trips;
    for (int k = 0; k < nc; ++k) {
      const int c = rest[static_cast<std::size_t>(k)];
      for (int p = col_start[static_cast<std::size_t>(c)]; p < col_start[static_cast<std::size_t>(c) + 1]; ++p) {
        const int r = row_map[static_cast<std::size_t>(row_index[static_cast<std::size_t>(p)])];
        if (r >= 0) trips.emplace_back(r, k, 1.0);
      }
    }
    pat.setFromTriplets(trips.begin(), trips.end());
    pat.makeCompressed();
    Eigen::COLAMDOrdering<int> colamd;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
    colamd(pat, perm);
    std::vector<int> kernel(static_cast<std::size_t>(nc));
    for (int k = 0; k < nc; ++k) kernel[static_cast<std::size_t>(perm.indices()[k])] = rest[static_cast<std::size_t>(k)];
    order.insert(order.end(), kernel.begin(), kernel.end());
    return order;
  }

  /// Postorder DFS over pivoted rows through the raw L columns.
  void dfs_rows(int root, const Graph& lraw, std::vector<char>& visited, std::vector<int>& stack,
                std::vector<int>& child, std::vector<int>& post) {
    stack.clear();
    child.clear();
    stack.push_back(root);
    child.push_back(lraw.start[static_cast<std::size_t>(step_of_row_[static_cast<std::size_t>(root)])]);
    visited[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      const int i = stack.back();
      const int end = lraw.start[static_cast<std::size_t>(step_of_row_[static_cast<std::size_t>(i)]) + 1];
      int c = child.back();
      bool pushed = false;
      while (c < end) {
        const int j = lraw.index[static_cast<std::size_t>(c++)];
        if (visited[static_cast<std::size_t>(j)] || step_of_row_[static_cast<std::size_t>(j)] < 0) continue;
        visited[static_cast<std::size_t>(j)] = 1;
        child.back() = c;
        stack.push_back(j);
        child.push_back(lraw.start[static_cast<std::size_t>(step_of_row_[static_cast<std::size_t>(j)])]);
        pushed = true;
        break;
      }
      if (!pushed) {
        post.push_back(i);
        stack.pop_back();
        child.pop_back();
      }
    }
  }

  static void transpose(const Graph& g, int m, Graph& t) {
    t.start.assign(static_cast<std::size_t>(m) + 1, 0);
    for (int s : g.index) ++t.start[static_cast<std::size_t>(s) + 1];
    for (int k = 0; k < m; ++k) t.start[static_cast<std::size_t>(k) + 1] += t.start[static_cast<std::size_t>(k)];
    t.index.resize(g.index.size());
    t.value.resize(g.value.size());
    std::vector<int> fill(t.start.begin(), t.start.end() - 1);
    for (int k = 0; k < m; ++k)
      for (int p = g.start[static_cast<std::size_t>(k)]; p < g.start[static_cast<std::size_t>(k) + 1]; ++p) {
        const int q = fill[static_cast<std::size_t>(g.index[static_cast<std::size_t>(p)])]++;
        t.index[static_cast<std::size_t>(q)] = k;
        t.value[static_cast<std::size_t>(q)] = g.value[static_cast<std::size_t>(p)];
      }
  }

  /// Relabels raw factors (row indices) into step space and builds the
  /// row-wise copies.
  void finalize(Graph lraw, Graph uraw) {
    const auto m = static_cast<std::size_t>(m_);
    for (int& i : lraw.index) i = step_of_row_[static_cast<std::size_t>(i)];  // L(s,k), s > k
    for (int& i : uraw.index) i = step_of_row_[static_cast<std::size_t>(i)];  // U(s,k), s < k
    lc_ = std::move(lraw);
    uc_ = std::move(uraw);
    if (lc_.start.size() != m + 1) lc_.start.assign(m + 1, 0);
    if (uc_.start.size() != m + 1) uc_.start.assign(m + 1, 0);
    transpose(uc_, m_, ur_);
    transpose(lc_, m_, lr_);
    step_of_pos_.assign(m, -1);
    for (std::size_t k = 0; k < m; ++k) step_of_pos_[static_cast<std::size_t>(pos_of_step_[k])] = static_cast<int>(k);
    tmp_.resize(m_);
    visited_.assign(m, 0);
  }

  /// Permutes x from row or position space into step space.
  void to_steps(WorkVector& x, const std::vector<int>& step_of_src) {
    tmp_.clear();
    for (int i : x.idx) {
      const double v = x[i];
      if (v != 0.0) tmp_.set(step_of_src[static_cast<std::size_t>(i)], v);
    }
    std::swap(x, tmp_);
  }

  void from_steps(WorkVector& x, const std::vector<int>& dst_of_step) {
    tmp_.clear();
    for (int k : x.idx) {
      const double v = x[k];
      if (v != 0.0) tmp_.set(dst_of_step[static_cast<std::size_t>(k)], v);
    }
    std::swap(x, tmp_);
  }

  /// Scatter-form triangular solve in step space: for every node k in
  /// dependency order, x_k /= diag_k, then x_s -= g(k,s) x_k for edges k->s.
  /// `ascending` says edges point to larger indices.
  void solve(const Graph& g, const std::vector<double>* diag, WorkVector& x, bool ascending) {
    const int m = m_;
    if (m == 0) return;
    if (x.idx.size() * 10 > static_cast<std::size_t>(m)) {
      // Dense mode.
      for (int t = 0; t < m; ++t) {
        const int k = ascending ? t : m - 1 - t;
        double xk = x.val[static_cast<std::size_t>(k)];
        if (xk == 0.0) continue;
        if (diag) {
          xk /= (*diag)[static_cast<std::size_t>(k)];
          x.val[static_cast<std::size_t>(k)] = xk;
        }
        for (int p = g.start[static_cast<std::size_t>(k)]; p < g.start[static_cast<std::size_t>(k) + 1]; ++p)
          x.val[static_cast<std::size_t>(g.index[static_cast<std::size_t>(p)])] -= g.value[static_cast<std::size_t>(p)] * xk;
      }
      x.reindex();
      return;
    }
    // Hypersparse: topological order of the reach of the current pattern.
    topo_.clear();
    for (int i : x.idx) {
      if (visited_[static_cast<std::size_t>(i)]) continue;
      stack_.clear();
      child_.clear();
      stack_.push_back(i);
      child_.push_back(g.start[static_cast<std::size_t>(i)]);
      visited_[static_cast<std::size_t>(i)] = 1;
      while (!stack_.empty()) {
        const int k = stack_.back();
        int& c = child_.back();
        const int end = g.start[static_cast<std::size_t>(k) + 1];
        bool pushed = false;
        while (c < end) {
          const int s = g.index[static_cast<std::size_t>(c++)];
          if (visited_[static_cast<std::size_t>(s)]) continue;
          visited_[static_cast<std::size_t>(s)] = 1;
          stack_.push_back(s);
          child_.push_back(g.start[static_cast<std::size_t>(s)]);
          pushed = true;
          break;
        }
        if (!pushed) {
          topo_.push_back(k);
          stack_.pop_back();
          child_.pop_back();
        }
      }
    }
    for (auto it = topo_.rbegin(); it != topo_.rend(); ++it) {
      const int k = *it;
      visited_[static_cast<std::size_t>(k)] = 0;
      x.touch(k);
      double xk = x.val[static_cast<std::size_t>(k)];
      if (xk == 0.0) continue;
      if (diag) {
        xk /= (*diag)[static_cast<std::size_t>(k)];
        x.val[static_cast<std::size_t>(k)] = xk;
      }
      for (int p = g.start[static_cast<std::size_t>(k)]; p < g.start[static_cast<std::size_t>(k) + 1]; ++p)
        x.add(g.index[static_cast<std::size_t>(p)], -g.value[static_cast<std::size_t>(p)] * xk);
    }
  }
};

}  // namespace gridstore::lu
