#include <gtest/gtest.h>

#include <random>

#include "gridstore/simplex.hpp"

using namespace gridstore;

namespace {

LinearProgram one_var(double lb, double ub, double cost, std::vector<std::pair<double, double>> rows) {
  LinearProgramBuilder b;
  b.add_column(lb, ub, cost);
  for (auto [lo, hi] : rows) b.add_row({{0, 1.0}}, lo, hi);
  return b.build();
}

class SimplexAlg : public ::testing::TestWithParam<LpAlgorithm> {
protected:
  LpOptions opts() const {
    LpOptions o;
    o.algorithm = GetParam();
    return o;
  }
};

}  // namespace

TEST_P(SimplexAlg, MaximizeSingleVariable) {
  // max x s.t. x <= 5, x >= 0 written as min -x.
  auto lp = one_var(0.0, kInf, -1.0, {{-kInf, 5.0}});
  auto r = solve_lp(lp, opts());
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.x[0], 5.0, 1e-9);
  EXPECT_NEAR(-r.objective, 5.0, 1e-9);
}

TEST_P(SimplexAlg, InfeasiblePair) {
  auto lp = one_var(-kInf, kInf, 0.0, {{-kInf, 1.0}, {2.0, kInf}});
  EXPECT_EQ(solve_lp(lp, opts()).status, LpStatus::infeasible);
}

TEST_P(SimplexAlg, Unbounded) {
  auto lp = one_var(0.0, kInf, -1.0, {{1.0, kInf}});
  EXPECT_EQ(solve_lp(lp, opts()).status, LpStatus::unbounded);
}

TEST_P(SimplexAlg, DegenerateDuplicateRowsTerminate) {
  // min -x - y  s.t. x + y <= 1 (three copies), x - y <= 0 (twice), x, y >= 0
  LinearProgramBuilder b;
  b.add_column(0.0, kInf, -1.0);
  b.add_column(0.0, kInf, -1.0);
  for (int i = 0; i < 3; ++i) b.add_row({{0, 1.0}, {1, 1.0}}, -kInf, 1.0);
  for (int i = 0; i < 2; ++i) b.add_row({{0, 1.0}, {1, -1.0}}, -kInf, 0.0);
  b.add_row({{0, 1.0}}, -kInf, 0.0);
  auto r = solve_lp(b.build(), opts());
  ASSERT_EQ(r.status, LpStatus::optimal);
  EXPECT_NEAR(r.objective, -1.0, 1e-9);
}

TEST_P(SimplexAlg, TransportationProblem) {
  // 2 supplies (20, 30), 3 demands (10, 25, 15), costs c_ij.
  const double c[2][3] = {{8, 6, 10}, {9, 12, 13}};
  LinearProgramBuilder b;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) b.add_column(0.0, kInf, c[i][j]);
  b.add_row({{0, 1}, {1, 1}, {2, 1}}, -kInf, 20);
  b.add_row({{3, 1}, {4, 1}, {5, 1}}, -kInf, 30);
  b.add_row({{0, 1}, {3, 1}}, 10, 10);
  b.add_row({{1, 1}, {4, 1}}, 25, 25);
  b.add_row({{2, 1}, {5, 1}}, 15, 15);
  auto r = solve_lp(b.build(), opts());
  ASSERT_EQ(r.status, LpStatus::optimal);
  // Optimum: x12=20, x21=10, x22=5, x23=15 -> 120 + 90 + 60 + 195 = 465.
  EXPECT_NEAR(r.objective, 465.0, 1e-7);
}

TEST_P(SimplexAlg, BoundFlipsAndFreeVariables) {
  // min x - 2y + z  with y free, -1 <= x <= 1, 0 <= z <= 4, x + y + z = 2, y - z <= 1
  LinearProgramBuilder b;
  b.add_column(-1.0, 1.0, 1.0);
  b.add_column(-kInf, kInf, -2.0);
  b.add_column(0.0, 4.0, 1.0);
  b.add_row({{0, 1}, {1, 1}, {2, 1}}, 2.0, 2.0);
  b.add_row({{1, 1}, {2, -1}}, -kInf, 1.0);
  auto r = solve_lp(b.build(), opts());
  ASSERT_EQ(r.status, LpStatus::optimal);
  // y = 1 + z, x = 2 - y - z = 1 - 2z ; obj = 1 - 2z - 2 - 2z + z = -1 - 3z ; x >= -1 -> z <= 1.
  EXPECT_NEAR(r.objective, -4.0, 1e-9);
  EXPECT_NEAR(r.x[2], 1.0, 1e-9);
}

TEST_P(SimplexAlg, WarmStartReusesBasis) {
  LinearProgramBuilder b;
  b.add_column(0.0, 10.0, -1.0);
  b.add_column(0.0, 10.0, -2.0);
  b.add_row({{0, 1}, {1, 1}}, -kInf, 12.0);
  auto lp = b.build();
  auto r1 = solve_lp(lp, opts());
  ASSERT_EQ(r1.status, LpStatus::optimal);
  EXPECT_NEAR(r1.objective, -22.0, 1e-9);
  lp.col_ub[1] = 5.0;
  auto r2 = solve_lp(lp, opts(), &r1.basis);
  ASSERT_EQ(r2.status, LpStatus::optimal);
  EXPECT_NEAR(r2.objective, -17.0, 1e-9);
}

TEST_P(SimplexAlg, WarmStartAfterAppendedRow) {
  // min -x - y, x + y <= 4, x, y in [0, 3]; then add x - y >= 2.
  LinearProgramBuilder b;
  b.add_column(0.0, 3.0, -1.0);
  b.add_column(0.0, 3.0, -1.0);
  b.add_row({{0, 1}, {1, 1}}, -kInf, 4.0);
  auto r1 = solve_lp(b.build(), opts());
  ASSERT_EQ(r1.status, LpStatus::optimal);
  EXPECT_NEAR(r1.objective, -4.0, 1e-9);
  b.add_row({{0, 1}, {1, -1}}, 2.0, kInf);
  Basis warm = r1.basis;
  warm.status.push_back(VarStatus::basic);
  auto r2 = solve_lp(b.build(), opts(), &warm);
  ASSERT_EQ(r2.status, LpStatus::optimal);
  EXPECT_NEAR(r2.objective, -4.0, 1e-9);
  EXPECT_GE(r2.x[0] - r2.x[1], 2.0 - 1e-9);
}

TEST_P(SimplexAlg, RandomFeasibleLpsAgreeWithOtherAlgorithm) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 4 + trial % 9, m = 3 + trial % 7;
    std::vector<double> x0(static_cast<std::size_t>(n));
    LinearProgramBuilder b;
    for (int j = 0; j < n; ++j) {
      x0[static_cast<std::size_t>(j)] = u(rng);
      const bool boxed = j % 3 != 0;
      b.add_column(boxed ? -2.0 : -kInf, boxed ? 2.0 : kInf, u(rng));
    }
    // Rows around a known point keep it feasible; a box row bounds free columns.
    for (int i = 0; i < m; ++i) {
      std::vector<Term> t;
      double act = 0.0;
      for (int j = 0; j < n; ++j)
        if ((i + j) % 2 == 0 || j == i % n) {
          const double a = u(rng);
          t.push_back({static_cast<std::size_t>(j), a});
          act += a * x0[static_cast<std::size_t>(j)];
        }
      b.add_row(t, act - 1.0, i % 3 == 0 ? act : kInf);
    }
    for (int j = 0; j < n; j += 3) b.add_row({{static_cast<std::size_t>(j), 1.0}}, -5.0, 5.0);
    auto lp = b.build();
    LpOptions other = opts();
    other.algorithm = GetParam() == LpAlgorithm::dual ? LpAlgorithm::primal : LpAlgorithm::dual;
    auto a = solve_lp(lp, opts());
    auto c = solve_lp(lp, other);
    ASSERT_EQ(a.status, LpStatus::optimal) << trial;
    ASSERT_EQ(c.status, LpStatus::optimal) << trial;
    EXPECT_NEAR(a.objective, c.objective, 1e-7 * (1.0 + std::abs(c.objective))) << trial;
    EXPECT_LE(lp.max_violation(a.x), 1e-7) << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(Algorithms, SimplexAlg, ::testing::Values(LpAlgorithm::dual, LpAlgorithm::primal),
                         [](const auto& info) { return info.param == LpAlgorithm::dual ? "dual" : "primal"; });
