#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "gridstore/formulation.hpp"
#include "gridstore/lp_format.hpp"
#include "support/fixtures.hpp"
#include "support/lp_reader.hpp"

using namespace gridstore;
using gridstore::testing::bundled_case;
using gridstore::testing::read_lp;
using gridstore::testing::toy_case;

namespace {

void expect_same_linear_instance(const ProblemInstance& a, const ProblemInstance& b) {
  ASSERT_EQ(a.columns.size(), b.columns.size());
  ASSERT_EQ(a.rows.size(), b.rows.size());
  EXPECT_EQ(a.objective_constant, b.objective_constant);
  std::map<std::string, std::size_t> in_b;
  for (std::size_t j = 0; j < b.columns.size(); ++j) in_b[b.columns[j].name] = j;
  ASSERT_EQ(in_b.size(), b.columns.size());
  for (const auto& c : a.columns) {
    ASSERT_TRUE(in_b.count(c.name)) << c.name;
    const auto& d = b.columns[in_b[c.name]];
    EXPECT_EQ(c.lb, d.lb) << c.name;
    EXPECT_EQ(c.ub, d.ub) << c.name;
    EXPECT_EQ(c.cost, d.cost) << c.name;
    EXPECT_EQ(c.binary, d.binary) << c.name;
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& r = a.rows[i];
    const auto& s = b.rows[i];
    EXPECT_EQ(r.name, s.name);
    EXPECT_EQ(r.sense, s.sense) << r.name;
    EXPECT_EQ(r.rhs, s.rhs) << r.name;
    ASSERT_EQ(r.terms.size(), s.terms.size()) << r.name;
    for (std::size_t t = 0; t < r.terms.size(); ++t) {
      EXPECT_EQ(a.columns[r.terms[t].col].name, b.columns[s.terms[t].col].name) << r.name;
      EXPECT_EQ(r.terms[t].coef, s.terms[t].coef) << r.name;
    }
  }
}

}  // namespace

TEST(ExportLp, ToyRowCountMatchesEmitter) {
  const auto c = toy_case();
  const auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 32});
  const auto back = read_lp(lp_text(pi));
  EXPECT_EQ(back.rows.size(), pi.rows.size());
  EXPECT_EQ(back.binaries().size(), pi.binaries().size());
}

TEST(ExportLp, FullDayRoundTrip) {
  const auto c = bundled_case();
  const auto pi = build_problem(c.network, c.grid, {Formulation::dc_mi, 32});
  expect_same_linear_instance(pi, read_lp(lp_text(pi)));
}

TEST(ExportLp, ConesNeedSnapshot) {
  const auto c = toy_case();
  const auto pi = build_problem(c.network, c.grid, {Formulation::soc_mi, 8});
  EXPECT_THROW(lp_text(pi), Error);
  LinearCut cut{{{0, 1.0}}, 5.0};
  const auto snap = oa_snapshot(pi, {cut});
  const auto back = read_lp(lp_text(snap));
  EXPECT_EQ(back.rows.size(), pi.rows.size() + 1);
}

TEST(ExportLp, WritesFile) {
  const auto c = toy_case();
  const auto pi = build_problem(c.network, c.grid, {Formulation::dc_relaxed, 4});
  const auto path = std::filesystem::temp_directory_path() / "gridstore_export_test.lp";
  export_lp(pi, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), lp_text(pi));
  std::filesystem::remove(path);
}

TEST(ExportJson, RoundTripKeepsConesAndNonlinear) {
  const auto c = toy_case();
  for (auto f : {Formulation::soc_mi, Formulation::ac_nl, Formulation::ac_mi}) {
    const auto pi = build_problem(c.network, c.grid, {f, 8});
    const auto doc = problem_to_json(pi);
    const auto back = problem_from_json(nlohmann::json::parse(doc.dump()));
    EXPECT_EQ(problem_to_json(back), doc) << to_string(f);
    EXPECT_EQ(back.cones.size(), pi.cones.size());
    EXPECT_EQ(back.nonlinear.size(), pi.nonlinear.size());
    EXPECT_EQ(back.index, pi.index);
  }
  const auto ac = build_problem(c.network, c.grid, {Formulation::ac_nl, 8});
  EXPECT_FALSE(ac.nonlinear.empty());
  EXPECT_THROW(lp_text(ac), Error);
}

TEST(ExportJson, RejectsForeignDocument) {
  EXPECT_THROW(problem_from_json(nlohmann::json{{"format", "other"}}), ParseError);
}
