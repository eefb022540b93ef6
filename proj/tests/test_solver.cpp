#include "collsynth/error.hpp"
#include "collsynth/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace collsynth;

namespace {

// Enumeration oracle: best objective over all feasible assignments, or NaN if none.
double enumerate_best(const BinaryProgram& p) {
  const int n = p.num_vars();
  double best = std::nan("");
  std::vector<std::uint8_t> x(static_cast<std::size_t>(n));
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    for (int j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] = (mask >> j) & 1u;
    if (check_feasible(p, x)) continue;
    const double v = objective_value(p, x);
    if (std::isnan(best) || v > best) best = v;
  }
  return best;
}

BinaryProgram random_program(std::mt19937_64& rng, int n, int rows, bool integral) {
  BinaryProgram p;
  std::uniform_int_distribution<int> coef(-4, 6);
  std::uniform_real_distribution<double> frac(-2.0, 5.0);
  for (int j = 0; j < n; ++j) p.add_variable("x" + std::to_string(j), integral ? coef(rng) : frac(rng));
  std::uniform_int_distribution<int> var(0, n - 1), width(2, std::min(n, 6)), rel(0, 5);
  for (int i = 0; i < rows; ++i) {
    std::vector<Term> terms;
    const int w = width(rng);
    for (int t = 0; t < w; ++t) terms.push_back({var(rng), static_cast<double>(coef(rng))});
    double lhs_max = 0;
    for (const Term& t : terms) lhs_max += std::max(0.0, t.coef);
    const int r = rel(rng);
    const Relation relation = r < 4 ? Relation::LessEqual : (r == 4 ? Relation::GreaterEqual : Relation::Equal);
    std::uniform_int_distribution<int> rhs(-1, static_cast<int>(lhs_max));
    p.add_constraint(terms, relation, rhs(rng));
  }
  return p;
}

}  // namespace

TEST(Solver, MatchesEnumerationOnRandomPrograms) {
  std::mt19937_64 rng(2024);
  int feasible = 0, infeasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 4 + trial % 13;
    BinaryProgram p = random_program(rng, n, 2 + trial % 9, trial % 3 != 0);
    if (trial % 7 == 0) p.fix(trial % n, true);
    const double oracle = enumerate_best(p);
    const SolveResult r = solve(p);
    if (std::isnan(oracle)) {
      EXPECT_EQ(r.status, SolveStatus::Infeasible) << "trial " << trial;
      ++infeasible;
      continue;
    }
    ++feasible;
    ASSERT_EQ(r.status, SolveStatus::Optimal) << "trial " << trial;
    EXPECT_NEAR(r.objective_value, oracle, 1e-6) << "trial " << trial;
    EXPECT_FALSE(check_feasible(p, r.assignment).has_value());
    EXPECT_NEAR(objective_value(p, r.assignment), r.objective_value, 1e-9);
    EXPECT_GE(r.best_bound, r.objective_value - 1e-6);
  }
  EXPECT_GT(feasible, 50);
  EXPECT_GT(infeasible, 5);
}

TEST(Solver, CutoffExcludesWeakSolutions) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const BinaryProgram p = random_program(rng, 8, 4, true);
    const double oracle = enumerate_best(p);
    if (std::isnan(oracle)) continue;
    SolveOptions o;
    o.cutoff = oracle - 0.5;
    EXPECT_EQ(solve(p, o).status, SolveStatus::Optimal);
    o.cutoff = oracle + 0.5;
    EXPECT_EQ(solve(p, o).status, SolveStatus::Infeasible);
  }
}

TEST(Solver, KnapsackAndCover) {
  BinaryProgram p;
  const int a = p.add_variable("a", 10), b = p.add_variable("b", 7), c = p.add_variable("c", 4), d = p.add_variable("d", 3);
  p.add_constraint({{a, 5}, {b, 4}, {c, 3}, {d, 2}}, Relation::LessEqual, 9);
  p.add_constraint({{c, 1}, {d, 1}}, Relation::GreaterEqual, 1);
  const SolveResult r = solve(p);
  ASSERT_EQ(r.status, SolveStatus::Optimal);
  // a + b overweight, so best is a + c (14) or a + d (13) or b + c + d (14)
  EXPECT_DOUBLE_EQ(r.objective_value, 14.0);
}

TEST(Solver, ConflictingFixingsAreInfeasible) {
  BinaryProgram p;
  const int x = p.add_variable("x", 1);
  p.fix(x, true);
  p.fix(x, false);
  EXPECT_TRUE(p.has_conflicting_fixings());
  EXPECT_EQ(solve(p).status, SolveStatus::Infeasible);
}

TEST(Solver, NodeLimitReportsIncumbentOrTimeout) {
  std::mt19937_64 rng(99);
  BinaryProgram p = random_program(rng, 30, 25, true);
  SolveOptions o;
  o.node_limit = 3;
  const SolveResult r = solve(p, o);
  EXPECT_LE(r.nodes_explored, 4);
  EXPECT_TRUE(r.status == SolveStatus::FeasibleIncumbent || r.status == SolveStatus::TimeoutNoIncumbent ||
              r.status == SolveStatus::Optimal || r.status == SolveStatus::Infeasible);
  if (r.has_solution()) EXPECT_FALSE(check_feasible(p, r.assignment).has_value());
}

TEST(Solver, DeterministicAcrossRuns) {
  std::mt19937_64 rng(3);
  const BinaryProgram p = random_program(rng, 16, 10, true);
  const SolveResult a = solve(p), b = solve(p);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.nodes_explored, b.nodes_explored);
}

TEST(Solver, ExportLpLayout) {
  BinaryProgram p;
  const int x = p.add_variable("h_0_1_2", 1.5), y = p.add_variable("s_0_1_2_0", 0);
  p.add_constraint({{x, 1}, {y, -1}}, Relation::LessEqual, 0);
  p.add_constraint({{x, 1}, {y, 1}}, Relation::Equal, 1);
  p.fix(y, false);
  const std::string lp = export_lp(p);
  const auto pos = [&](const char* s) { return lp.find(s); };
  ASSERT_NE(pos("Maximize"), std::string::npos);
  EXPECT_LT(pos("Maximize"), pos("Subject To"));
  EXPECT_LT(pos("Subject To"), pos("Bounds"));
  EXPECT_LT(pos("Bounds"), pos("Binary"));
  EXPECT_LT(pos("Binary"), pos("End"));
  EXPECT_NE(pos("1.5 h_0_1_2"), std::string::npos);
  EXPECT_NE(pos("s_0_1_2_0 = 0"), std::string::npos);
}

TEST(Solver, ImportSolution) {
  BinaryProgram p;
  p.add_variable("a", 1);
  p.add_variable("b", 2);
  const auto x = import_solution(p, "# from an external solver\nb 1\na 0\n");
  EXPECT_EQ(x, (std::vector<std::uint8_t>{0, 1}));
  EXPECT_EQ(import_solution(p, "a 1\n"), (std::vector<std::uint8_t>{1, 0}));
  EXPECT_THROW(import_solution(p, "c 1\n"), Error);
  EXPECT_THROW(import_solution(p, "a 0.5\n"), Error);
  EXPECT_THROW(import_solution(p, "a\n"), Error);
}
