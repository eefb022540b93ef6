#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace collsynth {

enum class Relation { LessEqual, Equal, GreaterEqual };

struct Term {
  int var = 0;
  double coef = 0.0;
};

struct Constraint {
  std::vector<Term> terms;
  Relation relation = Relation::LessEqual;
  double rhs = 0.0;
};

/// Maximization over binary variables with linear rows.
class BinaryProgram {
 public:
  int add_variable(std::string name, double objective = 0.0);
  int num_vars() const { return static_cast<int>(names_.size()); }

  const std::string& name(int v) const { return names_[static_cast<std::size_t>(v)]; }
  double objective(int v) const { return objective_[static_cast<std::size_t>(v)]; }
  void set_objective(int v, double coef) { objective_[static_cast<std::size_t>(v)] = coef; }

  void add_constraint(std::vector<Term> terms, Relation relation, double rhs);
  const std::vector<Constraint>& constraints() const { return rows_; }

  /// Fixes a variable (lb = ub = value). Conflicting fixings make the program infeasible.
  void fix(int v, bool value);
  std::optional<bool> fixed(int v) const;
  bool has_conflicting_fixings() const { return conflicting_; }

  /// Lower priority classes are branched on first; default 0.
  void set_branch_priority(int v, int priority) { priority_[static_cast<std::size_t>(v)] = priority; }
  int branch_priority(int v) const { return priority_[static_cast<std::size_t>(v)]; }

 private:
  std::vector<std::string> names_;
  std::vector<double> objective_;
  std::vector<std::int8_t> fixed_;  // -1 free
  std::vector<int> priority_;
  std::vector<Constraint> rows_;
  bool conflicting_ = false;
};

enum class SolveStatus { Optimal, FeasibleIncumbent, Infeasible, TimeoutNoIncumbent };

const char* to_string(SolveStatus status);

struct SolveOptions {
  double time_limit_s = 60.0;
  std::uint64_t seed = 0;  // accepted for interface symmetry; the search is deterministic
  /// Only solutions with objective strictly above the cutoff are sought.
  std::optional<double> cutoff;
  std::int64_t node_limit = -1;
  /// Stop this many nodes after the first incumbent (-1 = search to proof).
  std::int64_t nodes_after_incumbent = -1;
  int lp_iterations = 3000;
};

struct SolveResult {
  SolveStatus status = SolveStatus::TimeoutNoIncumbent;
  std::vector<std::uint8_t> assignment;
  double objective_value = 0.0;
  double best_bound = 0.0;
  std::int64_t nodes_explored = 0;
  double wall_time_s = 0.0;
  bool time_limit_hit = false;

  bool has_solution() const {
    return status == SolveStatus::Optimal || status == SolveStatus::FeasibleIncumbent;
  }
};

SolveResult solve(const BinaryProgram& p, const SolveOptions& options = {});

/// First violated row (or fixing) as text; nullopt when the assignment is feasible.
std::optional<std::string> check_feasible(const BinaryProgram& p, const std::vector<std::uint8_t>& x);
double objective_value(const BinaryProgram& p, const std::vector<std::uint8_t>& x);

/// CPLEX LP text: Maximize, Subject To, Bounds (fixings), Binary, End.
std::string export_lp(const BinaryProgram& p);
/// Parses `<name> <value>` lines ('#' starts a comment); unnamed variables default to 0.
std::vector<std::uint8_t> import_solution(const BinaryProgram& p, const std::string& text);

}  // namespace collsynth
