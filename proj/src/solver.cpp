#include "collsynth/solver.hpp"

#include "collsynth/error.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace collsynth {

int BinaryProgram::add_variable(std::string name, double objective) {
  names_.push_back(std::move(name));
  objective_.push_back(objective);
  fixed_.push_back(-1);
  priority_.push_back(0);
  return num_vars() - 1;
}

void BinaryProgram::add_constraint(std::vector<Term> terms, Relation relation, double rhs) {
  for (const Term& t : terms) {
    if (t.var < 0 || t.var >= num_vars()) throw Error(ErrorCode::InvalidInput, "constraint references unknown variable");
    if (!std::isfinite(t.coef)) throw Error(ErrorCode::InvalidInput, "non-finite coefficient");
  }
  if (!std::isfinite(rhs)) throw Error(ErrorCode::InvalidInput, "non-finite right-hand side");
  rows_.push_back(Constraint{std::move(terms), relation, rhs});
}

void BinaryProgram::fix(int v, bool value) {
  std::int8_t& f = fixed_[static_cast<std::size_t>(v)];
  const std::int8_t want = value ? 1 : 0;
  if (f >= 0 && f != want) conflicting_ = true;
  f = want;
}

std::optional<bool> BinaryProgram::fixed(int v) const {
  const std::int8_t f = fixed_[static_cast<std::size_t>(v)];
  if (f < 0) return std::nullopt;
  return f == 1;
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleIncumbent: return "feasible-incumbent";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::TimeoutNoIncumbent: return "timeout-no-incumbent";
  }
  return "unknown";
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// All rows rewritten as sum(a x) <= b with merged duplicate terms.
struct Model {
  int n = 0;
  int m = 0;
  std::vector<double> obj;
  std::vector<int> row_start{0};
  std::vector<int> row_var;
  std::vector<double> row_coef;
  std::vector<double> rhs;
  std::vector<double> maxabs;
  std::vector<int> col_start;
  std::vector<int> col_row;
  std::vector<double> col_coef;
  bool integral_objective = true;
};

Model build_model(const BinaryProgram& p) {
  Model md;
  md.n = p.num_vars();
  md.obj.resize(static_cast<std::size_t>(md.n));
  for (int j = 0; j < md.n; ++j) {
    md.obj[static_cast<std::size_t>(j)] = p.objective(j);
    if (std::abs(p.objective(j) - std::round(p.objective(j))) > 1e-12) md.integral_objective = false;
  }
  std::map<int, double> merged;
  auto emit = [&](double sign, double b) {
    double mx = 0.0;
    for (const auto& [v, a] : merged) {
      if (a == 0.0) continue;
      md.row_var.push_back(v);
      md.row_coef.push_back(sign * a);
      mx = std::max(mx, std::abs(a));
    }
    md.row_start.push_back(static_cast<int>(md.row_var.size()));
    md.rhs.push_back(sign * b);
    md.maxabs.push_back(mx);
    ++md.m;
  };
  for (const Constraint& c : p.constraints()) {
    merged.clear();
    for (const Term& t : c.terms) merged[t.var] += t.coef;
    if (c.relation != Relation::GreaterEqual) emit(1.0, c.rhs);
    if (c.relation != Relation::LessEqual) emit(-1.0, c.rhs);
  }
  std::vector<int> count(static_cast<std::size_t>(md.n) + 1, 0);
  for (int v : md.row_var) ++count[static_cast<std::size_t>(v) + 1];
  md.col_start.assign(static_cast<std::size_t>(md.n) + 1, 0);
  for (int j = 0; j < md.n; ++j) {
    md.col_start[static_cast<std::size_t>(j) + 1] = md.col_start[static_cast<std::size_t>(j)] + count[static_cast<std::size_t>(j) + 1];
  }
  md.col_row.resize(md.row_var.size());
  md.col_coef.resize(md.row_var.size());
  std::vector<int> fill(md.col_start.begin(), md.col_start.end() - 1);
  for (int i = 0; i < md.m; ++i) {
    for (int k = md.row_start[static_cast<std::size_t>(i)]; k < md.row_start[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = md.row_var[static_cast<std::size_t>(k)];
      const int pos = fill[static_cast<std::size_t>(j)]++;
      md.col_row[static_cast<std::size_t>(pos)] = i;
      md.col_coef[static_cast<std::size_t>(pos)] = md.row_coef[static_cast<std::size_t>(k)];
    }
  }
  return md;
}

// LP value above which a dive tries 1 first.
constexpr double kDiveUp = 0.01;

struct TreeNode {
  int parent = -1;
  int var = -1;
  std::int8_t value = 0;
};

struct OpenNode {
  double bound;
  std::int64_t seq;
  int node;
};

// Heap order: depth-first (most recent) until the first incumbent, best bound after.
struct OpenOrder {
  const bool* best_first;
  bool operator()(const OpenNode& a, const OpenNode& b) const {
    if (*best_first && a.bound != b.bound) return a.bound < b.bound;
    return a.seq < b.seq;
  }
};

class OpenSet {
 public:
  explicit OpenSet(const bool* best_first) : order_{best_first} {}
  bool empty() const { return heap_.empty(); }
  const OpenNode& top() const { return heap_.front(); }
  void push(OpenNode n) {
    heap_.push_back(n);
    std::push_heap(heap_.begin(), heap_.end(), order_);
  }
  void pop() {
    std::pop_heap(heap_.begin(), heap_.end(), order_);
    heap_.pop_back();
  }
  void reorder() { std::make_heap(heap_.begin(), heap_.end(), order_); }
  // Largest bound among open nodes.
  double max_bound() const {
    double b = -std::numeric_limits<double>::infinity();
    for (const OpenNode& n : heap_) b = std::max(b, n.bound);
    return b;
  }

 private:
  OpenOrder order_;
  std::vector<OpenNode> heap_;
};

class Search {
 public:
  Search(const Model& md, const BinaryProgram& p, const SolveOptions& opt, Clock::time_point start)
      : md_(md), p_(p), opt_(opt), start_(start) {}

  SolveResult run();

 private:
  const Model& md_;
  const BinaryProgram& p_;
  const SolveOptions& opt_;
  Clock::time_point start_;

  std::vector<std::int8_t> val_;
  std::vector<double> minact_;
  std::vector<int> trail_;
  std::vector<std::size_t> marks_;
  std::vector<int> queue_;
  std::size_t queue_head_ = 0;
  std::vector<char> queued_;

  std::vector<double> rc_;   // reduced costs for the Lagrangian bound
  std::vector<int> rc_order_;
  double bound_ = std::numeric_limits<double>::infinity();
  bool have_bound_ = false;

  std::vector<double> lp_x_;
  std::vector<int> branch_order_;
  std::size_t cursor_ = 0;

  double need_ = -std::numeric_limits<double>::infinity();
  bool have_incumbent_ = false;
  std::vector<std::uint8_t> incumbent_;
  double incumbent_value_ = 0.0;
  std::int64_t nodes_ = 0;
  std::int64_t incumbent_node_ = -1;
  bool stopped_ = false;
  bool time_hit_ = false;

  std::vector<TreeNode> tree_;

  void enqueue(int i) {
    if (queued_[static_cast<std::size_t>(i)]) return;
    const double slack = md_.rhs[static_cast<std::size_t>(i)] - minact_[static_cast<std::size_t>(i)];
    if (slack >= md_.maxabs[static_cast<std::size_t>(i)] - 1e-9) return;
    queued_[static_cast<std::size_t>(i)] = 1;
    queue_.push_back(i);
  }

  void assign(int j, std::int8_t v) {
    val_[static_cast<std::size_t>(j)] = v;
    trail_.push_back(j);
    if (have_bound_) {
      const double r = rc_[static_cast<std::size_t>(j)];
      bound_ += (v ? r : 0.0) - std::max(0.0, r);
    }
    for (int k = md_.col_start[static_cast<std::size_t>(j)]; k < md_.col_start[static_cast<std::size_t>(j) + 1]; ++k) {
      const int i = md_.col_row[static_cast<std::size_t>(k)];
      const double a = md_.col_coef[static_cast<std::size_t>(k)];
      if ((v == 1 && a > 0) || (v == 0 && a < 0)) {
        minact_[static_cast<std::size_t>(i)] += std::abs(a);
        enqueue(i);
      }
    }
  }

  void unassign(int j) {
    const std::int8_t v = val_[static_cast<std::size_t>(j)];
    if (have_bound_) {
      const double r = rc_[static_cast<std::size_t>(j)];
      bound_ -= (v ? r : 0.0) - std::max(0.0, r);
    }
    for (int k = md_.col_start[static_cast<std::size_t>(j)]; k < md_.col_start[static_cast<std::size_t>(j) + 1]; ++k) {
      const double a = md_.col_coef[static_cast<std::size_t>(k)];
      if ((v == 1 && a > 0) || (v == 0 && a < 0)) minact_[static_cast<std::size_t>(md_.col_row[static_cast<std::size_t>(k)])] -= std::abs(a);
    }
    val_[static_cast<std::size_t>(j)] = -1;
  }

  void clear_queue() {
    for (std::size_t q = queue_head_; q < queue_.size(); ++q) queued_[static_cast<std::size_t>(queue_[q])] = 0;
    queue_.clear();
    queue_head_ = 0;
  }

  bool propagate() {
    while (queue_head_ < queue_.size()) {
      const int i = queue_[queue_head_++];
      queued_[static_cast<std::size_t>(i)] = 0;
      const double slack = md_.rhs[static_cast<std::size_t>(i)] - minact_[static_cast<std::size_t>(i)];
      if (slack < -1e-9) {
        clear_queue();
        return false;
      }
      for (int k = md_.row_start[static_cast<std::size_t>(i)]; k < md_.row_start[static_cast<std::size_t>(i) + 1]; ++k) {
        const int j = md_.row_var[static_cast<std::size_t>(k)];
        if (val_[static_cast<std::size_t>(j)] >= 0) continue;
        const double a = md_.row_coef[static_cast<std::size_t>(k)];
        if (std::abs(a) > slack + 1e-9) assign(j, a > 0 ? 0 : 1);
      }
    }
    queue_.clear();
    queue_head_ = 0;
    return true;
  }

  double tolerance() const { return 1e-6 * std::max(1.0, std::abs(need_)); }
  bool pruned() const { return have_bound_ && bound_ < need_ - tolerance(); }

  // Propagation plus reduced-cost fixing to a fixpoint; false on conflict or prune.
  bool settle() {
    for (;;) {
      if (!propagate()) return false;
      if (pruned()) return false;
      if (!have_bound_ || !std::isfinite(need_)) return true;
      bool changed = false;
      const double room = bound_ - need_ + tolerance();
      for (int j : rc_order_) {
        const double r = rc_[static_cast<std::size_t>(j)];
        if (std::abs(r) <= room) break;
        if (val_[static_cast<std::size_t>(j)] >= 0) continue;
        assign(j, r > 0 ? 1 : 0);
        changed = true;
      }
      if (!changed) return true;
    }
  }

  void backtrack_to(std::size_t level) {
    while (marks_.size() > level) {
      const std::size_t mark = marks_.back();
      marks_.pop_back();
      while (trail_.size() > mark) {
        unassign(trail_.back());
        trail_.pop_back();
      }
    }
  }

  int next_branch_var() {
    while (cursor_ < branch_order_.size() && val_[static_cast<std::size_t>(branch_order_[cursor_])] >= 0) ++cursor_;
    return cursor_ < branch_order_.size() ? branch_order_[cursor_] : -1;
  }

  void update_need() {
    const double step = md_.integral_objective ? 1.0 : 1e-9;
    need_ = -std::numeric_limits<double>::infinity();
    if (opt_.cutoff) need_ = md_.integral_objective ? std::floor(*opt_.cutoff + 1e-9) + 1.0 : *opt_.cutoff + step;
    if (have_incumbent_) need_ = std::max(need_, incumbent_value_ + step);
  }

  void record_leaf() {
    double value = 0.0;
    for (int j = 0; j < md_.n; ++j) value += md_.obj[static_cast<std::size_t>(j)] * val_[static_cast<std::size_t>(j)];
    if (value < need_ - 1e-9) return;
    incumbent_.assign(val_.begin(), val_.end());
    incumbent_value_ = value;
    if (!have_incumbent_) incumbent_node_ = nodes_;
    have_incumbent_ = true;
    update_need();
  }

  bool out_of_budget() {
    if (opt_.node_limit >= 0 && nodes_ >= opt_.node_limit) return true;
    if (have_incumbent_ && opt_.nodes_after_incumbent >= 0 && nodes_ - incumbent_node_ >= opt_.nodes_after_incumbent) {
      return true;
    }
    if ((nodes_ & 31) == 0 && seconds_since(start_) > opt_.time_limit_s) {
      time_hit_ = true;
      return true;
    }
    return false;
  }

  void root_lp();
  bool restore(int node);
  void dive(int node, OpenSet& open, std::int64_t& seq);
};

// Diagonally preconditioned primal-dual hybrid gradient on the LP relaxation of the
// current (root) subproblem. Every dual iterate y >= 0 yields the valid Lagrangian bound
// b'y + sum_j max(0, c_j - (A'y)_j); the best one is kept.
void Search::root_lp() {
  std::vector<int> free_vars;
  std::vector<int> col_of(static_cast<std::size_t>(md_.n), -1);
  for (int j = 0; j < md_.n; ++j) {
    if (val_[static_cast<std::size_t>(j)] < 0) {
      col_of[static_cast<std::size_t>(j)] = static_cast<int>(free_vars.size());
      free_vars.push_back(j);
    }
  }
  double fixed_obj = 0.0;
  for (int j = 0; j < md_.n; ++j) {
    if (val_[static_cast<std::size_t>(j)] == 1) fixed_obj += md_.obj[static_cast<std::size_t>(j)];
  }
  rc_.assign(static_cast<std::size_t>(md_.n), 0.0);
  lp_x_.assign(static_cast<std::size_t>(md_.n), 0.0);
  for (int j = 0; j < md_.n; ++j) {
    if (val_[static_cast<std::size_t>(j)] >= 0) lp_x_[static_cast<std::size_t>(j)] = val_[static_cast<std::size_t>(j)];
  }

  const int nf = static_cast<int>(free_vars.size());
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> b;
  for (int i = 0; i < md_.m; ++i) {
    double bi = md_.rhs[static_cast<std::size_t>(i)];
    bool any = false;
    for (int k = md_.row_start[static_cast<std::size_t>(i)]; k < md_.row_start[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = md_.row_var[static_cast<std::size_t>(k)];
      const double a = md_.row_coef[static_cast<std::size_t>(k)];
      if (val_[static_cast<std::size_t>(j)] >= 0) {
        bi -= a * val_[static_cast<std::size_t>(j)];
      } else {
        any = true;
      }
    }
    if (!any) continue;
    const int r = static_cast<int>(b.size());
    for (int k = md_.row_start[static_cast<std::size_t>(i)]; k < md_.row_start[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = md_.row_var[static_cast<std::size_t>(k)];
      if (val_[static_cast<std::size_t>(j)] < 0) trip.emplace_back(r, col_of[static_cast<std::size_t>(j)], md_.row_coef[static_cast<std::size_t>(k)]);
    }
    b.push_back(bi);
  }
  const int mr = static_cast<int>(b.size());
  Eigen::SparseMatrix<double, Eigen::RowMajor> A(mr, nf);
  A.setFromTriplets(trip.begin(), trip.end());
  const Eigen::SparseMatrix<double, Eigen::RowMajor> At = A.transpose();

  Eigen::VectorXd c(nf), bv(mr), tau(nf), sigma(mr);
  for (int q = 0; q < nf; ++q) c[q] = md_.obj[static_cast<std::size_t>(free_vars[static_cast<std::size_t>(q)])];
  for (int r = 0; r < mr; ++r) bv[r] = b[static_cast<std::size_t>(r)];
  tau.setZero();
  sigma.setZero();
  for (int r = 0; r < mr; ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, r); it; ++it) {
      sigma[r] += std::abs(it.value());
      tau[it.col()] += std::abs(it.value());
    }
  }
  for (int q = 0; q < nf; ++q) tau[q] = tau[q] > 0 ? 1.0 / tau[q] : 1.0;
  for (int r = 0; r < mr; ++r) sigma[r] = sigma[r] > 0 ? 1.0 / sigma[r] : 1.0;

  Eigen::VectorXd x = Eigen::VectorXd::Zero(nf), y = Eigen::VectorXd::Zero(mr);
  Eigen::VectorXd best_y = y;
  auto dual_value = [&](const Eigen::VectorXd& yy, Eigen::VectorXd& aty) {
    aty = At * yy;
    return bv.dot(yy) + (c - aty).cwiseMax(0.0).sum();
  };
  Eigen::VectorXd aty;
  double best = dual_value(y, aty);
  double last_check = best;
  const double lp_budget = 0.25 * opt_.time_limit_s;
  for (int it = 0; it < opt_.lp_iterations; ++it) {
    const Eigen::VectorXd xn = (x + tau.cwiseProduct(c - aty)).cwiseMax(0.0).cwiseMin(1.0);
    const Eigen::VectorXd xbar = 2.0 * xn - x;
    y = (y + sigma.cwiseProduct(A * xbar - bv)).cwiseMax(0.0);
    x = xn;
    const double g = dual_value(y, aty);
    if (g < best) {
      best = g;
      best_y = y;
    }
    if (fixed_obj + best < need_ - tolerance()) break;
    if ((it + 1) % 200 == 0) {
      if (last_check - best < 1e-5 * std::max(1.0, std::abs(best))) break;
      last_check = best;
      if (seconds_since(start_) > lp_budget) break;
    }
  }

  const Eigen::VectorXd best_aty = At * best_y;
  bound_ = fixed_obj + bv.dot(best_y);
  for (int q = 0; q < nf; ++q) {
    const int j = free_vars[static_cast<std::size_t>(q)];
    const double r = c[q] - best_aty[q];
    rc_[static_cast<std::size_t>(j)] = r;
    bound_ += std::max(0.0, r);
    lp_x_[static_cast<std::size_t>(j)] = x[q];
  }
  have_bound_ = true;
  rc_order_ = free_vars;
  std::stable_sort(rc_order_.begin(), rc_order_.end(), [&](int a, int b2) {
    return std::abs(rc_[static_cast<std::size_t>(a)]) > std::abs(rc_[static_cast<std::size_t>(b2)]);
  });
}

bool Search::restore(int node) {
  backtrack_to(1);
  std::vector<int> path;
  for (int v = node; v > 0; v = tree_[static_cast<std::size_t>(v)].parent) path.push_back(v);
  cursor_ = 0;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const TreeNode& tn = tree_[static_cast<std::size_t>(*it)];
    marks_.push_back(trail_.size());
    if (val_[static_cast<std::size_t>(tn.var)] >= 0) {
      if (val_[static_cast<std::size_t>(tn.var)] != tn.value) return false;
      continue;
    }
    assign(tn.var, tn.value);
    if (!settle()) return false;
  }
  return true;
}

void Search::dive(int node, OpenSet& open, std::int64_t& seq) {
  int cur = node;
  for (;;) {
    ++nodes_;
    if (out_of_budget()) {
      stopped_ = true;
      // keep the unexplored remainder so the reported bound stays valid
      open.push(OpenNode{have_bound_ ? bound_ : std::numeric_limits<double>::infinity(), seq++, cur});
      return;
    }
    if (!settle()) return;
    const int j = next_branch_var();
    if (j < 0) {
      record_leaf();
      return;
    }
    const std::int8_t pref = lp_x_[static_cast<std::size_t>(j)] > kDiveUp ? 1 : 0;
    tree_.push_back(TreeNode{cur, j, static_cast<std::int8_t>(1 - pref)});
    open.push(OpenNode{have_bound_ ? bound_ : 0.0, seq++, static_cast<int>(tree_.size()) - 1});
    tree_.push_back(TreeNode{cur, j, pref});
    cur = static_cast<int>(tree_.size()) - 1;
    marks_.push_back(trail_.size());
    assign(j, pref);
  }
}

SolveResult Search::run() {
  SolveResult res;
  val_.assign(static_cast<std::size_t>(md_.n), -1);
  minact_.assign(static_cast<std::size_t>(md_.m), 0.0);
  queued_.assign(static_cast<std::size_t>(md_.m), 0);
  for (int i = 0; i < md_.m; ++i) {
    for (int k = md_.row_start[static_cast<std::size_t>(i)]; k < md_.row_start[static_cast<std::size_t>(i) + 1]; ++k) {
      minact_[static_cast<std::size_t>(i)] += std::min(0.0, md_.row_coef[static_cast<std::size_t>(k)]);
    }
  }
  update_need();

  auto finish = [&](SolveStatus st) {
    res.status = st;
    res.nodes_explored = nodes_;
    res.wall_time_s = seconds_since(start_);
    res.time_limit_hit = time_hit_;
    if (have_incumbent_) {
      res.assignment = incumbent_;
      res.objective_value = incumbent_value_;
    }
    return res;
  };

  // Root: program fixings, then full propagation.
  marks_.push_back(0);
  bool ok = !p_.has_conflicting_fixings();
  for (int j = 0; ok && j < md_.n; ++j) {
    if (auto f = p_.fixed(j)) {
      if (val_[static_cast<std::size_t>(j)] < 0) {
        assign(j, *f ? 1 : 0);
      } else if (val_[static_cast<std::size_t>(j)] != (*f ? 1 : 0)) {
        ok = false;
      }
      ok = ok && propagate();
    }
  }
  for (int i = 0; ok && i < md_.m; ++i) {
    queued_[static_cast<std::size_t>(i)] = 1;
    queue_.push_back(i);
  }
  ok = ok && propagate();
  if (!ok) {
    res.best_bound = -std::numeric_limits<double>::infinity();
    return finish(SolveStatus::Infeasible);
  }

  root_lp();
  res.best_bound = bound_;
  if (!settle()) {
    return finish(SolveStatus::Infeasible);
  }

  branch_order_.clear();
  for (int j = 0; j < md_.n; ++j) {
    if (val_[static_cast<std::size_t>(j)] < 0) branch_order_.push_back(j);
  }
  std::stable_sort(branch_order_.begin(), branch_order_.end(), [&](int a, int b) {
    const int pa = p_.branch_priority(a), pb = p_.branch_priority(b);
    if (pa != pb) return pa < pb;
    return lp_x_[static_cast<std::size_t>(a)] > lp_x_[static_cast<std::size_t>(b)];
  });

  marks_.push_back(trail_.size());  // level 1 = settled root
  tree_.push_back(TreeNode{});
  bool best_first = false;
  OpenSet open(&best_first);
  std::int64_t seq = 0;
  open.push(OpenNode{bound_, seq++, 0});
  while (!open.empty() && !stopped_) {
    if (have_incumbent_ && !best_first) {
      best_first = true;
      open.reorder();
    }
    const OpenNode top = open.top();
    open.pop();
    if (top.bound < need_ - tolerance()) {
      if (best_first) {
        open.push(top);
        break;
      }
      continue;
    }
    if (!restore(top.node)) {
      ++nodes_;
      continue;
    }
    dive(top.node, open, seq);
  }

  double remaining_bound = -std::numeric_limits<double>::infinity();
  if (!open.empty()) remaining_bound = open.max_bound();
  if (have_incumbent_) {
    res.best_bound = std::max(incumbent_value_, std::min(res.best_bound, remaining_bound));
  }
  if (stopped_ && !open.empty() && remaining_bound >= need_ - tolerance()) {
    return finish(have_incumbent_ ? SolveStatus::FeasibleIncumbent : SolveStatus::TimeoutNoIncumbent);
  }
  return finish(have_incumbent_ ? SolveStatus::Optimal : SolveStatus::Infeasible);
}

}  // namespace

SolveResult solve(const BinaryProgram& p, const SolveOptions& options) {
  const auto start = Clock::now();
  if (!(options.time_limit_s > 0)) throw Error(ErrorCode::InvalidInput, "time limit must be positive");
  const Model md = build_model(p);
  Search search(md, p, options, start);
  return search.run();
}

std::optional<std::string> check_feasible(const BinaryProgram& p, const std::vector<std::uint8_t>& x) {
  if (static_cast<int>(x.size()) != p.num_vars()) return "assignment size mismatch";
  for (int j = 0; j < p.num_vars(); ++j) {
    if (x[static_cast<std::size_t>(j)] > 1) return "non-binary value for " + p.name(j);
    if (auto f = p.fixed(j); f && (x[static_cast<std::size_t>(j)] == 1) != *f) return "fixing violated for " + p.name(j);
  }
  const auto& rows = p.constraints();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double lhs = 0.0;
    for (const Term& t : rows[i].terms) lhs += t.coef * x[static_cast<std::size_t>(t.var)];
    const double tol = 1e-9 * std::max(1.0, std::abs(rows[i].rhs));
    const bool ok = rows[i].relation == Relation::LessEqual    ? lhs <= rows[i].rhs + tol
                    : rows[i].relation == Relation::GreaterEqual ? lhs >= rows[i].rhs - tol
                                                                 : std::abs(lhs - rows[i].rhs) <= tol;
    if (!ok) return "row " + std::to_string(i) + " violated";
  }
  return std::nullopt;
}

double objective_value(const BinaryProgram& p, const std::vector<std::uint8_t>& x) {
  double v = 0.0;
  for (int j = 0; j < p.num_vars(); ++j) v += p.objective(j) * x[static_cast<std::size_t>(j)];
  return v;
}

namespace {

std::string format_coef(double a) {
  std::ostringstream out;
  out.precision(17);
  out << a;
  return out.str();
}

// Appends "+ a name" pieces, breaking lines before they get long.
void write_terms(std::ostringstream& out, const std::vector<std::pair<int, double>>& terms, const BinaryProgram& p,
                 std::size_t& col) {
  bool first = true;
  for (const auto& [v, a] : terms) {
    std::string piece;
    if (first) {
      piece = (a < 0 ? "- " : "");
    } else {
      piece = (a < 0 ? " - " : " + ");
    }
    const double mag = std::abs(a);
    if (mag != 1.0) piece += format_coef(mag) + " ";
    piece += p.name(v);
    if (col + piece.size() > 200) {
      out << "\n   ";
      col = 3;
    }
    out << piece;
    col += piece.size();
    first = false;
  }
}

}  // namespace

std::string export_lp(const BinaryProgram& p) {
  std::ostringstream out;
  out << "\\ binary program: " << p.num_vars() << " variables, " << p.constraints().size() << " rows\n";
  out << "Maximize\n obj: ";
  std::vector<std::pair<int, double>> terms;
  for (int j = 0; j < p.num_vars(); ++j) {
    if (p.objective(j) != 0.0) terms.emplace_back(j, p.objective(j));
  }
  std::size_t col = 6;
  if (terms.empty() && p.num_vars() > 0) terms.emplace_back(0, 0.0);
  if (terms.size() == 1 && terms[0].second == 0.0) {
    out << "0 " << p.name(terms[0].first);
  } else {
    write_terms(out, terms, p, col);
  }
  out << "\nSubject To\n";
  const auto& rows = p.constraints();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::map<int, double> merged;
    for (const Term& t : rows[i].terms) merged[t.var] += t.coef;
    terms.clear();
    for (const auto& [v, a] : merged) {
      if (a != 0.0) terms.emplace_back(v, a);
    }
    std::ostringstream head;
    head << " c" << i << ": ";
    out << head.str();
    col = head.str().size();
    if (terms.empty()) {
      out << "0 " << (p.num_vars() > 0 ? p.name(0) : "x");
    } else {
      write_terms(out, terms, p, col);
    }
    const char* rel = rows[i].relation == Relation::LessEqual ? " <= " : rows[i].relation == Relation::GreaterEqual ? " >= " : " = ";
    out << rel << format_coef(rows[i].rhs) << "\n";
  }
  out << "Bounds\n";
  for (int j = 0; j < p.num_vars(); ++j) {
    if (auto f = p.fixed(j)) out << " " << p.name(j) << " = " << (*f ? 1 : 0) << "\n";
  }
  out << "Binary\n";
  col = 0;
  for (int j = 0; j < p.num_vars(); ++j) {
    const std::string& nm = p.name(j);
    if (col + nm.size() + 1 > 200) {
      out << "\n";
      col = 0;
    }
    out << " " << nm;
    col += nm.size() + 1;
  }
  out << "\nEnd\n";
  return out.str();
}

std::vector<std::uint8_t> import_solution(const BinaryProgram& p, const std::string& text) {
  std::unordered_map<std::string, int> index;
  for (int j = 0; j < p.num_vars(); ++j) index.emplace(p.name(j), j);
  std::vector<std::uint8_t> x(static_cast<std::size_t>(p.num_vars()), 0);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string name, value, extra;
    if (!(ls >> name)) continue;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::Parse, "solution line " + std::to_string(lineno) + ": " + why);
    };
    if (!(ls >> value)) fail("expected '<name> <value>'");
    if (ls >> extra) fail("trailing text");
    auto it = index.find(name);
    if (it == index.end()) fail("unknown variable '" + name + "'");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(value, &used);
      if (used != value.size()) fail("bad value '" + value + "'");
    } catch (const std::logic_error&) {
      fail("bad value '" + value + "'");
    }
    if (std::abs(v) < 1e-6) {
      x[static_cast<std::size_t>(it->second)] = 0;
    } else if (std::abs(v - 1.0) < 1e-6) {
      x[static_cast<std::size_t>(it->second)] = 1;
    } else {
      fail("value is not binary");
    }
  }
  return x;
}

}  // namespace collsynth
