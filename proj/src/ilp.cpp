#include "collsynth/ilp.hpp"

#include "collsynth/error.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <set>
#include <tuple>

namespace collsynth {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::size_t cell(int c, int n, int num_npus) {
  return static_cast<std::size_t>(c) * static_cast<std::size_t>(num_npus) + static_cast<std::size_t>(n);
}

bool reserved(const std::vector<LinkReservation>& res, NpuId src, NpuId dst, Timestep depart, int steps) {
  for (const LinkReservation& r : res) {
    if (r.src == src && r.dst == dst && occupancy_overlaps(depart, steps, r.begin, r.end - r.begin)) return true;
  }
  return false;
}

// Busy intervals of one link; earliest_fit finds the first free [s, s + k) with s >= t.
struct Calendar {
  std::vector<std::pair<Timestep, Timestep>> busy;

  Timestep earliest_fit(Timestep t, int k) const {
    Timestep s = t;
    for (bool moved = true; moved;) {
      moved = false;
      for (const auto& [b, e] : busy) {
        if (b < s + k && e > s) {
          s = e;
          moved = true;
        }
      }
    }
    return s;
  }
  void add(Timestep b, Timestep e) {
    busy.emplace_back(b, e);
    std::sort(busy.begin(), busy.end());
  }
};

Schedule empty_schedule(const DiscreteTopology& dt) {
  Schedule s;
  s.factor_us = dt.factor_us;
  s.chunk_bytes = dt.chunk_bytes;
  s.topology_name = dt.name;
  return s;
}

void check_non_combining(const Collective& collective) {
  collective.validate();
  if (collective.combining) {
    throw Error(ErrorCode::InvalidInput,
                "combining collectives are synthesized through their non-combining counterpart");
  }
}

struct Budget {
  Clock::time_point start;
  double limit;
  double remaining() const { return limit - seconds_since(start); }
};

struct ProbeOutcome {
  std::optional<Schedule> schedule;
  bool tf_proven = true;
  bool time_hit = false;
  Timestep last_tf = 0;
};

// Pinned-final probes at t_f = from, from + 1, ..., to while time remains above `reserve`.
ProbeOutcome probe_range(const std::shared_ptr<const DiscreteTopology>& dt, const Collective& collective,
                         const SynthesisConfig& config, Timestep from, Timestep to, const Budget& budget,
                         double reserve) {
  ProbeOutcome out;
  out.last_tf = from;
  for (Timestep tf = from; tf <= to; ++tf) {
    const double remaining = budget.remaining() - reserve;
    if (remaining <= 0.0) {
      out.time_hit = true;
      out.tf_proven = false;
      return out;
    }
    out.last_tf = tf;
    const TimeExpandedNetwork ten(dt, tf);
    ModelOptions mo;
    mo.pin_final = true;
    mo.presolve = true;
    const IlpModel model = build_model(ten, collective, config, mo);
    SolveOptions so;
    so.time_limit_s = tf == to ? remaining : std::max(0.05, 0.5 * remaining);
    so.cutoff = model.pinned_floor - 0.5;
    so.nodes_after_incumbent = config.polish_nodes;
    so.seed = config.rng_seed;
    const SolveResult r = solve(model.program, so);
    if (r.time_limit_hit) out.time_hit = true;
    if (r.has_solution()) {
      Schedule s = decode(model, r.assignment, *dt);
      s = prune_redundant(s, collective);
      s.horizon = tf;
      out.schedule = std::move(s);
      return out;
    }
    if (r.status != SolveStatus::Infeasible) out.tf_proven = false;
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const SynthesisConfig& config) {
  nlohmann::json j = {{"time_limit_s", config.time_limit_s},
                      {"cluster_window", config.cluster_window},
                      {"taccl_like", config.taccl_like},
                      {"rng_seed", config.rng_seed},
                      {"polish_nodes", config.polish_nodes},
                      {"runs", config.runs}};
  if (config.tf_start) j["tf_start"] = *config.tf_start;
  if (config.factor_us) j["factor_us"] = *config.factor_us;
  if (config.window_time_limit_s) j["window_time_limit_s"] = *config.window_time_limit_s;
  if (!config.reservations.empty()) {
    nlohmann::json r = nlohmann::json::array();
    for (const LinkReservation& x : config.reservations) r.push_back({x.src, x.dst, x.begin, x.end});
    j["reservations"] = r;
  }
  return j;
}

Timestep collective_lower_bound(const ShortestPaths& paths, const Collective& collective) {
  const auto holders = collective.pre_holders();
  Timestep bound = 0;
  for (const Placement& p : collective.post) {
    int best = kUnreachable;
    for (NpuId h : holders[static_cast<std::size_t>(p.chunk)]) best = std::min(best, paths.distance(h, p.npu));
    if (best >= kUnreachable) {
      throw Error(ErrorCode::UnreachableDestination,
                  "chunk " + std::to_string(p.chunk) + " cannot reach NPU " + std::to_string(p.npu));
    }
    bound = std::max(bound, best);
  }
  return bound;
}

Timestep ingress_lower_bound(const DiscreteTopology& dt, const Collective& collective) {
  std::vector<int> missing(static_cast<std::size_t>(dt.num_npus), 0);
  std::set<Placement> pre(collective.pre.begin(), collective.pre.end());
  for (const Placement& p : collective.post) {
    if (!pre.count(p)) ++missing[static_cast<std::size_t>(p.npu)];
  }
  Timestep bound = 0;
  for (NpuId r = 0; r < dt.num_npus; ++r) {
    const int m = missing[static_cast<std::size_t>(r)];
    if (m == 0) continue;
    const auto& in = dt.in_edges[static_cast<std::size_t>(r)];
    if (in.empty()) continue;  // reported as unreachable elsewhere
    // a link busy for k steps per chunk delivers at most floor(T / k) chunks by T
    auto capacity = [&](Timestep t) {
      long total = 0;
      for (std::size_t e : in) total += t / dt.edges[e].steps;
      return total;
    };
    Timestep t = bound;
    while (capacity(t) < m) ++t;
    bound = t;
  }
  return bound;
}

IlpModel build_model(const TimeExpandedNetwork& ten, const Collective& collective, const SynthesisConfig& config,
                     const ModelOptions& options) {
  const DiscreteTopology& dt = ten.base();
  const int n = collective.num_npus;
  const int nc = collective.num_chunks();
  const Timestep T = ten.horizon();
  if (dt.num_npus != n) throw Error(ErrorCode::InvalidInput, "topology and collective disagree on NPU count");

  IlpModel model;
  model.num_chunks = nc;
  model.num_npus = n;
  model.horizon = T;
  BinaryProgram& p = model.program;

  const std::size_t cells = static_cast<std::size_t>(nc) * static_cast<std::size_t>(n);
  std::vector<char> pre(cells, 0), post(cells, 0);
  for (const Placement& x : collective.pre) pre[cell(x.chunk, x.npu, n)] = 1;
  for (const Placement& x : collective.post) post[cell(x.chunk, x.npu, n)] = 1;
  std::vector<double> weight = options.weights;
  if (weight.empty()) {
    weight.assign(cells, 0.0);
    for (std::size_t k = 0; k < cells; ++k) weight[k] = post[k] && !pre[k] ? 1.0 : 0.0;
  }
  if (weight.size() != cells) throw Error(ErrorCode::InvalidInput, "weight table size mismatch");

  // Earliest possible hold and distance to the nearest weighted NPU, for presolve.
  std::vector<int> first(cells, 0), to_target(cells, 0);
  if (options.presolve) {
    const ShortestPaths sp = all_pairs_shortest_paths(dt);
    const auto holders = collective.pre_holders();
    for (int c = 0; c < nc; ++c) {
      for (int v = 0; v < n; ++v) {
        int f = kUnreachable, g = kUnreachable;
        for (NpuId h : holders[static_cast<std::size_t>(c)]) f = std::min(f, sp.distance(h, v));
        for (int r = 0; r < n; ++r) {
          if (weight[cell(c, r, n)] > 0 || post[cell(c, r, n)]) g = std::min(g, sp.distance(v, r));
        }
        first[cell(c, v, n)] = f;
        to_target[cell(c, v, n)] = g;
      }
    }
  }

  const auto T1 = static_cast<std::size_t>(T + 1);
  model.hold_vars.resize(cells * T1);
  for (int c = 0; c < nc; ++c) {
    for (int v = 0; v < n; ++v) {
      const std::size_t k = cell(c, v, n);
      for (Timestep t = 0; t <= T; ++t) {
        const int var = p.add_variable("h_" + std::to_string(c) + "_" + std::to_string(v) + "_" + std::to_string(t),
                                       t >= 1 ? weight[k] : 0.0);
        p.set_branch_priority(var, T + 1);
        model.hold_vars[k * T1 + static_cast<std::size_t>(t)] = var;
        if (t == 0) p.fix(var, pre[k] != 0);
        if (options.presolve) {
          if (pre[k]) p.fix(var, true);
          else if (t < first[k]) p.fix(var, false);
        }
      }
      if (options.pin_final && post[k]) p.fix(model.hold(c, v, T), true);
      if (options.pin_final && post[k]) model.pinned_floor += weight[k];
      if (pre[k]) model.pinned_floor += weight[k] * T;
    }
  }

  // sent variables in TEN edge order, chunk innermost
  std::vector<std::vector<int>> incoming(cells * T1);
  std::vector<std::vector<std::vector<int>>> by_edge(dt.edges.size(), std::vector<std::vector<int>>(T1));
  for (const TenEdge& e : ten.edges()) {
    const bool blocked = reserved(config.reservations, e.src, e.dst, e.depart, e.steps);
    for (int c = 0; c < nc; ++c) {
      if (options.presolve) {
        if (blocked || pre[cell(c, e.dst, n)] || e.depart < first[cell(c, e.src, n)] ||
            e.arrive() + to_target[cell(c, e.dst, n)] > T) {
          continue;
        }
      }
      const int var = p.add_variable("s_" + std::to_string(c) + "_" + std::to_string(e.src) + "_" + std::to_string(e.dst) +
                                     "_" + std::to_string(e.depart));
      p.set_branch_priority(var, e.depart);
      if (blocked) p.fix(var, false);
      model.sent.push_back(SentVar{var, c, e});
      p.add_constraint({{var, 1.0}, {model.hold(c, e.src, e.depart), -1.0}}, Relation::LessEqual, 0.0);
      p.add_constraint({{var, 1.0}, {model.hold(c, e.dst, e.arrive()), -1.0}}, Relation::LessEqual, 0.0);
      incoming[cell(c, e.dst, n) * T1 + static_cast<std::size_t>(e.arrive())].push_back(var);
      by_edge[e.base_edge][static_cast<std::size_t>(e.depart)].push_back(var);
    }
  }

  for (int c = 0; c < nc; ++c) {
    for (int v = 0; v < n; ++v) {
      const std::size_t k = cell(c, v, n);
      for (Timestep t = 0; t < T; ++t) {
        const int a = model.hold(c, v, t), b = model.hold(c, v, t + 1);
        if (options.presolve && p.fixed(a) && p.fixed(b)) continue;
        p.add_constraint({{a, 1.0}, {b, -1.0}}, Relation::LessEqual, 0.0);
      }
      for (Timestep t = 1; t <= T; ++t) {
        const int h = model.hold(c, v, t);
        if (options.presolve && p.fixed(h) && (*p.fixed(h) == false || pre[k])) continue;
        std::vector<Term> row{{h, 1.0}, {model.hold(c, v, t - 1), -1.0}};
        for (int s : incoming[k * T1 + static_cast<std::size_t>(t)]) row.push_back({s, -1.0});
        p.add_constraint(std::move(row), Relation::LessEqual, 0.0);
      }
    }
  }

  if (!config.taccl_like) {
    for (std::size_t be = 0; be < dt.edges.size(); ++be) {
      const int k = dt.edges[be].steps;
      const Timestep last_depart = T - k;
      if (last_depart < 0) continue;
      const Timestep last_start = std::max(0, last_depart - k + 1);
      for (Timestep a = 0; a <= last_start; ++a) {
        std::vector<Term> row;
        for (Timestep t = a; t <= std::min(a + k - 1, last_depart); ++t) {
          for (int var : by_edge[be][static_cast<std::size_t>(t)]) row.push_back({var, 1.0});
        }
        if (row.size() > 1) p.add_constraint(std::move(row), Relation::LessEqual, 1.0);
      }
    }
  }
  return model;
}

Schedule decode(const IlpModel& model, const std::vector<std::uint8_t>& assignment, const DiscreteTopology& dt) {
  Schedule s = empty_schedule(dt);
  s.horizon = model.horizon;
  for (const SentVar& sv : model.sent) {
    if (assignment[static_cast<std::size_t>(sv.var)]) {
      s.sends.push_back(Send{sv.chunk, sv.edge.src, sv.edge.dst, sv.edge.depart, sv.edge.steps});
    }
  }
  s.normalize();
  return s;
}

Schedule recover_early_termination(const Schedule& partial, const DiscreteTopology& dt, const Collective& collective,
                                   const std::vector<LinkReservation>& reservations) {
  const int n = collective.num_npus;
  Schedule out = partial;
  if (out.factor_us <= 0.0) out.factor_us = dt.factor_us;
  if (out.chunk_bytes <= 0.0) out.chunk_bytes = dt.chunk_bytes;
  if (out.topology_name.empty()) out.topology_name = dt.name;

  std::vector<Timestep> hold = hold_times(partial, collective);
  std::vector<Calendar> cal(dt.edges.size());
  for (const Send& x : partial.sends) {
    if (auto e = dt.find_edge(x.src, x.dst)) cal[*e].add(x.depart, x.arrive());
  }
  for (const LinkReservation& r : reservations) {
    if (auto e = dt.find_edge(r.src, r.dst)) cal[*e].add(r.begin, r.end);
  }
  const ShortestPaths sp = all_pairs_shortest_paths(dt);

  auto nearest = [&](ChunkId c, NpuId r) {
    int best = kUnreachable;
    for (NpuId h = 0; h < n; ++h) {
      if (hold[cell(c, h, n)] < kNever) best = std::min(best, sp.distance(h, r));
    }
    return best;
  };

  std::vector<std::tuple<int, ChunkId, NpuId>> unmet;
  for (const Placement& p : collective.post) {
    if (hold[cell(p.chunk, p.npu, n)] < kNever) continue;
    const int d = nearest(p.chunk, p.npu);
    if (d >= kUnreachable) {
      throw Error(ErrorCode::UnreachableDestination,
                  "chunk " + std::to_string(p.chunk) + " cannot reach NPU " + std::to_string(p.npu));
    }
    unmet.emplace_back(-d, p.chunk, p.npu);
  }
  std::sort(unmet.begin(), unmet.end());

  for (const auto& [neg_d, c, r] : unmet) {
    if (hold[cell(c, r, n)] < kNever) continue;
    NpuId src = -1;
    std::tuple<long, int, NpuId> key{0, 0, 0};
    for (NpuId h = 0; h < n; ++h) {
      const Timestep avail = hold[cell(c, h, n)];
      if (avail >= kNever || !sp.reachable(h, r)) continue;
      const std::tuple<long, int, NpuId> k{static_cast<long>(avail) + sp.distance(h, r), sp.distance(h, r), h};
      if (src < 0 || k < key) {
        src = h;
        key = k;
      }
    }
    const std::vector<NpuId> path = sp.path(src, r);
    Timestep t = hold[cell(c, src, n)];
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      const NpuId u = path[i], v = path[i + 1];
      const std::size_t e = *dt.find_edge(u, v);
      const int k = dt.edges[e].steps;
      const Timestep start = cal[e].earliest_fit(t, k);
      const Timestep have = hold[cell(c, v, n)];
      if (have <= start + k) {
        t = std::max(t, have);
        continue;
      }
      cal[e].add(start, start + k);
      out.sends.push_back(Send{c, u, v, start, k});
      hold[cell(c, v, n)] = start + k;
      t = start + k;
    }
  }
  out.horizon = std::max(partial.horizon, out.last_arrival());
  out.normalize();
  return out;
}

Schedule synthesize(const Topology& topology, const Collective& collective, double chunk_bytes,
                    const SynthesisConfig& config) {
  check_non_combining(collective);
  if (!(config.time_limit_s > 0)) throw Error(ErrorCode::InvalidInput, "time limit must be positive");
  const Budget budget{Clock::now(), config.time_limit_s};
  auto dt = std::make_shared<const DiscreteTopology>(discretize(topology, chunk_bytes, config.factor_us));
  const ShortestPaths sp = all_pairs_shortest_paths(*dt);
  const Timestep lower = std::max(collective_lower_bound(sp, collective),
                                  config.taccl_like ? 0 : ingress_lower_bound(*dt, collective));

  Provenance prov;
  prov.synthesizer = config.taccl_like ? "taccl-like" : "ilp";
  prov.seed = config.rng_seed;
  prov.config_digest = digest_hex(to_json(config).dump());

  if (lower == 0) {
    Schedule s = empty_schedule(*dt);
    prov.optimal = true;
    s.provenance = prov;
    return s;
  }

  // Shortest-path completion from the bare precondition caps the search.
  Schedule fallback = recover_early_termination(empty_schedule(*dt), *dt, collective, config.reservations);
  fallback = prune_redundant(fallback, collective);
  const Timestep upper = fallback.horizon;

  const Timestep from = std::max<Timestep>(1, config.tf_start.value_or(lower));
  const double reserve = 0.1 * config.time_limit_s;
  ProbeOutcome probe = probe_range(dt, collective, config, from, upper, budget, reserve);
  if (from > lower) probe.tf_proven = false;
  if (probe.schedule) {
    Schedule s = std::move(*probe.schedule);
    prov.optimal = probe.tf_proven;
    prov.time_limited = probe.time_hit;
    s.provenance = prov;
    return s;
  }

  // Early termination: best partial at the last probed horizon, completed along shortest paths.
  prov.time_limited = true;
  prov.optimal = false;
  Schedule partial = empty_schedule(*dt);
  const double left = budget.remaining();
  if (left > 0.0) {
    const TimeExpandedNetwork ten(dt, probe.last_tf);
    ModelOptions mo;
    mo.presolve = true;
    const IlpModel model = build_model(ten, collective, config, mo);
    SolveOptions so;
    so.time_limit_s = left;
    so.nodes_after_incumbent = config.polish_nodes;
    const SolveResult r = solve(model.program, so);
    if (r.has_solution()) partial = decode(model, r.assignment, *dt);
  }
  Schedule completed = prune_redundant(recover_early_termination(partial, *dt, collective, config.reservations), collective);
  completed.horizon = completed.last_arrival();
  fallback.horizon = fallback.last_arrival();
  Schedule s = completed.horizon <= fallback.horizon ? completed : fallback;
  s.provenance = prov;
  s.provenance.note = "early-terminated";
  return s;
}

Schedule synthesize_clustered(const Topology& topology, const Collective& collective, double chunk_bytes,
                              const SynthesisConfig& config) {
  check_non_combining(collective);
  const int w = config.cluster_window;
  if (w < 1) throw Error(ErrorCode::InvalidInput, "cluster window must be >= 1");
  const Budget budget{Clock::now(), config.time_limit_s};
  const double window_limit = config.window_time_limit_s.value_or(config.time_limit_s / 10.0);
  auto dt = std::make_shared<const DiscreteTopology>(discretize(topology, chunk_bytes, config.factor_us));
  const ShortestPaths sp = all_pairs_shortest_paths(*dt);
  const Timestep lower = std::max(collective_lower_bound(sp, collective),
                                  config.taccl_like ? 0 : ingress_lower_bound(*dt, collective));

  Provenance prov;
  prov.synthesizer = "clustered";
  prov.seed = config.rng_seed;
  prov.config_digest = digest_hex(to_json(config).dump());

  Schedule result = empty_schedule(*dt);
  if (lower == 0) {
    prov.optimal = true;
    result.provenance = prov;
    return result;
  }

  // A window that can hold the whole collective is a plain t_f search.
  if (lower <= w) {
    const Budget window_budget{Clock::now(), window_limit};
    ProbeOutcome probe = probe_range(dt, collective, config, lower, w, window_budget, 0.0);
    if (probe.schedule) {
      result = std::move(*probe.schedule);
      prov.optimal = probe.tf_proven;
      prov.time_limited = probe.time_hit;
      result.provenance = prov;
      return result;
    }
    prov.time_limited = probe.time_hit;
  }

  const int n = collective.num_npus;
  const int nc = collective.num_chunks();
  const std::size_t cells = static_cast<std::size_t>(nc) * static_cast<std::size_t>(n);
  std::vector<char> held(cells, 0), wanted(cells, 0);
  for (const Placement& p : collective.pre) held[cell(p.chunk, p.npu, n)] = 1;
  for (const Placement& p : collective.post) wanted[cell(p.chunk, p.npu, n)] = 1;

  Timestep offset = 0;
  int windows = 0;
  for (;;) {
    bool done = true;
    for (std::size_t k = 0; k < cells; ++k) done = done && (!wanted[k] || held[k]);
    if (done) break;

    // Progress weights: a new holder scores the distance it saves for every unmet destination.
    Collective window = collective;
    window.kind = CollectiveKind::Custom;
    window.tenants.clear();
    window.pre.clear();
    window.post.clear();
    std::vector<double> weight(cells, 0.0);
    for (int c = 0; c < nc; ++c) {
      for (int r = 0; r < n; ++r) {
        if (held[cell(c, r, n)]) window.pre.push_back({c, r});
        if (!wanted[cell(c, r, n)] || held[cell(c, r, n)]) continue;
        window.post.push_back({c, r});
        int dist_h = kUnreachable;
        for (int h = 0; h < n; ++h) {
          if (held[cell(c, h, n)]) dist_h = std::min(dist_h, sp.distance(h, r));
        }
        for (int v = 0; v < n; ++v) {
          if (!held[cell(c, v, n)] && sp.distance(v, r) < dist_h) weight[cell(c, v, n)] += dist_h;
        }
      }
    }

    std::vector<LinkReservation> res;
    for (const LinkReservation& r : config.reservations) {
      if (r.end > offset) res.push_back({r.src, r.dst, r.begin - offset, r.end - offset});
    }
    SynthesisConfig wc = config;
    wc.reservations = res;
    const TimeExpandedNetwork ten(dt, w);
    ModelOptions mo;
    mo.presolve = true;
    mo.weights = weight;
    const IlpModel model = build_model(ten, window, wc, mo);
    SolveOptions so;
    so.time_limit_s = std::max(0.05, std::min(window_limit, budget.remaining()));
    so.nodes_after_incumbent = config.polish_nodes;
    so.cutoff = 0.5;  // only assignments that make progress
    const SolveResult r = solve(model.program, so);
    if (r.time_limit_hit) prov.time_limited = true;
    ++windows;

    if (!r.has_solution()) {
      if (r.status == SolveStatus::Infeasible) {
        throw Error(ErrorCode::Stall, "window " + std::to_string(windows) + " at t=" + std::to_string(offset) +
                                          " cannot make progress (window " + std::to_string(w) +
                                          " vs latencies up to " + std::to_string(dt->max_steps()) + ")");
      }
      // Out of time with nothing to commit: finish along shortest paths.
      Schedule partial = result;
      partial.horizon = offset;
      result = recover_early_termination(partial, *dt, collective, config.reservations);
      prov.time_limited = true;
      prov.note = "window timeout, completed by shortest paths";
      break;
    }

    Schedule local = decode(model, r.assignment, *dt);
    Collective useful = window;
    useful.post.clear();
    for (int c = 0; c < nc; ++c) {
      for (int v = 0; v < n; ++v) {
        if (weight[cell(c, v, n)] > 0) useful.post.push_back({c, v});
      }
    }
    local = prune_redundant(local, useful);
    if (local.sends.empty()) throw Error(ErrorCode::Stall, "window made no progress");
    const Timestep span = local.last_arrival();
    for (const Send& x : local.sends) {
      result.sends.push_back(Send{x.chunk, x.src, x.dst, x.depart + offset, x.steps});
      held[cell(x.chunk, x.dst, n)] = 1;
    }
    offset += span;
  }

  result.horizon = std::max(offset, result.last_arrival());
  result = prune_redundant(result, collective);
  result.horizon = result.last_arrival();
  prov.optimal = false;
  prov.note = prov.note.empty() ? std::to_string(windows) + " windows" : prov.note;
  result.provenance = prov;
  return result;
}

}  // namespace collsynth
