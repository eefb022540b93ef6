#include "collsynth/greedy.hpp"

#include "collsynth/error.hpp"
#include "collsynth/evaluator.hpp"

#include <algorithm>

namespace collsynth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

template <typename T>
void fisher_yates(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, int run) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(run) + 1));
}

GreedyState::GreedyState(const DiscreteTopology& dt, const ShortestPaths& paths, const Collective& collective,
                         std::uint64_t seed, std::vector<LinkReservation> reservations)
    : dt_(dt),
      paths_(paths),
      n_(collective.num_npus),
      num_chunks_(collective.num_chunks()),
      rng_(seed),
      reservations_(std::move(reservations)) {
  const std::size_t cells = static_cast<std::size_t>(num_chunks_) * static_cast<std::size_t>(n_);
  hold_.assign(cells, kNever);
  en_route_.assign(cells, kNever);
  wanted_.assign(cells, 0);
  frontier_.assign(cells, kUnreachable);
  unmet_by_chunk_.assign(static_cast<std::size_t>(num_chunks_), {});
  for (const Placement& p : collective.pre) hold_[index(p.chunk, p.npu)] = 0;
  for (const Placement& p : collective.post) {
    if (hold_[index(p.chunk, p.npu)] == 0) continue;
    wanted_[index(p.chunk, p.npu)] = 1;
    unmet_by_chunk_[static_cast<std::size_t>(p.chunk)].push_back(p.npu);
    ++unmet_;
  }
  edge_flights_.assign(dt_.edges.size(), {});
  edge_reserved_.assign(dt_.edges.size(), {});
  for (const LinkReservation& r : reservations_) {
    if (auto e = dt_.find_edge(r.src, r.dst)) edge_reserved_[*e].emplace_back(r.begin, r.end);
  }
  refresh_frontier();
}

void GreedyState::refresh_frontier() {
  for (int c = 0; c < num_chunks_; ++c) {
    for (NpuId r : unmet_by_chunk_[static_cast<std::size_t>(c)]) {
      int best = kUnreachable;
      for (NpuId x = 0; x < n_; ++x) {
        if (hold_[index(c, x)] < kNever || en_route_[index(c, x)] < kNever) best = std::min(best, paths_.distance(x, r));
      }
      frontier_[index(c, r)] = best;
    }
  }
}

bool GreedyState::link_free(std::size_t edge, Timestep t, int steps, const Flight* ignore) const {
  for (std::size_t f : edge_flights_[edge]) {
    const Flight& fl = flights_[f];
    if (&fl == ignore || fl.cancelled) continue;
    if (occupancy_overlaps(fl.send.depart, fl.send.steps, t, steps)) return false;
  }
  for (const auto& [b, e] : edge_reserved_[edge]) {
    if (occupancy_overlaps(b, e - b, t, steps)) return false;
  }
  return true;
}

bool GreedyState::wants(ChunkId c, NpuId d) const {
  const std::size_t k = index(c, d);
  if (hold_[k] < kNever) return false;
  if (wanted_[k]) return true;
  // relay: d is strictly closer than every current source to some unmet destination
  for (NpuId r : unmet_by_chunk_[static_cast<std::size_t>(c)]) {
    if (paths_.distance(d, r) < frontier_[index(c, r)]) return true;
  }
  return false;
}

int GreedyState::urgency(ChunkId c, NpuId d) const {
  int u = 0;
  for (NpuId r : unmet_by_chunk_[static_cast<std::size_t>(c)]) {
    const int f = frontier_[index(c, r)];
    if (f > u && paths_.distance(d, r) < f) u = f;
  }
  return u;
}

void GreedyState::commit_arrivals() {
  for (Flight& fl : flights_) {
    if (fl.cancelled || fl.send.arrive() != clock_) continue;
    const std::size_t k = index(fl.send.chunk, fl.send.dst);
    if (hold_[k] < kNever) continue;
    hold_[k] = clock_;
    if (wanted_[k]) {
      auto& u = unmet_by_chunk_[static_cast<std::size_t>(fl.send.chunk)];
      u.erase(std::find(u.begin(), u.end(), fl.send.dst));
      --unmet_;
    }
  }
}

std::vector<std::pair<Send, std::optional<Send>>> GreedyState::replace_outdated() {
  std::vector<std::pair<Send, std::optional<Send>>> out;
  bool changed = false;
  for (std::size_t f = 0; f < flights_.size(); ++f) {
    Flight& fl = flights_[f];
    if (fl.cancelled || fl.send.arrive() <= clock_) continue;
    if (hold_[index(fl.send.chunk, fl.send.dst)] > clock_) continue;
    fl.cancelled = true;
    changed = true;
    const Send old = fl.send;
    // earliest remaining in-flight copy, if any
    Timestep er = kNever;
    for (const Flight& other : flights_) {
      if (!other.cancelled && other.send.chunk == old.chunk && other.send.dst == old.dst && other.send.arrive() > clock_) {
        er = std::min(er, other.send.arrive());
      }
    }
    en_route_[index(old.chunk, old.dst)] = er;

    std::optional<Send> sub;
    if (link_free(fl.edge, clock_, old.steps, &fl)) {
      int best_u = -1;
      ChunkId best_c = -1;
      for (ChunkId c = 0; c < num_chunks_; ++c) {
        const std::size_t k = index(c, old.dst);
        if (hold_[index(c, old.src)] > clock_ || en_route_[k] < kNever || !wants(c, old.dst)) continue;
        const int u = urgency(c, old.dst);
        if (u > best_u) {
          best_u = u;
          best_c = c;
        }
      }
      if (best_c >= 0) {
        sub = Send{best_c, old.src, old.dst, clock_, old.steps};
        flights_.push_back(Flight{*sub, fl.edge, false});
        edge_flights_[fl.edge].push_back(flights_.size() - 1);
        en_route_[index(best_c, old.dst)] = sub->arrive();
      }
    }
    out.emplace_back(old, sub);
  }
  if (changed) refresh_frontier();
  return out;
}

std::vector<Send> GreedyState::match_step() {
  std::vector<Send> sent;
  const Timestep t = clock_;
  for (auto& list : edge_flights_) {
    list.erase(std::remove_if(list.begin(), list.end(),
                              [&](std::size_t f) { return flights_[f].cancelled || flights_[f].send.arrive() <= t; }),
               list.end());
  }

  // Demands: (npu, chunk) pairs some free in-link could serve now.
  std::vector<std::pair<NpuId, ChunkId>> demands;
  std::vector<char> seen(hold_.size(), 0);
  for (std::size_t e = 0; e < dt_.edges.size(); ++e) {
    const DiscreteEdge& de = dt_.edges[e];
    if (!link_free(e, t, de.steps)) continue;
    for (ChunkId c = 0; c < num_chunks_; ++c) {
      const std::size_t k = index(c, de.dst);
      if (seen[k] || hold_[index(c, de.src)] > t || hold_[k] < kNever) continue;
      if (en_route_[k] < kNever ? en_route_[k] <= t + de.steps : !wants(c, de.dst)) continue;
      seen[k] = 1;
      demands.emplace_back(de.dst, c);
    }
  }
  fisher_yates(demands, rng_);
  std::vector<int> urg(demands.size());
  for (std::size_t i = 0; i < demands.size(); ++i) urg[i] = urgency(demands[i].second, demands[i].first);
  std::vector<std::size_t> order(demands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return urg[a] > urg[b]; });

  std::vector<std::size_t> best;
  for (std::size_t i : order) {
    const auto [d, c] = demands[i];
    const std::size_t k = index(c, d);
    const bool racing = en_route_[k] < kNever;
    if (!racing && !wants(c, d)) continue;
    best.clear();
    int best_steps = kUnreachable;
    for (std::size_t e : dt_.in_edges[static_cast<std::size_t>(d)]) {
      const DiscreteEdge& de = dt_.edges[e];
      if (hold_[index(c, de.src)] > t) continue;
      if (racing && t + de.steps >= en_route_[k]) continue;
      if (!link_free(e, t, de.steps)) continue;
      if (de.steps < best_steps) {
        best_steps = de.steps;
        best.clear();
      }
      if (de.steps == best_steps) best.push_back(e);
    }
    if (best.empty()) continue;
    const std::size_t e = best.size() == 1 ? best[0] : best[static_cast<std::size_t>(rng_() % best.size())];
    const DiscreteEdge& de = dt_.edges[e];
    const Send s{c, de.src, d, t, de.steps};
    flights_.push_back(Flight{s, e, false});
    edge_flights_[e].push_back(flights_.size() - 1);
    en_route_[k] = std::min(en_route_[k], s.arrive());
    for (NpuId r : unmet_by_chunk_[static_cast<std::size_t>(c)]) {
      int& f = frontier_[index(c, r)];
      f = std::min(f, paths_.distance(d, r));
    }
    sent.push_back(s);
  }
  return sent;
}

void GreedyState::tick() {
  commit_arrivals();
  replace_outdated();
  match_step();
  advance();
}

Schedule GreedyState::schedule() const {
  Schedule s;
  for (const Flight& fl : flights_) {
    if (!fl.cancelled) s.sends.push_back(fl.send);
  }
  s.normalize();
  s.horizon = s.last_arrival();
  s.factor_us = dt_.factor_us;
  s.chunk_bytes = dt_.chunk_bytes;
  s.topology_name = dt_.name;
  return s;
}

Schedule greedy_run(const DiscreteTopology& dt, const ShortestPaths& paths, const Collective& collective,
                    std::uint64_t seed, const std::vector<LinkReservation>& reservations) {
  GreedyState state(dt, paths, collective, seed, reservations);
  const long limit = static_cast<long>(dt.num_npus) * std::max(1, dt.max_steps()) *
                     std::max(1, collective.num_chunks());
  Timestep last_reserved = 0;
  for (const LinkReservation& r : reservations) last_reserved = std::max(last_reserved, r.end);
  long idle = 0;
  for (;;) {
    state.commit_arrivals();
    if (state.done()) break;
    const auto subs = state.replace_outdated();
    const auto sends = state.match_step();
    const Schedule so_far = state.schedule();
    const bool in_flight = so_far.last_arrival() > state.clock();
    if (sends.empty() && subs.empty() && !in_flight && state.clock() >= last_reserved) {
      if (++idle > limit) throw Error(ErrorCode::Stall, "greedy made no progress");
    } else {
      idle = 0;
    }
    state.advance();
  }
  state.replace_outdated();  // drop flights still heading to NPUs that already hold the chunk
  Schedule s = prune_redundant(state.schedule(), collective);
  s.horizon = s.last_arrival();
  return s;
}

Schedule synthesize_greedy(const Topology& topology, const Collective& collective, double chunk_bytes,
                           const SynthesisConfig& config) {
  collective.validate();
  if (collective.combining) {
    throw Error(ErrorCode::InvalidInput, "combining collectives are synthesized through their non-combining counterpart");
  }
  if (config.runs < 1) throw Error(ErrorCode::InvalidInput, "runs must be >= 1");
  const DiscreteTopology dt = discretize(topology, chunk_bytes, config.factor_us);
  const ShortestPaths sp = all_pairs_shortest_paths(dt);
  collective_lower_bound(sp, collective);  // reachability precheck

  Schedule best;
  double best_time = 0.0;
  int best_run = -1;
  for (int i = 0; i < config.runs; ++i) {
    Schedule s = greedy_run(dt, sp, collective, derive_seed(config.rng_seed, i), config.reservations);
    s.horizon = s.last_arrival();
    const double time = evaluate(s, topology, chunk_bytes).collective_time_us;
    if (best_run < 0 || time < best_time) {
      best = std::move(s);
      best_time = time;
      best_run = i;
    }
  }
  best.provenance.synthesizer = "greedy";
  best.provenance.seed = config.rng_seed;
  best.provenance.config_digest = digest_hex(to_json(config).dump());
  best.provenance.note = "best of " + std::to_string(config.runs) + " (run " + std::to_string(best_run) + ")";
  return best;
}

}  // namespace collsynth
