#pragma once

// Independent reference implementations used only by tests.

#include "collsynth/algorithm.hpp"
#include "collsynth/collective.hpp"
#include "collsynth/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

namespace oracle {

using namespace collsynth;

// Bellman-Ford relaxation over discretized steps.
inline std::vector<int> bellman_ford(const DiscreteTopology& dt, NpuId src) {
  std::vector<int> d(static_cast<std::size_t>(dt.num_npus), kUnreachable);
  d[static_cast<std::size_t>(src)] = 0;
  for (int round = 0; round < dt.num_npus; ++round) {
    for (const DiscreteEdge& e : dt.edges) {
      const int du = d[static_cast<std::size_t>(e.src)];
      if (du < kUnreachable && du + e.steps < d[static_cast<std::size_t>(e.dst)]) {
        d[static_cast<std::size_t>(e.dst)] = du + e.steps;
      }
    }
  }
  return d;
}

// Product graph of per-dimension edge lists; dimension 0 varies fastest.
inline std::set<std::pair<int, int>> product_edges(const std::vector<Topology>& dims) {
  std::vector<int> sizes;
  int total = 1;
  for (const Topology& t : dims) {
    sizes.push_back(t.num_npus());
    total *= t.num_npus();
  }
  std::set<std::pair<int, int>> out;
  for (int id = 0; id < total; ++id) {
    std::vector<int> coord(dims.size());
    int rest = id;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      coord[i] = rest % sizes[i];
      rest /= sizes[i];
    }
    int stride = 1;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      for (const Link& l : dims[i].links()) {
        if (l.src == coord[i]) out.insert({id, id + (l.dst - l.src) * stride});
      }
      stride *= sizes[i];
    }
  }
  return out;
}

// Straightforward replay for non-combining collectives: hold sets per timestep,
// pairwise occupancy checks, postcondition at the horizon.
inline bool brute_force_valid(const Schedule& s, const Topology& topo, const Collective& c, bool congestion = true) {
  std::set<std::pair<int, int>> held;  // (chunk, npu) held at time 0
  for (const Placement& p : c.pre) held.insert({p.chunk, p.npu});
  std::map<std::pair<int, int>, int> arrival;
  for (const auto& h : held) arrival[h] = 0;
  // a send can only depend on sends departing strictly earlier
  std::vector<Send> by_time = s.sends;
  std::sort(by_time.begin(), by_time.end(), [](const Send& a, const Send& b) { return a.depart < b.depart; });
  for (const Send& x : by_time) {
    auto it = arrival.find({x.chunk, x.src});
    if (it == arrival.end() || it->second > x.depart) continue;
    auto [dst, fresh] = arrival.try_emplace({x.chunk, x.dst}, x.arrive());
    if (!fresh) dst->second = std::min(dst->second, x.arrive());
  }
  for (const Send& x : s.sends) {
    if (x.src == x.dst || x.steps < 1 || x.depart < 0) return false;
    if (!topo.has_link(x.src, x.dst)) return false;
    if (s.factor_us > 0) {
      const Link& l = topo.links()[*topo.find_link(x.src, x.dst)];
      if (x.steps * s.factor_us < l.delay_us(s.chunk_bytes) * (1 - 1e-9)) return false;
    }
    auto it = arrival.find({x.chunk, x.src});
    if (it == arrival.end() || it->second > x.depart) return false;
  }
  if (congestion) {
    for (std::size_t i = 0; i < s.sends.size(); ++i) {
      for (std::size_t j = i + 1; j < s.sends.size(); ++j) {
        const Send& a = s.sends[i];
        const Send& b = s.sends[j];
        if (a.src == b.src && a.dst == b.dst && a.depart < b.arrive() && b.depart < a.arrive()) return false;
      }
    }
  }
  for (const Placement& p : c.post) {
    auto it = arrival.find({p.chunk, p.npu});
    if (it == arrival.end() || it->second > s.horizon) return false;
  }
  for (const Send& x : s.sends) {
    if (x.arrive() > s.horizon) return false;
  }
  return true;
}

// Minimal number of timesteps for a non-combining collective on a unit-step topology,
// by exhaustive search over per-timestep link matchings. Each state is one bitmask of
// held chunks per NPU; states dominated by a superset are dropped.
inline int exhaustive_min_steps(const Topology& topo, const Collective& c, int max_steps) {
  const int n = topo.num_npus();
  using State = std::vector<std::uint32_t>;
  State start(static_cast<std::size_t>(n), 0), goal(static_cast<std::size_t>(n), 0);
  for (const Placement& p : c.pre) start[static_cast<std::size_t>(p.npu)] |= 1u << p.chunk;
  for (const Placement& p : c.post) goal[static_cast<std::size_t>(p.npu)] |= 1u << p.chunk;
  auto done = [&](const State& s) {
    for (int v = 0; v < n; ++v) {
      if ((s[static_cast<std::size_t>(v)] & goal[static_cast<std::size_t>(v)]) != goal[static_cast<std::size_t>(v)]) return false;
    }
    return true;
  };
  auto subset = [&](const State& a, const State& b) {
    for (int v = 0; v < n; ++v) {
      if ((a[static_cast<std::size_t>(v)] & ~b[static_cast<std::size_t>(v)]) != 0) return false;
    }
    return true;
  };
  std::vector<std::vector<int>> in(static_cast<std::size_t>(n));
  for (const Link& l : topo.links()) in[static_cast<std::size_t>(l.dst)].push_back(l.src);

  std::vector<State> frontier{start};
  for (int t = 0; t <= max_steps; ++t) {
    for (const State& s : frontier) {
      if (done(s)) return t;
    }
    std::set<State> next;
    for (const State& s : frontier) {
      // per destination: every set of chunks its in-links can deliver this step
      std::vector<std::vector<std::uint32_t>> options(static_cast<std::size_t>(n));
      for (int d = 0; d < n; ++d) {
        std::set<std::uint32_t> sets{0};
        for (int src : in[static_cast<std::size_t>(d)]) {
          std::set<std::uint32_t> grown;
          const std::uint32_t offer = s[static_cast<std::size_t>(src)] & ~s[static_cast<std::size_t>(d)];
          for (std::uint32_t base : sets) {
            grown.insert(base);
            for (int chunk = 0; chunk < 32; ++chunk) {
              if (offer & (1u << chunk)) grown.insert(base | (1u << chunk));
            }
          }
          sets = std::move(grown);
        }
        std::vector<std::uint32_t> maximal;
        for (std::uint32_t a : sets) {
          bool dominated = false;
          for (std::uint32_t b : sets) dominated = dominated || (a != b && (a & ~b) == 0);
          if (!dominated) maximal.push_back(a);
        }
        options[static_cast<std::size_t>(d)] = maximal;
      }
      // depth-first product over destinations
      State cur = s;
      std::vector<int> idx(static_cast<std::size_t>(n), 0);
      for (;;) {
        for (int d = 0; d < n; ++d) {
          cur[static_cast<std::size_t>(d)] = s[static_cast<std::size_t>(d)] | options[static_cast<std::size_t>(d)][static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
        }
        next.insert(cur);
        int d = 0;
        while (d < n && ++idx[static_cast<std::size_t>(d)] == static_cast<int>(options[static_cast<std::size_t>(d)].size())) {
          idx[static_cast<std::size_t>(d)] = 0;
          ++d;
        }
        if (d == n) break;
      }
    }
    frontier.clear();
    for (const State& a : next) {
      bool dominated = false;
      for (const State& b : next) dominated = dominated || (a != b && subset(a, b));
      if (!dominated) frontier.push_back(a);
    }
  }
  return -1;
}

// Random strongly connected unit-cost topology: a uni ring plus random chords.
inline Topology random_topology(int n, std::mt19937_64& rng, double extra_p = 0.3) {
  std::vector<Link> links;
  std::bernoulli_distribution coin(extra_p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (j == (i + 1) % n || coin(rng)) links.push_back(Link{i, j, 1.0, 0.0});
    }
  }
  return Topology(n, links, "random" + std::to_string(n));
}

// Random non-combining collective: each chunk starts at one NPU, goes to a random set.
inline Collective random_collective(int n, int chunks, std::mt19937_64& rng) {
  Collective c;
  c.kind = CollectiveKind::Custom;
  c.num_npus = n;
  std::uniform_int_distribution<int> npu(0, n - 1);
  std::bernoulli_distribution coin(0.5);
  for (int k = 0; k < chunks; ++k) {
    c.chunks.push_back(Chunk{k, 1.0});
    const int src = npu(rng);
    c.pre.push_back({k, src});
    bool any = false;
    for (int v = 0; v < n; ++v) {
      if (v != src && coin(rng)) {
        c.post.push_back({k, v});
        any = true;
      }
    }
    if (!any) c.post.push_back({k, (src + 1) % n});
  }
  std::sort(c.pre.begin(), c.pre.end());
  std::sort(c.post.begin(), c.post.end());
  return c;
}

}  // namespace oracle
