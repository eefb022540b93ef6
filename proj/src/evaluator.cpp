#include "collsynth/evaluator.hpp"

#include "collsynth/error.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

namespace collsynth {

namespace {

std::int64_t key(ChunkId c, NpuId n) { return (static_cast<std::int64_t>(c) << 32) | static_cast<std::uint32_t>(n); }

struct Delivery {
  Timestep arrive;
  double end_us;
};

}  // namespace

CostReport evaluate(const Schedule& s, const Topology& topology, double chunk_bytes) {
  CostReport report;
  std::vector<std::size_t> order(s.sends.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Send& x = s.sends[a];
    const Send& y = s.sends[b];
    return std::tie(x.depart, x.src, x.dst, x.chunk) < std::tie(y.depart, y.src, y.dst, y.chunk);
  });

  const auto& links = topology.links();
  std::vector<double> link_free(links.size(), 0.0);
  std::vector<std::vector<std::pair<double, double>>> waits(links.size());  // (ready, start)
  report.links.resize(links.size());
  for (std::size_t l = 0; l < links.size(); ++l) {
    report.links[l].src = links[l].src;
    report.links[l].dst = links[l].dst;
  }
  std::unordered_map<std::int64_t, std::vector<Delivery>> delivered;

  for (std::size_t i : order) {
    const Send& x = s.sends[i];
    if (x.steps < 1) {
      throw Error(ErrorCode::DependencyCycle, "send of chunk " + std::to_string(x.chunk) + " arrives before it departs");
    }
    const auto l = topology.find_link(x.src, x.dst);
    if (!l) {
      throw Error(ErrorCode::InvalidInput,
                  "no link " + std::to_string(x.src) + "->" + std::to_string(x.dst) + " in " + topology.name());
    }
    double ready = 0.0;
    if (auto it = delivered.find(key(x.chunk, x.src)); it != delivered.end()) {
      for (const Delivery& d : it->second) {
        if (d.arrive <= x.depart) ready = std::max(ready, d.end_us);
      }
    }
    const double start = std::max(ready, link_free[*l]);
    const double end = start + links[*l].delay_us(chunk_bytes);
    link_free[*l] = end;
    waits[*l].emplace_back(ready, start);
    report.links[*l].busy_us += end - start;
    ++report.links[*l].sends;
    delivered[key(x.chunk, x.dst)].push_back(Delivery{x.arrive(), end});
    report.timeline.push_back(SendTiming{x, ready, start, end});
    report.collective_time_us = std::max(report.collective_time_us, end);
  }

  for (std::size_t l = 0; l < links.size(); ++l) {
    if (report.collective_time_us > 0) report.links[l].utilization = report.links[l].busy_us / report.collective_time_us;
    // queue length sweep: +1 when ready, -1 when service starts
    std::vector<std::pair<double, int>> events;
    for (const auto& [ready, start] : waits[l]) {
      if (start > ready) {
        events.emplace_back(ready, 1);
        events.emplace_back(start, -1);
      }
    }
    std::sort(events.begin(), events.end());
    int q = 0;
    for (const auto& [t, delta] : events) {
      q += delta;
      report.max_congestion = std::max(report.max_congestion, q);
    }
  }
  return report;
}

nlohmann::json to_json(const CostReport& report, bool include_timeline) {
  nlohmann::json links = nlohmann::json::array();
  for (const LinkUsage& u : report.links) {
    links.push_back({{"src", u.src}, {"dst", u.dst}, {"busy_us", u.busy_us}, {"utilization", u.utilization}, {"sends", u.sends}});
  }
  nlohmann::json j = {{"collective_time_us", report.collective_time_us},
                      {"max_congestion", report.max_congestion},
                      {"model", report.model},
                      {"links", links}};
  if (include_timeline) {
    nlohmann::json tl = nlohmann::json::array();
    for (const SendTiming& t : report.timeline) {
      tl.push_back({{"chunk", t.send.chunk}, {"src", t.send.src}, {"dst", t.send.dst}, {"t", t.send.depart},
                    {"ready_us", t.ready_us}, {"start_us", t.start_us}, {"end_us", t.end_us}});
    }
    j["timeline"] = tl;
  }
  return j;
}

std::string timeline_csv(const CostReport& report) {
  std::ostringstream out;
  out << "chunk,src,dst,depart,steps,ready_us,start_us,end_us\n";
  char buf[96];
  for (const SendTiming& t : report.timeline) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", t.ready_us, t.start_us, t.end_us);
    out << t.send.chunk << ',' << t.send.src << ',' << t.send.dst << ',' << t.send.depart << ',' << t.send.steps << ','
        << buf << '\n';
  }
  return out.str();
}

std::vector<NpuId> route(const Topology& topology, const ShortestPaths& paths, NpuId src, NpuId dst) {
  if (const auto& shape = topology.mesh_shape()) {
    // xy routing: walk the column first, then the row
    std::vector<NpuId> hops{src};
    int r = src / shape->cols, c = src % shape->cols;
    const int tr = dst / shape->cols, tc = dst % shape->cols;
    bool ok = true;
    while (ok && (r != tr || c != tc)) {
      const NpuId from = r * shape->cols + c;
      if (c != tc) c += c < tc ? 1 : -1;
      else r += r < tr ? 1 : -1;
      const NpuId to = r * shape->cols + c;
      ok = topology.has_link(from, to);
      hops.push_back(to);
    }
    if (ok) return hops;
  }
  std::vector<NpuId> p = paths.path(src, dst);
  if (p.empty()) {
    throw Error(ErrorCode::UnreachableDestination, "no path " + std::to_string(src) + "->" + std::to_string(dst));
  }
  return p;
}

namespace {

struct BaselineSetup {
  DiscreteTopology dt;
  ShortestPaths paths;
  int n = 0;
  int per_npu = 0;
  bool reduce_scatter = false;
  bool all_gather = false;
};

BaselineSetup setup(const Topology& topology, const Collective& collective, double chunk_bytes) {
  BaselineSetup b;
  const CollectiveKind k = collective.kind;
  if (k != CollectiveKind::AllGather && k != CollectiveKind::ReduceScatter && k != CollectiveKind::AllReduce) {
    throw Error(ErrorCode::InvalidInput, "baselines cover all-gather, reduce-scatter and all-reduce");
  }
  b.n = collective.num_npus;
  if (topology.num_npus() != b.n || collective.num_chunks() % b.n != 0) {
    throw Error(ErrorCode::InvalidInput, "baseline needs n * k chunks on the topology's NPUs");
  }
  b.per_npu = collective.num_chunks() / b.n;
  b.reduce_scatter = k != CollectiveKind::AllGather;
  b.all_gather = k != CollectiveKind::ReduceScatter;
  b.dt = discretize(topology, chunk_bytes);
  b.paths = all_pairs_shortest_paths(b.dt);
  return b;
}

Schedule finish(const BaselineSetup& b, std::vector<Send> sends, const char* tag) {
  Schedule s;
  s.sends = std::move(sends);
  s.factor_us = b.dt.factor_us;
  s.chunk_bytes = b.dt.chunk_bytes;
  s.topology_name = b.dt.name;
  s.provenance.synthesizer = tag;
  // sorted but not deduplicated: two identical records are two transfers
  std::sort(s.sends.begin(), s.sends.end(), [](const Send& x, const Send& y) {
    return std::tie(x.depart, x.src, x.dst, x.chunk) < std::tie(y.depart, y.src, y.dst, y.chunk);
  });
  s.horizon = s.last_arrival();
  return s;
}

// Per-link busy intervals for ASAP placement.
struct Slots {
  std::vector<std::vector<std::pair<Timestep, Timestep>>> busy;
  Timestep place(std::size_t e, Timestep t, int k) {
    auto& v = busy[e];
    Timestep s = t;
    for (bool moved = true; moved;) {
      moved = false;
      for (const auto& [b, en] : v) {
        if (b < s + k && en > s) {
          s = en;
          moved = true;
        }
      }
    }
    v.emplace_back(s, s + k);
    return s;
  }
};

}  // namespace

Schedule baseline_ring(const Topology& topology, const Collective& collective, double chunk_bytes) {
  BaselineSetup b = setup(topology, collective, chunk_bytes);
  const int n = b.n, k = b.per_npu;
  Slots slots{std::vector<std::vector<std::pair<Timestep, Timestep>>>(b.dt.edges.size())};
  std::vector<Send> sends;
  // ready[c * n + npu]: when npu can forward chunk c in the current phase
  std::vector<Timestep> ready(static_cast<std::size_t>(n * k) * static_cast<std::size_t>(n), 0);
  auto at = [&](int c, int npu) -> Timestep& { return ready[static_cast<std::size_t>(c) * static_cast<std::size_t>(n) + static_cast<std::size_t>(npu)]; };

  auto hop = [&](int c, NpuId from, NpuId to) {
    const std::vector<NpuId> path = route(topology, b.paths, from, to);
    Timestep t = at(c, from);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      const std::size_t e = *b.dt.find_edge(path[i], path[i + 1]);
      const int steps = b.dt.edges[e].steps;
      const Timestep d = slots.place(e, t, steps);
      sends.push_back(Send{c, path[i], path[i + 1], d, steps});
      t = d + steps;
    }
    at(c, to) = std::max(at(c, to), t);
  };
  auto mod = [n](int v) { return ((v % n) + n) % n; };

  if (b.reduce_scatter) {
    for (int step = 0; step + 1 < n; ++step) {
      for (int j = 0; j < n; ++j) {
        const int owner = mod(j - 1 - step);
        for (int m = 0; m < k; ++m) hop(owner * k + m, j, mod(j + 1));
      }
    }
  }
  if (b.all_gather) {
    for (int step = 0; step + 1 < n; ++step) {
      for (int j = 0; j < n; ++j) {
        const int owner = mod(j - step);
        for (int m = 0; m < k; ++m) hop(owner * k + m, j, mod(j + 1));
      }
    }
  }
  return finish(b, std::move(sends), "ring-baseline");
}

Schedule baseline_direct(const Topology& topology, const Collective& collective, double chunk_bytes) {
  BaselineSetup b = setup(topology, collective, chunk_bytes);
  const int n = b.n, k = b.per_npu;
  std::vector<Send> sends;
  std::vector<Timestep> reduced(static_cast<std::size_t>(n * k), 0);

  auto walk = [&](int c, NpuId from, NpuId to, Timestep t) {
    const std::vector<NpuId> path = route(topology, b.paths, from, to);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      const int steps = b.dt.edges[*b.dt.find_edge(path[i], path[i + 1])].steps;
      sends.push_back(Send{c, path[i], path[i + 1], t, steps});
      t += steps;
    }
    return t;
  };

  for (int c = 0; c < n * k; ++c) {
    const NpuId owner = c / k;
    if (b.reduce_scatter) {
      for (NpuId j = 0; j < n; ++j) {
        if (j != owner) reduced[static_cast<std::size_t>(c)] = std::max(reduced[static_cast<std::size_t>(c)], walk(c, j, owner, 0));
      }
    }
    if (b.all_gather) {
      for (NpuId j = 0; j < n; ++j) {
        if (j != owner) walk(c, owner, j, reduced[static_cast<std::size_t>(c)]);
      }
    }
  }
  return finish(b, std::move(sends), "direct-baseline");
}

}  // namespace collsynth
