#include "collsynth/topology.hpp"

#include "collsynth/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace collsynth {

LinkCost LinkCost::from_bandwidth(double alpha_us, double bandwidth_gbps) {
  if (bandwidth_gbps <= 0.0) {
    throw Error(ErrorCode::InvalidSpec, "bandwidth must be positive");
  }
  // 1 GB/s = 1e3 bytes/us
  return LinkCost{alpha_us, 1.0 / (bandwidth_gbps * 1e3)};
}

double Link::bandwidth_gbps() const {
  return beta_us_per_byte > 0.0 ? 1.0 / (beta_us_per_byte * 1e3) : 0.0;
}

Topology::Topology(int num_npus, std::vector<Link> links, std::string name)
    : num_npus_(num_npus), links_(std::move(links)), name_(std::move(name)) {
  if (num_npus_ < 1) {
    throw Error(ErrorCode::InvalidSize, "topology needs at least one NPU");
  }
  original_ids_.resize(static_cast<std::size_t>(num_npus_));
  std::iota(original_ids_.begin(), original_ids_.end(), 0);

  std::vector<std::pair<std::int64_t, std::size_t>> keyed;
  keyed.reserve(links_.size());
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const Link& l = links_[i];
    if (l.src < 0 || l.src >= num_npus_ || l.dst < 0 || l.dst >= num_npus_) {
      throw Error(ErrorCode::InvalidSpec, "link endpoint out of range");
    }
    if (l.src == l.dst) {
      throw Error(ErrorCode::InvalidSpec, "self-loop on NPU " + std::to_string(l.src));
    }
    if (!(l.alpha_us >= 0.0) || !(l.beta_us_per_byte >= 0.0)) {
      throw Error(ErrorCode::InvalidSpec, "link costs must be non-negative");
    }
    keyed.emplace_back(static_cast<std::int64_t>(l.src) * num_npus_ + l.dst, i);
  }
  std::sort(keyed.begin(), keyed.end());
  for (std::size_t i = 1; i < keyed.size(); ++i) {
    if (keyed[i].first == keyed[i - 1].first) {
      const Link& l = links_[keyed[i].second];
      throw Error(ErrorCode::InvalidSpec, "duplicate link " + std::to_string(l.src) + "->" +
                                              std::to_string(l.dst));
    }
  }
  pair_keys_.reserve(keyed.size());
  pair_index_.reserve(keyed.size());
  for (const auto& [key, idx] : keyed) {
    pair_keys_.push_back(key);
    pair_index_.push_back(idx);
  }
}

std::optional<std::size_t> Topology::find_link(NpuId src, NpuId dst) const {
  if (src < 0 || src >= num_npus_ || dst < 0 || dst >= num_npus_) return std::nullopt;
  const std::int64_t key = static_cast<std::int64_t>(src) * num_npus_ + dst;
  auto it = std::lower_bound(pair_keys_.begin(), pair_keys_.end(), key);
  if (it == pair_keys_.end() || *it != key) return std::nullopt;
  return pair_index_[static_cast<std::size_t>(it - pair_keys_.begin())];
}

Topology Topology::with_original_ids(std::vector<NpuId> ids) const {
  if (ids.size() != static_cast<std::size_t>(num_npus_)) {
    throw Error(ErrorCode::InvalidSpec, "original id map size mismatch");
  }
  Topology t = *this;
  t.original_ids_ = std::move(ids);
  return t;
}

Topology Topology::with_mesh_shape(MeshShape shape) const {
  Topology t = *this;
  t.mesh_shape_ = shape;
  return t;
}

Topology Topology::renamed(std::string name) const {
  Topology t = *this;
  t.name_ = std::move(name);
  return t;
}

namespace {

void add_link(std::vector<Link>& links, std::set<std::pair<int, int>>& seen, NpuId src, NpuId dst,
              LinkCost cost) {
  if (src == dst || !seen.emplace(src, dst).second) return;
  links.push_back(Link{src, dst, cost.alpha_us, cost.beta_us_per_byte});
}

}  // namespace

Topology build_ring(int n, bool bidirectional, LinkCost cost) {
  if (n < 2) throw Error(ErrorCode::InvalidSize, "ring needs n >= 2");
  std::vector<Link> links;
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < n; ++i) add_link(links, seen, i, (i + 1) % n, cost);
  if (bidirectional) {
    for (int i = 0; i < n; ++i) add_link(links, seen, (i + 1) % n, i, cost);
  }
  return Topology(n, std::move(links),
                  (bidirectional ? "BiRing(" : "Ring(") + std::to_string(n) + ")");
}

Topology build_fully_connected(int n, LinkCost cost) {
  if (n < 2) throw Error(ErrorCode::InvalidSize, "fully connected needs n >= 2");
  std::vector<Link> links;
  links.reserve(static_cast<std::size_t>(n) * (n - 1));
  for (int s = 0; s < n; ++s) {
    for (int d = 0; d < n; ++d) {
      if (s != d) links.push_back(Link{s, d, cost.alpha_us, cost.beta_us_per_byte});
    }
  }
  return Topology(n, std::move(links), "FC(" + std::to_string(n) + ")");
}

Topology build_mesh(int rows, int cols, LinkCost cost) {
  if (rows <= 0 || cols <= 0 || rows * cols < 2) {
    throw Error(ErrorCode::InvalidSize, "mesh needs rows, cols >= 1 and at least 2 NPUs");
  }
  std::vector<Link> links;
  auto id = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) {
        links.push_back(Link{id(r, c), id(r, c + 1), cost.alpha_us, cost.beta_us_per_byte});
        links.push_back(Link{id(r, c + 1), id(r, c), cost.alpha_us, cost.beta_us_per_byte});
      }
      if (r + 1 < rows) {
        links.push_back(Link{id(r, c), id(r + 1, c), cost.alpha_us, cost.beta_us_per_byte});
        links.push_back(Link{id(r + 1, c), id(r, c), cost.alpha_us, cost.beta_us_per_byte});
      }
    }
  }
  return Topology(rows * cols, std::move(links),
                  "Mesh(" + std::to_string(rows) + "x" + std::to_string(cols) + ")")
      .with_mesh_shape(MeshShape{rows, cols});
}

Topology unwind_switch(const SwitchSpec& spec) {
  const int n = spec.num_npus;
  if (n < 2) throw Error(ErrorCode::InvalidSize, "switch needs at least 2 NPUs");
  if (spec.degree < 1 || spec.degree > n - 1) {
    throw Error(ErrorCode::InvalidDegree, "degree " + std::to_string(spec.degree) +
                                              " outside 1.." + std::to_string(n - 1));
  }
  std::vector<Link> links;
  std::set<std::pair<int, int>> seen;
  std::string name = "Switch(" + std::to_string(n) + ",d=" + std::to_string(spec.degree);
  if (spec.degree == 1 && spec.bidirectional) {
    // Egress bandwidth split across both ring directions.
    const LinkCost cost{spec.alpha_us, 2.0 * spec.total_beta_us_per_byte};
    for (int i = 0; i < n; ++i) add_link(links, seen, i, (i + 1) % n, cost);
    for (int i = 0; i < n; ++i) add_link(links, seen, (i + 1) % n, i, cost);
    name += ",bi";
  } else {
    const LinkCost cost{spec.alpha_us, spec.degree * spec.total_beta_us_per_byte};
    for (int i = 0; i < n; ++i) {
      for (int k = 1; k <= spec.degree; ++k) add_link(links, seen, i, (i + k) % n, cost);
    }
  }
  return Topology(n, std::move(links), name + ")");
}

Topology compose_hierarchical(std::span<const Topology> dims) {
  if (dims.empty()) throw Error(ErrorCode::InvalidSpec, "composition needs at least one dimension");
  if (dims.size() == 1) return dims.front();

  std::vector<int> sizes;
  std::int64_t total = 1;
  for (const Topology& d : dims) {
    sizes.push_back(d.num_npus());
    total *= d.num_npus();
  }
  if (total > std::numeric_limits<int>::max() / 4) {
    throw Error(ErrorCode::InvalidSize, "composed topology too large");
  }
  const int n = static_cast<int>(total);

  std::vector<int> stride(dims.size(), 1);
  for (std::size_t i = 1; i < dims.size(); ++i) stride[i] = stride[i - 1] * sizes[i - 1];

  std::vector<Link> links;
  std::string name;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) name += "_";
    name += dims[i].name();
    for (NpuId base = 0; base < n; ++base) {
      const int coord = (base / stride[i]) % sizes[i];
      if (coord != 0) continue;  // enumerate each line of dimension i once, at coordinate 0
      for (const Link& l : dims[i].links()) {
        links.push_back(Link{base + l.src * stride[i], base + l.dst * stride[i], l.alpha_us,
                             l.beta_us_per_byte});
      }
    }
  }
  return Topology(n, std::move(links), name);
}

Topology remove_npus(const Topology& topology, std::span<const NpuId> failed) {
  std::vector<bool> dead(static_cast<std::size_t>(topology.num_npus()), false);
  for (NpuId f : failed) {
    if (f < 0 || f >= topology.num_npus()) {
      throw Error(ErrorCode::InvalidSpec, "failed NPU " + std::to_string(f) + " out of range");
    }
    dead[static_cast<std::size_t>(f)] = true;
  }
  std::vector<NpuId> remap(dead.size(), -1);
  std::vector<NpuId> originals;
  for (NpuId i = 0; i < topology.num_npus(); ++i) {
    if (dead[static_cast<std::size_t>(i)]) continue;
    remap[static_cast<std::size_t>(i)] = static_cast<NpuId>(originals.size());
    originals.push_back(topology.original_ids()[static_cast<std::size_t>(i)]);
  }
  if (originals.empty()) throw Error(ErrorCode::InvalidSize, "all NPUs removed");

  std::vector<Link> links;
  for (const Link& l : topology.links()) {
    const NpuId s = remap[static_cast<std::size_t>(l.src)];
    const NpuId d = remap[static_cast<std::size_t>(l.dst)];
    if (s < 0 || d < 0) continue;
    links.push_back(Link{s, d, l.alpha_us, l.beta_us_per_byte});
  }
  std::string name = topology.name();
  if (!failed.empty()) {
    name += "-fail{";
    for (std::size_t i = 0; i < failed.size(); ++i) {
      if (i) name += ",";
      name += std::to_string(failed[i]);
    }
    name += "}";
  }
  return Topology(static_cast<int>(originals.size()), std::move(links), name)
      .with_original_ids(std::move(originals));
}

Topology transpose(const Topology& topology) {
  std::vector<Link> links;
  links.reserve(topology.links().size());
  for (const Link& l : topology.links()) {
    links.push_back(Link{l.dst, l.src, l.alpha_us, l.beta_us_per_byte});
  }
  Topology t(topology.num_npus(), std::move(links), topology.name() + "^T");
  t = t.with_original_ids(topology.original_ids());
  if (topology.mesh_shape()) t = t.with_mesh_shape(*topology.mesh_shape());
  return t;
}

int DiscreteTopology::max_steps() const {
  int m = 1;
  for (const DiscreteEdge& e : edges) m = std::max(m, e.steps);
  return m;
}

std::optional<std::size_t> DiscreteTopology::find_edge(NpuId src, NpuId dst) const {
  if (src < 0 || src >= num_npus) return std::nullopt;
  for (std::size_t e : out_edges[static_cast<std::size_t>(src)]) {
    if (edges[e].dst == dst) return e;
  }
  return std::nullopt;
}

DiscreteTopology discretize(const Topology& topology, double chunk_bytes,
                            std::optional<double> factor_us) {
  if (!(chunk_bytes > 0.0)) throw Error(ErrorCode::InvalidSpec, "chunk size must be positive");
  if (factor_us && !(*factor_us > 0.0)) {
    throw Error(ErrorCode::InvalidFactor, "discretization factor must be positive");
  }
  double f = 0.0;
  if (factor_us) {
    f = *factor_us;
  } else {
    f = std::numeric_limits<double>::infinity();
    for (const Link& l : topology.links()) f = std::min(f, l.delay_us(chunk_bytes));
    if (topology.links().empty()) f = 1.0;
  }
  if (!(f > 0.0)) throw Error(ErrorCode::InvalidFactor, "links must have positive delay");

  DiscreteTopology dt;
  dt.num_npus = topology.num_npus();
  dt.factor_us = f;
  dt.chunk_bytes = chunk_bytes;
  dt.name = topology.name();
  dt.out_edges.resize(static_cast<std::size_t>(dt.num_npus));
  dt.in_edges.resize(static_cast<std::size_t>(dt.num_npus));

  // Keep edges in (src, dst) order so every consumer sees a deterministic layout.
  std::vector<std::size_t> order(topology.links().size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Link& la = topology.links()[a];
    const Link& lb = topology.links()[b];
    return std::tie(la.src, la.dst) < std::tie(lb.src, lb.dst);
  });
  for (std::size_t idx : order) {
    const Link& l = topology.links()[idx];
    const double delay = l.delay_us(chunk_bytes);
    if (!(delay > 0.0)) throw Error(ErrorCode::InvalidFactor, "link with zero delay");
    // The small slack absorbs representation error when delay is an exact multiple of f.
    const int steps = std::max(1, static_cast<int>(std::ceil(delay / f - 1e-9)));
    const std::size_t e = dt.edges.size();
    dt.edges.push_back(DiscreteEdge{l.src, l.dst, steps, delay, idx});
    dt.out_edges[static_cast<std::size_t>(l.src)].push_back(e);
    dt.in_edges[static_cast<std::size_t>(l.dst)].push_back(e);
  }
  return dt;
}

std::vector<NpuId> ShortestPaths::path(NpuId src, NpuId dst) const {
  if (!reachable(src, dst)) return {};
  std::vector<NpuId> p{src};
  NpuId cur = src;
  while (cur != dst) {
    cur = next_hop(cur, dst);
    p.push_back(cur);
  }
  return p;
}

ShortestPaths all_pairs_shortest_paths(const DiscreteTopology& dt) {
  const int n = dt.num_npus;
  ShortestPaths sp;
  sp.dist = Eigen::MatrixXi::Constant(n, n, kUnreachable);
  sp.next_hop = Eigen::MatrixXi::Constant(n, n, -1);
  for (int i = 0; i < n; ++i) sp.dist(i, i) = 0;
  for (const DiscreteEdge& e : dt.edges) {
    if (e.steps < sp.dist(e.src, e.dst)) {
      sp.dist(e.src, e.dst) = e.steps;
      sp.next_hop(e.src, e.dst) = e.dst;
    }
  }
  // Floyd-Warshall; strict improvement keeps the lowest intermediate on ties.
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      const int dik = sp.dist(i, k);
      if (dik >= kUnreachable) continue;
      for (int j = 0; j < n; ++j) {
        const int dkj = sp.dist(k, j);
        if (dkj >= kUnreachable) continue;
        if (dik + dkj < sp.dist(i, j)) {
          sp.dist(i, j) = dik + dkj;
          sp.next_hop(i, j) = sp.next_hop(i, k);
        }
      }
    }
  }
  return sp;
}

std::vector<int> single_source_distances(const DiscreteTopology& dt, NpuId src) {
  std::vector<int> dist(static_cast<std::size_t>(dt.num_npus), kUnreachable);
  using Item = std::pair<int, NpuId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[static_cast<std::size_t>(src)] = 0;
  pq.emplace(0, src);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    for (std::size_t e : dt.out_edges[static_cast<std::size_t>(u)]) {
      const DiscreteEdge& edge = dt.edges[e];
      const int nd = d + edge.steps;
      if (nd < dist[static_cast<std::size_t>(edge.dst)]) {
        dist[static_cast<std::size_t>(edge.dst)] = nd;
        pq.emplace(nd, edge.dst);
      }
    }
  }
  return dist;
}

int diameter(const DiscreteTopology& dt) {
  const ShortestPaths sp = all_pairs_shortest_paths(dt);
  return sp.dist.size() ? sp.dist.maxCoeff() : 0;
}

nlohmann::json to_json(const Topology& topology) {
  nlohmann::json links = nlohmann::json::array();
  for (const Link& l : topology.links()) {
    links.push_back({{"src", l.src},
                     {"dst", l.dst},
                     {"alpha_us", l.alpha_us},
                     {"bw_GBps", l.bandwidth_gbps()}});
  }
  nlohmann::json j = {{"name", topology.name()}, {"npus", topology.num_npus()}, {"links", links}};
  if (topology.mesh_shape()) {
    j["mesh"] = {{"rows", topology.mesh_shape()->rows}, {"cols", topology.mesh_shape()->cols}};
  }
  bool identity = true;
  for (std::size_t i = 0; i < topology.original_ids().size(); ++i) {
    identity = identity && topology.original_ids()[i] == static_cast<NpuId>(i);
  }
  if (!identity) j["original_ids"] = topology.original_ids();
  return j;
}

Topology topology_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("npus").get<int>();
    std::vector<Link> links;
    for (const auto& lj : j.at("links")) {
      const double bw = lj.at("bw_GBps").get<double>();
      // bw_GBps == 0 encodes an infinite-bandwidth (latency-only) link.
      const double beta = bw > 0.0 ? 1.0 / (bw * 1e3) : 0.0;
      links.push_back(Link{lj.at("src").get<int>(), lj.at("dst").get<int>(),
                           lj.at("alpha_us").get<double>(), beta});
    }
    Topology t(n, std::move(links), j.value("name", std::string("topology")));
    if (j.contains("mesh")) {
      t = t.with_mesh_shape(MeshShape{j["mesh"].at("rows").get<int>(), j["mesh"].at("cols").get<int>()});
    }
    if (j.contains("original_ids")) t = t.with_original_ids(j["original_ids"].get<std::vector<int>>());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("topology JSON: ") + e.what());
  }
}

}  // namespace collsynth
