#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace collsynth {

using NpuId = int;
using Timestep = int;

/// Per-link cost under the alpha-beta model: delay(n) = alpha + beta * n.
struct LinkCost {
  double alpha_us = 0.0;
  double beta_us_per_byte = 0.0;

  /// Bandwidth in GB/s (1 GB = 1e9 bytes) converted to inverse bandwidth in us/byte.
  static LinkCost from_bandwidth(double alpha_us, double bandwidth_gbps);
};

struct Link {
  NpuId src = 0;
  NpuId dst = 0;
  double alpha_us = 0.0;
  double beta_us_per_byte = 0.0;

  double delay_us(double bytes) const { return alpha_us + beta_us_per_byte * bytes; }
  double bandwidth_gbps() const;
};

struct MeshShape {
  int rows = 0;
  int cols = 0;
};

/// Directed NPU graph. Immutable once built; ids are 0..num_npus-1.
class Topology {
 public:
  Topology() = default;
  Topology(int num_npus, std::vector<Link> links, std::string name);

  int num_npus() const { return num_npus_; }
  const std::vector<Link>& links() const { return links_; }
  const std::string& name() const { return name_; }

  /// Index into links() for the ordered pair, if present.
  std::optional<std::size_t> find_link(NpuId src, NpuId dst) const;
  bool has_link(NpuId src, NpuId dst) const { return find_link(src, dst).has_value(); }

  /// Original NPU id for each current id (identity unless NPUs were removed).
  const std::vector<NpuId>& original_ids() const { return original_ids_; }
  const std::optional<MeshShape>& mesh_shape() const { return mesh_shape_; }

  Topology with_original_ids(std::vector<NpuId> ids) const;
  Topology with_mesh_shape(MeshShape shape) const;
  Topology renamed(std::string name) const;

 private:
  int num_npus_ = 0;
  std::vector<Link> links_;
  std::string name_;
  std::vector<NpuId> original_ids_;
  std::optional<MeshShape> mesh_shape_;
  std::vector<std::int64_t> pair_keys_;  // sorted (src * n + dst)
  std::vector<std::size_t> pair_index_;
};

struct DiscreteEdge {
  NpuId src = 0;
  NpuId dst = 0;
  int steps = 1;
  double delay_us = 0.0;
  std::size_t link_index = 0;
};

/// Topology with every link delay rounded up to a whole number of timesteps.
struct DiscreteTopology {
  int num_npus = 0;
  std::vector<DiscreteEdge> edges;
  double factor_us = 0.0;
  double chunk_bytes = 0.0;
  std::string name;

  std::vector<std::vector<std::size_t>> out_edges;  // edge indices by src
  std::vector<std::vector<std::size_t>> in_edges;   // edge indices by dst

  int max_steps() const;
  std::optional<std::size_t> find_edge(NpuId src, NpuId dst) const;
};

struct SwitchSpec {
  int num_npus = 0;
  double alpha_us = 0.0;
  double total_beta_us_per_byte = 0.0;  // inverse of the full egress bandwidth
  int degree = 1;
  bool bidirectional = false;  // only meaningful for degree 1
};

inline constexpr int kUnreachable = std::numeric_limits<int>::max() / 4;

/// All-pairs shortest paths in discretized steps with next-hop reconstruction.
struct ShortestPaths {
  Eigen::MatrixXi dist;      // kUnreachable when no path
  Eigen::MatrixXi next_hop;  // -1 when no path or src == dst

  int distance(NpuId src, NpuId dst) const { return dist(src, dst); }
  bool reachable(NpuId src, NpuId dst) const { return dist(src, dst) < kUnreachable; }
  /// NPU sequence src..dst inclusive; empty when unreachable.
  std::vector<NpuId> path(NpuId src, NpuId dst) const;
};

Topology build_ring(int n, bool bidirectional, LinkCost cost);
Topology build_fully_connected(int n, LinkCost cost);
Topology build_mesh(int rows, int cols, LinkCost cost);
Topology unwind_switch(const SwitchSpec& spec);

/// Dimension-product composition; dimension 0 varies fastest in the NPU id.
Topology compose_hierarchical(std::span<const Topology> dims);

/// Drops the given NPUs and their links, re-indexing survivors in id order.
Topology remove_npus(const Topology& topology, std::span<const NpuId> failed);

/// Reverses every link direction.
Topology transpose(const Topology& topology);

DiscreteTopology discretize(const Topology& topology, double chunk_bytes,
                            std::optional<double> factor_us = std::nullopt);

ShortestPaths all_pairs_shortest_paths(const DiscreteTopology& dt);
/// Single-source Dijkstra distances; used to cross-check the all-pairs result.
std::vector<int> single_source_distances(const DiscreteTopology& dt, NpuId src);
/// Largest finite-or-not pairwise distance; kUnreachable if any pair is disconnected.
int diameter(const DiscreteTopology& dt);

nlohmann::json to_json(const Topology& topology);
Topology topology_from_json(const nlohmann::json& j);

}  // namespace collsynth
