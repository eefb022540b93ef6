#pragma once

#include "collsynth/topology.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace collsynth {

/// Cross-NPU edge (src, depart) -> (dst, depart + steps).
struct TenEdge {
  NpuId src = 0;
  NpuId dst = 0;
  int steps = 1;
  Timestep depart = 0;
  std::size_t base_edge = 0;  // index into DiscreteTopology::edges

  Timestep arrive() const { return depart + steps; }
};

/// Time-expanded network over layers 0..horizon. Self edges (n, t) -> (n, t + 1) are implicit.
class TimeExpandedNetwork {
 public:
  TimeExpandedNetwork(std::shared_ptr<const DiscreteTopology> base, Timestep horizon);

  const DiscreteTopology& base() const { return *base_; }
  Timestep horizon() const { return horizon_; }

  /// All cross edges ordered by (depart, src, dst).
  const std::vector<TenEdge>& edges() const { return edges_; }
  std::span<const TenEdge> edges_departing(Timestep t) const;

  std::size_t num_nodes() const {
    return static_cast<std::size_t>(base_->num_npus) * static_cast<std::size_t>(horizon_ + 1);
  }
  std::size_t num_self_edges() const {
    return static_cast<std::size_t>(base_->num_npus) * static_cast<std::size_t>(horizon_);
  }

  /// Layered Graphviz dump for inspection.
  std::string to_dot() const;

 private:
  std::shared_ptr<const DiscreteTopology> base_;
  Timestep horizon_ = 0;
  std::vector<TenEdge> edges_;
  std::vector<std::size_t> layer_offsets_;  // size horizon + 1
};

TimeExpandedNetwork expand(const DiscreteTopology& dt, Timestep horizon);
TimeExpandedNetwork expand(std::shared_ptr<const DiscreteTopology> dt, Timestep horizon);

}  // namespace collsynth
