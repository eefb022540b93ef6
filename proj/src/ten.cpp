#include "collsynth/ten.hpp"

#include "collsynth/error.hpp"

#include <algorithm>
#include <sstream>

namespace collsynth {

TimeExpandedNetwork::TimeExpandedNetwork(std::shared_ptr<const DiscreteTopology> base,
                                         Timestep horizon)
    : base_(std::move(base)), horizon_(horizon) {
  if (horizon_ < 1) throw Error(ErrorCode::InvalidHorizon, "TEN horizon must be >= 1");

  // DiscreteTopology edges are already sorted by (src, dst).
  layer_offsets_.assign(static_cast<std::size_t>(horizon_) + 1, 0);
  for (Timestep t = 0; t < horizon_; ++t) {
    layer_offsets_[static_cast<std::size_t>(t)] = edges_.size();
    for (std::size_t e = 0; e < base_->edges.size(); ++e) {
      const DiscreteEdge& de = base_->edges[e];
      if (t + de.steps <= horizon_) edges_.push_back(TenEdge{de.src, de.dst, de.steps, t, e});
    }
  }
  layer_offsets_[static_cast<std::size_t>(horizon_)] = edges_.size();
}

std::span<const TenEdge> TimeExpandedNetwork::edges_departing(Timestep t) const {
  if (t < 0 || t > horizon_) throw Error(ErrorCode::InvalidHorizon, "timestep out of range");
  if (t == horizon_) return {};
  const std::size_t lo = layer_offsets_[static_cast<std::size_t>(t)];
  const std::size_t hi = layer_offsets_[static_cast<std::size_t>(t) + 1];
  return std::span<const TenEdge>(edges_).subspan(lo, hi - lo);
}

std::string TimeExpandedNetwork::to_dot() const {
  std::ostringstream out;
  out << "digraph TEN {\n  rankdir=LR;\n";
  for (Timestep t = 0; t <= horizon_; ++t) {
    out << "  subgraph cluster_t" << t << " { label=\"t=" << t << "\"; ";
    for (NpuId n = 0; n < base_->num_npus; ++n) out << "n" << n << "_" << t << "; ";
    out << "}\n";
  }
  for (Timestep t = 0; t < horizon_; ++t) {
    for (NpuId n = 0; n < base_->num_npus; ++n) {
      out << "  n" << n << "_" << t << " -> n" << n << "_" << t + 1 << " [style=dotted];\n";
    }
  }
  for (const TenEdge& e : edges_) {
    out << "  n" << e.src << "_" << e.depart << " -> n" << e.dst << "_" << e.arrive();
    if (e.steps > 1) out << " [label=\"" << e.steps << "\"]";
    out << ";\n";
  }
  out << "}\n";
  return out.str();
}

TimeExpandedNetwork expand(const DiscreteTopology& dt, Timestep horizon) {
  return TimeExpandedNetwork(std::make_shared<const DiscreteTopology>(dt), horizon);
}

TimeExpandedNetwork expand(std::shared_ptr<const DiscreteTopology> dt, Timestep horizon) {
  return TimeExpandedNetwork(std::move(dt), horizon);
}

}  // namespace collsynth
