#pragma once

#include "collsynth/topology.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace collsynth {

using ChunkId = int;

enum class CollectiveKind {
  Scatter,
  Gather,
  Broadcast,
  Reduce,
  ReduceScatter,
  AllGather,
  AllReduce,
  AllToAll,
  Custom,
};

std::string_view to_string(CollectiveKind kind);
CollectiveKind collective_kind_from_string(std::string_view name);

bool is_rooted(CollectiveKind kind);
bool is_combining(CollectiveKind kind);

struct Chunk {
  ChunkId id = 0;
  double size_bytes = 0.0;
};

struct Placement {
  ChunkId chunk = 0;
  NpuId npu = 0;

  auto operator<=>(const Placement&) const = default;
};

/// One member of a multi-tenant merge, in merged chunk/NPU ids.
struct Tenant {
  CollectiveKind kind = CollectiveKind::Custom;
  std::vector<ChunkId> chunks;
  std::vector<NpuId> npus;
  bool combining = false;
  std::optional<NpuId> root;
};

/// Pre/postcondition chunk placement. Placements are kept sorted and unique.
struct Collective {
  CollectiveKind kind = CollectiveKind::Custom;
  int num_npus = 0;
  std::vector<Chunk> chunks;
  std::vector<Placement> pre;
  std::vector<Placement> post;
  bool combining = false;
  std::optional<NpuId> root;
  std::vector<Tenant> tenants;

  int num_chunks() const { return static_cast<int>(chunks.size()); }
  /// NPUs listed for each chunk in the precondition.
  std::vector<std::vector<NpuId>> pre_holders() const;
  /// NPUs listed for each chunk in the postcondition.
  std::vector<std::vector<NpuId>> post_holders() const;

  /// Throws InvalidSpec if any structural invariant is broken.
  void validate() const;
};

Collective make_collective(CollectiveKind kind, int num_npus, int chunks_per_npu, double chunk_bytes,
                           std::optional<NpuId> root = std::nullopt);

/// Non-combining dual whose inverted schedule realizes `c` (pre and post swapped).
Collective combining_counterpart(const Collective& c);

struct TenantSpec {
  Collective collective;
  std::vector<NpuId> npus;  // local NPU i maps to npus[i]
};

/// Union of remapped collectives as one Custom collective; chunk ids are renumbered
/// consecutively in input order.
Collective merge_collectives(std::span<const TenantSpec> parts, int num_npus);

nlohmann::json to_json(const Collective& c);
Collective collective_from_json(const nlohmann::json& j, int num_npus);

}  // namespace collsynth
