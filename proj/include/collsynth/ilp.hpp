#pragma once

#include "collsynth/algorithm.hpp"
#include "collsynth/collective.hpp"
#include "collsynth/solver.hpp"
#include "collsynth/ten.hpp"
#include "collsynth/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <vector>

namespace collsynth {

/// Link (src, dst) unavailable over [begin, end).
struct LinkReservation {
  NpuId src = 0;
  NpuId dst = 0;
  Timestep begin = 0;
  Timestep end = 0;
};

struct SynthesisConfig {
  double time_limit_s = 60.0;
  int cluster_window = 0;  // 0 = disabled
  std::optional<Timestep> tf_start;
  bool taccl_like = false;
  std::uint64_t rng_seed = 0;
  std::optional<double> factor_us;

  /// Branch-and-bound nodes spent improving earliness after the first complete schedule
  /// at a given t_f. Node counts keep the result independent of machine speed.
  std::int64_t polish_nodes = 2000;
  /// Per-window limit for clustering; defaults to time_limit_s / 10.
  std::optional<double> window_time_limit_s;
  /// Greedy best-of-k.
  int runs = 1;
  std::vector<LinkReservation> reservations;
};

nlohmann::json to_json(const SynthesisConfig& config);

struct SentVar {
  int var = 0;
  ChunkId chunk = 0;
  TenEdge edge;
};

struct IlpModel {
  BinaryProgram program;
  int num_chunks = 0;
  int num_npus = 0;
  Timestep horizon = 0;
  std::vector<int> hold_vars;  // (chunk * num_npus + npu) * (horizon + 1) + t
  std::vector<SentVar> sent;
  /// Objective of any solution meeting every pinned final hold (pinned models only).
  double pinned_floor = 0.0;

  int hold(ChunkId c, NpuId n, Timestep t) const {
    return hold_vars[(static_cast<std::size_t>(c) * static_cast<std::size_t>(num_npus) + static_cast<std::size_t>(n)) *
                         static_cast<std::size_t>(horizon + 1) +
                     static_cast<std::size_t>(t)];
  }
};

struct ModelOptions {
  /// Fix hold(c, n, T) = 1 for postcondition pairs: the model is feasible iff the
  /// collective completes within T.
  bool pin_final = false;
  /// Omit variables that provably cannot matter (sends into precondition holders, sends
  /// whose source cannot hold the chunk yet, sends too late to reach any destination).
  bool presolve = false;
  /// Objective weight per (chunk * num_npus + npu); empty = 1 for every postcondition pair
  /// outside the precondition.
  std::vector<double> weights;
};

IlpModel build_model(const TimeExpandedNetwork& ten, const Collective& collective, const SynthesisConfig& config,
                     const ModelOptions& options = {});

/// Sends of every set sent variable.
Schedule decode(const IlpModel& model, const std::vector<std::uint8_t>& assignment, const DiscreteTopology& dt);

/// Smallest-t_f search; see SynthesisConfig for limits. Non-combining collectives only.
Schedule synthesize(const Topology& topology, const Collective& collective, double chunk_bytes,
                    const SynthesisConfig& config);

/// Completes a prefix-valid partial schedule along shortest paths at earliest free slots.
Schedule recover_early_termination(const Schedule& partial, const DiscreteTopology& dt, const Collective& collective,
                                   const std::vector<LinkReservation>& reservations = {});

Schedule synthesize_clustered(const Topology& topology, const Collective& collective, double chunk_bytes,
                              const SynthesisConfig& config);

/// Largest over postcondition pairs of the distance from the nearest precondition holder;
/// throws UnreachableDestination when some pair has no path.
Timestep collective_lower_bound(const ShortestPaths& paths, const Collective& collective);

/// Smallest T at which every NPU's in-links could deliver all the chunks it lacks, each
/// link carrying one chunk per `steps` timesteps. Valid only under link exclusivity.
Timestep ingress_lower_bound(const DiscreteTopology& dt, const Collective& collective);

}  // namespace collsynth
