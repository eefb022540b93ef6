#pragma once

#include "collsynth/collective.hpp"
#include "collsynth/topology.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace collsynth {

/// A chunk occupying one link from `depart` for `steps` timesteps.
struct Send {
  ChunkId chunk = 0;
  NpuId src = 0;
  NpuId dst = 0;
  Timestep depart = 0;
  int steps = 1;

  Timestep arrive() const { return depart + steps; }
  auto operator<=>(const Send&) const = default;
};

/// Link occupancy is the half-open interval [depart, depart + steps). Shared by the
/// verifier, the ILP congestion rows and the greedy link bookkeeping.
inline bool occupancy_overlaps(Timestep a_depart, int a_steps, Timestep b_depart, int b_steps) {
  return a_depart < b_depart + b_steps && b_depart < a_depart + a_steps;
}

struct Provenance {
  std::string synthesizer;
  std::uint64_t seed = 0;
  std::string config_digest;
  bool optimal = false;       // horizon proven minimal in discretized steps
  bool time_limited = false;  // some search stopped on its time limit
  std::string note;
};

struct Schedule {
  std::vector<Send> sends;
  Timestep horizon = 0;
  double factor_us = 0.0;
  double chunk_bytes = 0.0;
  std::string topology_name;
  Provenance provenance;

  /// Sorts sends by (depart, src, dst, chunk) and removes exact duplicates.
  void normalize();
  Timestep last_arrival() const;
};

enum class ViolationKind {
  MalformedSend,
  NonexistentLink,
  LatencyTooShort,
  UnheldChunk,
  LinkCongestion,
  DoubleCount,
  HorizonTooShort,
  UnmetPostcondition,
};

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;
  std::optional<std::size_t> send_index;
};

struct VerifyOptions {
  bool check_congestion = true;  // false = relaxed mode for congestion-blind schedules
};

struct VerifyReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
  std::string summary() const;
};

/// Replays contribution sets layer by layer. A chunk's contributors are its precondition
/// holders; non-combining chunks have one contributor, so "holding" and "having a complete
/// partial" coincide. Receiving a superset replaces, a disjoint set merges, a partial
/// overlap is a double count.
VerifyReport verify(const Schedule& s, const Topology& topology, const Collective& collective,
                    const VerifyOptions& options = {});

/// Mirrors a schedule in time and direction: (c, a, b, t, k) -> (c, b, a, H - t - k, k).
Schedule invert(const Schedule& s);
/// invert() after checking `s` is verifier-clean for the non-combining `collective`.
Schedule invert_checked(const Schedule& s, const Topology& topology, const Collective& collective);

Schedule shift(const Schedule& s, Timestep offset);

/// Reduce-scatter followed by all-gather, the latter shifted by rs.horizon.
Schedule compose_allreduce(const Schedule& rs, const Collective& rs_collective, const Schedule& ag,
                           const Collective& ag_collective);

/// For non-combining collectives: keeps one delivery per (chunk, npu) (earliest arrival,
/// then lowest depart/src), drops deliveries to precondition holders and, repeatedly, relay
/// deliveries whose receiver neither needs the chunk nor forwards it.
Schedule prune_redundant(const Schedule& s, const Collective& collective);

inline constexpr Timestep kNever = std::numeric_limits<int>::max() / 4;

/// Earliest timestep each (chunk, npu) holds its chunk, indexed chunk * num_npus + npu.
std::vector<Timestep> hold_times(const Schedule& s, const Collective& collective);

nlohmann::json to_json(const Schedule& s);
Schedule schedule_from_json(const nlohmann::json& j);
std::string save_schedule(const Schedule& s);
Schedule load_schedule(const std::string& text);

/// 64-bit FNV-1a digest rendered as 16 hex chars.
std::string digest_hex(const std::string& text);

}  // namespace collsynth
