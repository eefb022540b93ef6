#pragma once

#include "collsynth/algorithm.hpp"
#include "collsynth/collective.hpp"
#include "collsynth/topology.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace collsynth {

struct SendTiming {
  Send send;
  double ready_us = 0.0;
  double start_us = 0.0;
  double end_us = 0.0;
};

struct LinkUsage {
  NpuId src = 0;
  NpuId dst = 0;
  double busy_us = 0.0;
  double utilization = 0.0;  // busy fraction of the collective time
  int sends = 0;
};

struct CostReport {
  double collective_time_us = 0.0;
  std::vector<LinkUsage> links;  // every topology link, in topology order
  int max_congestion = 0;        // most sends ever waiting on one link
  std::vector<SendTiming> timeline;
  std::string model = "fifo-exclusive-link";
};

/// Continuous-time replay. A send is ready once every delivery of its chunk to the source
/// that lands by its discrete departure has arrived (none = precondition, ready at 0); each
/// link serves sends one at a time in (discrete depart, chunk) order for alpha + beta * size.
CostReport evaluate(const Schedule& s, const Topology& topology, double chunk_bytes);

nlohmann::json to_json(const CostReport& report, bool include_timeline = false);
std::string timeline_csv(const CostReport& report);

/// Ring rotation over the logical ring 0 -> 1 -> ... -> n-1 -> 0, each logical hop routed
/// over physical links (xy on meshes, shortest paths elsewhere). All-Gather,
/// Reduce-Scatter and All-Reduce only.
Schedule baseline_ring(const Topology& topology, const Collective& collective, double chunk_bytes);

/// Every chunk sent straight to every destination that needs it, hop after hop with no
/// congestion avoidance. All-Gather, Reduce-Scatter and All-Reduce only.
Schedule baseline_direct(const Topology& topology, const Collective& collective, double chunk_bytes);

/// Physical route used by the baselines.
std::vector<NpuId> route(const Topology& topology, const ShortestPaths& paths, NpuId src, NpuId dst);

}  // namespace collsynth
