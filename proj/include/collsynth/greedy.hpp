#pragma once

#include "collsynth/algorithm.hpp"
#include "collsynth/collective.hpp"
#include "collsynth/ilp.hpp"
#include "collsynth/topology.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <random>
#include <vector>

namespace collsynth {

/// One randomized matching run, advanced one discretized timestep per tick.
class GreedyState {
 public:
  GreedyState(const DiscreteTopology& dt, const ShortestPaths& paths, const Collective& collective,
              std::uint64_t seed, std::vector<LinkReservation> reservations = {});

  Timestep clock() const { return clock_; }
  bool done() const { return unmet_ == 0; }

  /// Lands sends arriving at the current clock.
  void commit_arrivals();
  /// Cancels in-flight sends whose chunk already reached the destination; when the source
  /// holds another chunk the destination still lacks, that chunk departs now instead.
  std::vector<std::pair<Send, std::optional<Send>>> replace_outdated();
  /// Matches demanded (npu, chunk) pairs to free in-links; returns the sends departing now.
  std::vector<Send> match_step();
  void advance() { ++clock_; }

  /// commit_arrivals, replace_outdated, match_step, advance.
  void tick();

  Timestep hold_time(ChunkId c, NpuId n) const { return hold_[index(c, n)]; }
  /// Committed sends (cancelled ones removed).
  Schedule schedule() const;

 private:
  struct Flight {
    Send send;
    std::size_t edge;
    bool cancelled = false;
  };

  std::size_t index(ChunkId c, NpuId n) const {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(n);
  }
  bool link_free(std::size_t edge, Timestep t, int steps, const Flight* ignore = nullptr) const;
  bool wants(ChunkId c, NpuId d) const;
  int urgency(ChunkId c, NpuId d) const;
  void refresh_frontier();

  const DiscreteTopology& dt_;
  const ShortestPaths& paths_;
  int n_ = 0;
  int num_chunks_ = 0;
  Timestep clock_ = 0;
  std::mt19937_64 rng_;
  std::vector<LinkReservation> reservations_;

  std::vector<Timestep> hold_;      // arrival time, kNever if not held
  std::vector<Timestep> en_route_;  // earliest in-flight arrival, kNever if none
  std::vector<char> wanted_;
  std::vector<std::vector<NpuId>> unmet_by_chunk_;
  std::vector<int> frontier_;  // distance from holders (or in-flight targets) per cell
  int unmet_ = 0;
  std::vector<Flight> flights_;
  std::vector<std::vector<std::size_t>> edge_flights_;
  std::vector<std::vector<std::pair<Timestep, Timestep>>> edge_reserved_;
};

/// Single matching run; throws Stall if the watchdog fires.
Schedule greedy_run(const DiscreteTopology& dt, const ShortestPaths& paths, const Collective& collective,
                    std::uint64_t seed, const std::vector<LinkReservation>& reservations = {});

/// Seed of run i derived from the base seed.
std::uint64_t derive_seed(std::uint64_t base, int run);

/// Best of config.runs independent runs by evaluated collective time (ties: lowest run index).
Schedule synthesize_greedy(const Topology& topology, const Collective& collective, double chunk_bytes,
                           const SynthesisConfig& config);

}  // namespace collsynth
