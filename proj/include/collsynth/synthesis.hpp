#pragma once

#include "collsynth/algorithm.hpp"
#include "collsynth/collective.hpp"
#include "collsynth/ilp.hpp"
#include "collsynth/topology.hpp"

#include <string>
#include <string_view>

namespace collsynth {

enum class Synthesizer { Ilp, Greedy, Clustered, TacclLike };

std::string_view to_string(Synthesizer s);
Synthesizer synthesizer_from_string(std::string_view name);

/// Any collective on any synthesizer. Combining collectives are inverted from their dual
/// synthesized on the transposed topology; All-Reduce is reduce-scatter then all-gather,
/// each phase getting half the time limit. Multi-tenant merges synthesize the combining
/// tenants first and schedule the rest around the links they occupy.
Schedule synthesize_collective(const Topology& topology, const Collective& collective, double chunk_bytes,
                               Synthesizer synthesizer, const SynthesisConfig& config);

/// Verifier options matching the synthesizer (relaxed congestion for taccl-like).
VerifyOptions verify_options_for(Synthesizer s);

}  // namespace collsynth
