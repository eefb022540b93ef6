#include "collsynth/synthesis.hpp"

#include "collsynth/error.hpp"
#include "collsynth/greedy.hpp"

#include <algorithm>
#include <set>

namespace collsynth {

std::string_view to_string(Synthesizer s) {
  switch (s) {
    case Synthesizer::Ilp: return "ilp";
    case Synthesizer::Greedy: return "greedy";
    case Synthesizer::Clustered: return "clustered";
    case Synthesizer::TacclLike: return "taccl-like";
  }
  return "unknown";
}

Synthesizer synthesizer_from_string(std::string_view name) {
  for (Synthesizer s : {Synthesizer::Ilp, Synthesizer::Greedy, Synthesizer::Clustered, Synthesizer::TacclLike}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorCode::InvalidInput, "unknown synthesizer '" + std::string(name) + "'");
}

VerifyOptions verify_options_for(Synthesizer s) {
  VerifyOptions o;
  o.check_congestion = s != Synthesizer::TacclLike;
  return o;
}

namespace {

Schedule run_plain(const Topology& topology, const Collective& collective, double chunk_bytes, Synthesizer kind,
                   const SynthesisConfig& config) {
  switch (kind) {
    case Synthesizer::Ilp: return synthesize(topology, collective, chunk_bytes, config);
    case Synthesizer::TacclLike: {
      SynthesisConfig c = config;
      c.taccl_like = true;
      Schedule s = synthesize(topology, collective, chunk_bytes, c);
      s.provenance.synthesizer = "taccl-like";
      return s;
    }
    case Synthesizer::Greedy: return synthesize_greedy(topology, collective, chunk_bytes, config);
    case Synthesizer::Clustered: {
      if (config.cluster_window < 1) throw Error(ErrorCode::InvalidInput, "clustered synthesis needs a window >= 1");
      return synthesize_clustered(topology, collective, chunk_bytes, config);
    }
  }
  throw Error(ErrorCode::InvalidInput, "unknown synthesizer");
}

std::vector<LinkReservation> transposed(const std::vector<LinkReservation>& r) {
  std::vector<LinkReservation> out = r;
  for (LinkReservation& x : out) std::swap(x.src, x.dst);
  return out;
}

// Dual on the transposed topology, then mirrored back. Reservations are not mirrored in
// time (the horizon is unknown up front), so the dual only avoids them when none exist.
Schedule run_combining(const Topology& topology, const Collective& collective, double chunk_bytes, Synthesizer kind,
                       const SynthesisConfig& config) {
  const Collective dual = combining_counterpart(collective);
  SynthesisConfig c = config;
  c.reservations = transposed(config.reservations);
  Schedule s = prune_redundant(run_plain(transpose(topology), dual, chunk_bytes, kind, c), dual);
  s.horizon = s.last_arrival();
  Schedule out = invert(s);
  out.topology_name = topology.name();
  out.provenance.note = "inverted " + std::string(to_string(dual.kind)) + (s.provenance.note.empty() ? "" : ": " + s.provenance.note);
  return out;
}

Schedule merge_schedules(const Schedule& a, const Schedule& b) {
  Schedule out = a;
  out.sends.insert(out.sends.end(), b.sends.begin(), b.sends.end());
  out.normalize();
  out.horizon = std::max(a.horizon, b.horizon);
  out.provenance.optimal = false;
  out.provenance.time_limited = a.provenance.time_limited || b.provenance.time_limited;
  return out;
}

Collective restrict_to(const Collective& c, const std::set<ChunkId>& chunks, bool combining) {
  Collective out = c;
  out.kind = CollectiveKind::Custom;
  out.combining = combining;
  out.root.reset();
  out.tenants.clear();
  auto keep = [&](const std::vector<Placement>& v) {
    std::vector<Placement> r;
    for (const Placement& p : v) {
      if (chunks.count(p.chunk)) r.push_back(p);
    }
    return r;
  };
  out.pre = keep(c.pre);
  out.post = keep(c.post);
  return out;
}

Schedule run_multi_tenant(const Topology& topology, const Collective& collective, double chunk_bytes,
                          Synthesizer kind, const SynthesisConfig& config) {
  std::set<ChunkId> combining, plain;
  for (const Tenant& t : collective.tenants) {
    if (t.kind == CollectiveKind::AllReduce) {
      throw Error(ErrorCode::UseComposition, "all-reduce tenants must be merged as reduce-scatter and all-gather");
    }
    (t.combining ? combining : plain).insert(t.chunks.begin(), t.chunks.end());
  }
  if (combining.empty()) return run_plain(topology, collective, chunk_bytes, kind, config);

  SynthesisConfig half = config;
  if (!plain.empty()) half.time_limit_s = config.time_limit_s / 2;
  Schedule comb = run_combining(topology, restrict_to(collective, combining, true), chunk_bytes, kind, half);
  if (plain.empty()) return comb;

  SynthesisConfig rest = half;
  for (const Send& s : comb.sends) rest.reservations.push_back({s.src, s.dst, s.depart, s.arrive()});
  Schedule other = run_plain(topology, restrict_to(collective, plain, false), chunk_bytes, kind, rest);
  Schedule out = merge_schedules(comb, other);
  out.provenance.note = "multi-tenant: combining tenants first";
  return out;
}

}  // namespace

Schedule synthesize_collective(const Topology& topology, const Collective& collective, double chunk_bytes,
                               Synthesizer kind, const SynthesisConfig& config) {
  collective.validate();
  if (collective.num_npus != topology.num_npus()) {
    throw Error(ErrorCode::InvalidInput, "collective spans " + std::to_string(collective.num_npus) +
                                             " NPUs but the topology has " + std::to_string(topology.num_npus()));
  }
  if (!collective.tenants.empty() && collective.combining) {
    return run_multi_tenant(topology, collective, chunk_bytes, kind, config);
  }
  if (collective.kind == CollectiveKind::AllReduce) {
    const int n = collective.num_npus;
    const int k = collective.num_chunks() / n;
    const Collective rs = make_collective(CollectiveKind::ReduceScatter, n, k, chunk_bytes);
    const Collective ag = make_collective(CollectiveKind::AllGather, n, k, chunk_bytes);
    SynthesisConfig half = config;
    half.time_limit_s = config.time_limit_s / 2;
    const Schedule rs_s = run_combining(topology, rs, chunk_bytes, kind, half);
    const Schedule ag_s = run_plain(topology, ag, chunk_bytes, kind, half);
    Schedule out = compose_allreduce(rs_s, rs, ag_s, ag);
    out.provenance = ag_s.provenance;
    out.provenance.optimal = false;
    out.provenance.time_limited = rs_s.provenance.time_limited || ag_s.provenance.time_limited;
    out.provenance.note = "reduce-scatter [" + rs_s.provenance.note + "] then all-gather [" + ag_s.provenance.note + "]";
    return out;
  }
  if (collective.combining) return run_combining(topology, collective, chunk_bytes, kind, config);
  return run_plain(topology, collective, chunk_bytes, kind, config);
}

}  // namespace collsynth
