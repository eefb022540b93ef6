// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion numbers...]   (default: all)

#include "collsynth/collective.hpp"
#include "collsynth/error.hpp"
#include "collsynth/evaluator.hpp"
#include "collsynth/greedy.hpp"
#include "collsynth/ilp.hpp"
#include "collsynth/synthesis.hpp"
#include "collsynth/topology.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace collsynth;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d, e);
  return buf;
}

constexpr double kBytes = 1e6;

Topology switch_topology(int n, LinkCost cost, int degree, bool bidirectional) {
  SwitchSpec spec;
  spec.num_npus = n;
  spec.alpha_us = cost.alpha_us;
  spec.total_beta_us_per_byte = cost.beta_us_per_byte;
  spec.degree = degree;
  spec.bidirectional = bidirectional;
  return unwind_switch(spec);
}

Topology hierarchy(std::vector<Topology> dims) { return compose_hierarchical(dims); }

double eval_us(const Schedule& s, const Topology& t) { return evaluate(s, t, kBytes).collective_time_us; }

// ---------------------------------------------------------------------------------------

Outcome correctness_suite() {
  const LinkCost cost = LinkCost::from_bandwidth(0.5, 50.0);
  std::vector<Topology> topologies;
  for (int n = 3; n <= 8; ++n) topologies.push_back(build_ring(n, false, cost));
  for (int n = 3; n <= 8; ++n) topologies.push_back(build_ring(n, true, cost));
  for (int r = 2; r <= 5; ++r) {
    for (int c = r; c <= 5; ++c) topologies.push_back(build_mesh(r, c, cost));
  }
  for (int n : {4, 8, 16}) topologies.push_back(build_fully_connected(n, cost));
  for (int n : {4, 8}) {
    topologies.push_back(switch_topology(n, cost, 1, false));
    topologies.push_back(switch_topology(n, cost, 1, true));
    topologies.push_back(switch_topology(n, cost, 2, false));
  }
  topologies.push_back(hierarchy({build_ring(2, false, LinkCost::from_bandwidth(0.5, 200.0)),
                                  build_fully_connected(4, LinkCost::from_bandwidth(0.5, 100.0))}));
  topologies.push_back(remove_npus(build_mesh(4, 4, cost), std::vector<NpuId>{7, 9}));

  int cells = 0, failures = 0;
  std::string first_failure;
  const auto t0 = Clock::now();
  for (const Topology& t : topologies) {
    const int n = t.num_npus();
    const DiscreteTopology dt = discretize(t, kBytes);
    std::vector<Collective> collectives;
    for (CollectiveKind k : {CollectiveKind::Scatter, CollectiveKind::Gather, CollectiveKind::Broadcast,
                             CollectiveKind::Reduce, CollectiveKind::AllGather, CollectiveKind::ReduceScatter,
                             CollectiveKind::AllReduce}) {
      collectives.push_back(make_collective(k, n, 1, kBytes, 0));
    }
    const int half = std::max(2, n / 2);
    std::vector<NpuId> head, tail, all;
    for (int i = 0; i < half; ++i) head.push_back(i);
    for (int i = n - half; i < n; ++i) tail.push_back(i);
    for (int i = 0; i < n; ++i) all.push_back(i);
    collectives.push_back(merge_collectives(
        std::vector<TenantSpec>{{make_collective(CollectiveKind::Broadcast, half, 1, kBytes, 0), head},
                                {make_collective(CollectiveKind::Reduce, half, 1, kBytes, 0), tail},
                                {make_collective(CollectiveKind::AllGather, n, 1, kBytes), all}},
        n));

    for (const Collective& c : collectives) {
      std::vector<Synthesizer> synths{Synthesizer::Greedy, Synthesizer::Clustered};
      if (c.num_chunks() * n <= 40) synths.push_back(Synthesizer::Ilp);
      for (Synthesizer s : synths) {
        SynthesisConfig cfg;
        cfg.time_limit_s = 5.0;
        cfg.cluster_window = std::max(2, dt.max_steps());
        cfg.rng_seed = 1;
        ++cells;
        std::string problem;
        try {
          const Schedule out = synthesize_collective(t, c, kBytes, s, cfg);
          const VerifyReport r = verify(out, t, c, verify_options_for(s));
          if (!r.ok()) problem = r.summary();
        } catch (const Error& e) {
          problem = e.what();
        }
        if (!problem.empty()) {
          ++failures;
          if (first_failure.empty()) {
            first_failure = t.name() + " / " + std::string(to_string(c.kind)) + " / " + std::string(to_string(s)) + ": " + problem;
          }
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  Outcome o;
  o.pass = failures == 0 && elapsed < 600.0;
  o.detail = std::to_string(cells) + " cells, " + std::to_string(failures) + " with violations, " +
             fmt("%.1f s", elapsed);
  if (!first_failure.empty()) o.detail += "; first: " + first_failure;
  return o;
}

Outcome ring_scatter_example() {
  const Topology t = build_ring(4, false, LinkCost::from_bandwidth(0.5, 50.0));
  const Collective sc = make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0);
  SynthesisConfig cfg;
  const Schedule ilp = synthesize_collective(t, sc, kBytes, Synthesizer::Ilp, cfg);

  // nearest chunk first: each chunk waits for the previous one to clear the first link
  Schedule unaware;
  unaware.sends = {{1, 0, 1, 0, 1}, {2, 0, 1, 1, 1}, {2, 1, 2, 2, 1},
                   {3, 0, 1, 2, 1}, {3, 1, 2, 3, 1}, {3, 2, 3, 4, 1}};
  unaware.horizon = 5;
  unaware.factor_us = ilp.factor_us;
  unaware.chunk_bytes = kBytes;
  const bool clean = verify(unaware, t, sc).ok() && verify(ilp, t, sc).ok();
  const double ratio = eval_us(unaware, t) / eval_us(ilp, t);
  Outcome o;
  o.pass = ilp.horizon == 3 && ilp.provenance.optimal && clean && unaware.horizon == 5 &&
           std::abs(ratio - 5.0 / 3.0) < 1e-9;
  o.detail = "ilp steps " + std::to_string(ilp.horizon) + ", unaware steps 5, evaluated ratio " + fmt("%.6f", ratio);
  return o;
}

Outcome oracle_optimality() {
  std::mt19937_64 rng(2024);
  int instances = 0, mismatches = 0;
  std::string first;
  for (int trial = 0; trial < 24; ++trial) {
    const int n = 3 + trial % 2;
    const int chunks = 1 + trial % 4;
    const Topology t = oracle::random_topology(n, rng);
    const Collective c = oracle::random_collective(n, chunks, rng);
    SynthesisConfig cfg;
    cfg.time_limit_s = 60;
    const Schedule s = synthesize(t, c, 1.0, cfg);
    const int best = oracle::exhaustive_min_steps(t, c, 16);
    ++instances;
    if (s.horizon != best || !s.provenance.optimal || !verify(s, t, c).ok()) {
      ++mismatches;
      if (first.empty()) first = "; trial " + std::to_string(trial) + ": ilp " + std::to_string(s.horizon) + " vs " + std::to_string(best);
    }
  }
  return {instances >= 20 && mismatches == 0,
          std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches" + first};
}

struct Row {
  double ilp, greedy, taccl, ring, direct;
};

Row all_reduce_row(const Topology& t) {
  const int n = t.num_npus();
  const Collective ar = make_collective(CollectiveKind::AllReduce, n, 1, kBytes);
  SynthesisConfig cfg;
  cfg.time_limit_s = 120;
  cfg.runs = 8;
  Row r{};
  r.ilp = eval_us(synthesize_collective(t, ar, kBytes, Synthesizer::Ilp, cfg), t);
  r.greedy = eval_us(synthesize_collective(t, ar, kBytes, Synthesizer::Greedy, cfg), t);
  r.taccl = eval_us(synthesize_collective(t, ar, kBytes, Synthesizer::TacclLike, cfg), t);
  r.ring = eval_us(baseline_ring(t, ar, kBytes), t);
  r.direct = eval_us(baseline_direct(t, ar, kBytes), t);
  return r;
}

Outcome ordering() {
  const LinkCost nvlink = LinkCost::from_bandwidth(0.5, 200.0);
  const LinkCost fc = LinkCost::from_bandwidth(0.5, 100.0);
  const LinkCost nic = LinkCost::from_bandwidth(0.5, 50.0);
  const Topology small = hierarchy({build_ring(2, false, nvlink), build_fully_connected(4, fc)});
  const Topology large =
      hierarchy({build_ring(2, false, nvlink), build_fully_connected(4, fc), switch_topology(2, nic, 1, false)});
  const double eps = 1e-9;
  bool pass = true;
  std::string detail;
  for (const auto& [name, topo] : {std::pair<const char*, const Topology*>{"8 NPUs", &small}, {"16 NPUs", &large}}) {
    const Row r = all_reduce_row(*topo);
    const bool ordered = r.ilp <= r.greedy + eps && r.greedy <= r.taccl + eps && r.taccl <= std::max(r.ring, r.direct) + eps;
    pass = pass && ordered;
    if (topo == &large) pass = pass && r.taccl > std::min(r.ilp, r.greedy) + eps;
    detail += std::string(detail.empty() ? "" : "; ") + name +
              fmt(": ilp %.1f greedy %.1f taccl-like %.1f ring %.1f direct %.1f", r.ilp, r.greedy, r.taccl, r.ring, r.direct);
  }
  return {pass, detail};
}

Outcome motivation() {
  const LinkCost cost = LinkCost::from_bandwidth(0.5, 100.0);
  SynthesisConfig cfg;
  cfg.runs = 8;
  bool pass = true;
  std::string detail;
  const Topology ring = build_ring(16, false, cost);
  const Topology fc = build_fully_connected(16, cost);
  for (const Topology* t : {&ring, &fc}) {
    const Collective ar = make_collective(CollectiveKind::AllReduce, 16, 1, kBytes);
    const double rb = eval_us(baseline_ring(*t, ar, kBytes), *t);
    const double db = eval_us(baseline_direct(*t, ar, kBytes), *t);
    const double g = eval_us(synthesize_collective(*t, ar, kBytes, Synthesizer::Greedy, cfg), *t);
    const bool direction = t == &ring ? db >= 2 * rb : rb >= 2 * db;
    pass = pass && direction && g <= 1.05 * std::min(rb, db);
    detail += std::string(detail.empty() ? "" : "; ") + t->name() + fmt(": ring %.1f direct %.1f greedy %.1f", rb, db, g);
  }
  return {pass, detail};
}

Outcome greedy_scalability() {
  const Topology t = hierarchy({build_ring(2, false, LinkCost::from_bandwidth(0.5, 200.0)),
                                build_fully_connected(4, LinkCost::from_bandwidth(0.5, 100.0)),
                                switch_topology(16, LinkCost::from_bandwidth(0.5, 50.0), 1, false)});
  const Collective ar = make_collective(CollectiveKind::AllReduce, t.num_npus(), 1, kBytes);
  SynthesisConfig cfg;
  const auto t0 = Clock::now();
  const Schedule s = synthesize_collective(t, ar, kBytes, Synthesizer::Greedy, cfg);
  const double elapsed = seconds_since(t0);
  const bool clean = verify(s, t, ar).ok();
  return {t.num_npus() == 128 && clean && elapsed <= 60.0,
          std::to_string(t.num_npus()) + " NPUs, " + fmt("%.2f s", elapsed) + (clean ? ", verified" : ", NOT verified")};
}

Outcome inversion() {
  std::mt19937_64 rng(77);
  int checked = 0, bad = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 6;
    const Topology t = oracle::random_topology(n, rng, 0.4);
    const bool bcast = trial % 2 == 0;
    const NpuId root = static_cast<NpuId>(rng() % static_cast<std::uint64_t>(n));
    const Collective c = bcast ? make_collective(CollectiveKind::Broadcast, n, 1, 1.0, root)
                               : make_collective(CollectiveKind::AllGather, n, 1, 1.0);
    const Collective dual = bcast ? make_collective(CollectiveKind::Reduce, n, 1, 1.0, root)
                                  : make_collective(CollectiveKind::ReduceScatter, n, 1, 1.0);
    SynthesisConfig cfg;
    cfg.rng_seed = rng();
    const Schedule s = synthesize_greedy(t, c, 1.0, cfg);
    if (!verify(s, t, c).ok()) {
      ++bad;
      continue;
    }
    ++checked;
    const Schedule r = invert_checked(s, t, c);
    const Schedule back = invert(r);
    // the mirrored sends run over reversed links
    const bool ok = verify(r, transpose(t), dual).ok() && r.horizon == s.horizon && r.sends.size() == s.sends.size() &&
                    back.sends == s.sends && back.horizon == s.horizon;
    if (!ok) ++bad;
  }
  return {checked == 50 && bad == 0, std::to_string(checked) + " schedules, " + std::to_string(bad) + " failures"};
}

Outcome time_clustering() {
  const LinkCost cost = LinkCost::from_bandwidth(0.5, 100.0);
  const Topology t = hierarchy({build_ring(8, false, cost), build_ring(8, false, cost)});
  const Collective ar = make_collective(CollectiveKind::AllReduce, 64, 1, kBytes);

  SynthesisConfig full;
  full.time_limit_s = 600;
  auto t0 = Clock::now();
  const Schedule ilp = synthesize_collective(t, ar, kBytes, Synthesizer::Ilp, full);
  const double ilp_s = seconds_since(t0);

  SynthesisConfig cl;
  cl.time_limit_s = 30;
  cl.cluster_window = 4;
  t0 = Clock::now();
  const Schedule clustered = synthesize_collective(t, ar, kBytes, Synthesizer::Clustered, cl);
  const double cl_s = seconds_since(t0);

  const bool clean = verify(ilp, t, ar).ok() && verify(clustered, t, ar).ok();
  const double quality = eval_us(clustered, t) / eval_us(ilp, t);
  const double speed = cl_s / ilp_s;
  return {clean && quality <= 1.4 && speed <= 0.2,
          fmt("ilp %.1f us in %.1f s, clustered %.1f us in %.1f s", eval_us(ilp, t), ilp_s, eval_us(clustered, t), cl_s) +
              fmt(" (quality %.3f, time ratio %.4f)", quality, speed)};
}

Outcome evaluator_closed_forms() {
  const LinkCost cost = LinkCost::from_bandwidth(0.5, 100.0);
  const double hop = cost.alpha_us + cost.beta_us_per_byte * kBytes;
  bool pass = true;
  std::string detail;
  for (int n : {3, 4, 8}) {
    const Topology t = build_ring(n, false, cost);
    const Collective ag = make_collective(CollectiveKind::AllGather, n, 1, kBytes);
    const double got = eval_us(baseline_ring(t, ag, kBytes), t);
    const double want = (n - 1) * hop;
    pass = pass && std::abs(got - want) <= 1e-9 * want;
    detail += fmt("n=%g: %.6f vs %.6f; ", n, got, want);
  }
  const Topology t = build_ring(3, false, cost);
  Schedule one;
  one.sends = {{0, 0, 1, 0, 1}};
  one.horizon = 1;
  const double single = eval_us(one, t);
  pass = pass && single == hop;
  detail += fmt("single send %.6f vs %.6f", single, hop);
  return {pass, detail};
}

Outcome determinism() {
  const LinkCost cost = LinkCost::from_bandwidth(0.5, 50.0);
  struct Case {
    Topology topo;
    Collective coll;
  };
  const std::vector<Case> cases{
      {build_mesh(3, 3, cost), make_collective(CollectiveKind::AllGather, 9, 1, kBytes)},
      {build_ring(5, true, cost), make_collective(CollectiveKind::Reduce, 5, 1, kBytes, 2)},
      {hierarchy({build_ring(2, false, LinkCost::from_bandwidth(0.5, 200.0)),
                  build_fully_connected(4, LinkCost::from_bandwidth(0.5, 100.0))}),
       make_collective(CollectiveKind::AllReduce, 8, 1, kBytes)},
  };
  int invocations = 0, differing = 0;
  for (const Case& c : cases) {
    for (Synthesizer s : {Synthesizer::Ilp, Synthesizer::Greedy, Synthesizer::Clustered, Synthesizer::TacclLike}) {
      SynthesisConfig cfg;
      cfg.time_limit_s = 30;
      cfg.cluster_window = 4;
      cfg.runs = 4;
      cfg.rng_seed = 12345;
      std::set<std::string> outputs;
      for (int run = 0; run < 3; ++run) {
        outputs.insert(save_schedule(synthesize_collective(c.topo, c.coll, kBytes, s, cfg)));
        ++invocations;
      }
      if (outputs.size() != 1) ++differing;
    }
  }
  return {differing == 0, std::to_string(invocations) + " invocations, " + std::to_string(differing) + " configurations differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"correctness suite", correctness_suite},
      {"4-NPU ring scatter: 3 steps vs 5-step unaware schedule", ring_scatter_example},
      {"ILP t_f matches exhaustive search", oracle_optimality},
      {"All-Reduce ordering ilp <= greedy <= taccl-like <= baselines", ordering},
      {"ring vs direct baselines and greedy on 16 NPUs", motivation},
      {"greedy All-Reduce on 128 NPUs within 60 s", greedy_scalability},
      {"inversion of Broadcast / All-Gather schedules", inversion},
      {"time clustering vs early-terminated ILP on 8x8 ring x ring", time_clustering},
      {"evaluator closed forms", evaluator_closed_forms},
      {"determinism across 3 runs", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s criterion %d: %s -- %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
