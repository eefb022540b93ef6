#include "collsynth/error.hpp"
#include "collsynth/evaluator.hpp"
#include "collsynth/ilp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <memory>
#include <random>

using namespace collsynth;

namespace {

const LinkCost kCost = LinkCost::from_bandwidth(0.5, 100.0);
constexpr double kBytes = 1e6;

SynthesisConfig quick(double seconds = 20.0) {
  SynthesisConfig c;
  c.time_limit_s = seconds;
  return c;
}

bool feasible_at(const Topology& t, const Collective& c, Timestep T) {
  auto dt = std::make_shared<const DiscreteTopology>(discretize(t, kBytes));
  const TimeExpandedNetwork ten(dt, T);
  ModelOptions mo;
  mo.pin_final = true;
  const IlpModel m = build_model(ten, c, quick(), mo);
  SolveOptions so;
  so.time_limit_s = 20;
  so.nodes_after_incumbent = 0;
  const SolveResult r = solve(m.program, so);
  if (r.has_solution()) {
    Schedule s = decode(m, r.assignment, *dt);
    EXPECT_TRUE(verify(s, t, c).ok()) << verify(s, t, c).summary();
  }
  return r.has_solution();
}

}  // namespace

TEST(IlpModel, VariableCountsOnRingThree) {
  const Topology t = build_ring(3, false, kCost);
  const Collective ag = make_collective(CollectiveKind::AllGather, 3, 1, kBytes);
  auto dt = std::make_shared<const DiscreteTopology>(discretize(t, kBytes));
  const TimeExpandedNetwork ten(dt, 2);
  const IlpModel m = build_model(ten, ag, quick());
  EXPECT_EQ(m.hold_vars.size(), 27u);
  EXPECT_EQ(m.sent.size(), 18u);
  EXPECT_EQ(m.program.num_vars(), 45);

  ModelOptions mo;
  mo.presolve = true;
  const IlpModel small = build_model(ten, ag, quick(), mo);
  EXPECT_LT(small.sent.size(), m.sent.size());
}

TEST(IlpModel, PinnedFeasibilityIsMonotone) {
  const Topology t = build_ring(4, false, kCost);
  const Collective sc = make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0);
  EXPECT_FALSE(feasible_at(t, sc, 2));
  EXPECT_TRUE(feasible_at(t, sc, 3));
  EXPECT_TRUE(feasible_at(t, sc, 4));
  EXPECT_TRUE(feasible_at(t, sc, 6));

  const Topology bi = build_ring(4, true, kCost);
  const Collective ag = make_collective(CollectiveKind::AllGather, 4, 1, kBytes);
  EXPECT_FALSE(feasible_at(bi, ag, 1));
  EXPECT_TRUE(feasible_at(bi, ag, 2));
  EXPECT_TRUE(feasible_at(bi, ag, 3));
}

TEST(Ilp, SmallExamples) {
  struct Case {
    Topology topo;
    Collective coll;
    Timestep expected;
  };
  const std::vector<Case> cases{
      {build_ring(4, false, kCost), make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0), 3},
      {build_ring(3, false, kCost), make_collective(CollectiveKind::AllGather, 3, 1, kBytes), 2},
      {build_fully_connected(4, kCost), make_collective(CollectiveKind::AllGather, 4, 1, kBytes), 1},
      {build_ring(4, true, kCost), make_collective(CollectiveKind::Broadcast, 4, 1, kBytes, 1), 2},
      {build_mesh(2, 2, kCost), make_collective(CollectiveKind::AllGather, 4, 1, kBytes), 2},
  };
  for (const Case& c : cases) {
    const Schedule s = synthesize(c.topo, c.coll, kBytes, quick());
    EXPECT_EQ(s.horizon, c.expected) << c.topo.name();
    EXPECT_TRUE(s.provenance.optimal) << c.topo.name();
    EXPECT_EQ(s.provenance.synthesizer, "ilp");
    EXPECT_TRUE(verify(s, c.topo, c.coll).ok()) << verify(s, c.topo, c.coll).summary();
  }
}

TEST(Ilp, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 3 + trial % 2;
    const Topology t = oracle::random_topology(n, rng);
    const Collective c = oracle::random_collective(n, 2 + trial % 2, rng);
    const Schedule s = synthesize(t, c, 1.0, quick());
    ASSERT_TRUE(verify(s, t, c).ok()) << verify(s, t, c).summary();
    EXPECT_TRUE(s.provenance.optimal);
    EXPECT_EQ(s.horizon, oracle::exhaustive_min_steps(t, c, 12)) << "trial " << trial;
  }
}

TEST(Ilp, PreconditionAlreadyMet) {
  const Topology t = build_ring(3, false, kCost);
  Collective c = make_collective(CollectiveKind::Scatter, 3, 1, kBytes, 0);
  c.post = c.pre;
  const Schedule s = synthesize(t, c, kBytes, quick());
  EXPECT_TRUE(s.sends.empty());
  EXPECT_EQ(s.horizon, 0);
}

TEST(Ilp, UnreachableDestination) {
  const Topology t(2, {Link{0, 1, 1.0, 0.0}}, "oneway");
  const Collective ag = make_collective(CollectiveKind::AllGather, 2, 1, 1.0);
  try {
    synthesize(t, ag, 1.0, quick());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnreachableDestination);
  }
}

TEST(Ilp, RejectsCombining) {
  const Topology t = build_ring(3, true, kCost);
  EXPECT_THROW(synthesize(t, make_collective(CollectiveKind::Reduce, 3, 1, kBytes, 0), kBytes, quick()), Error);
}

TEST(Ilp, TinyTimeLimitStillCompletes) {
  const Topology t = build_mesh(3, 3, kCost);
  const Collective ag = make_collective(CollectiveKind::AllGather, 9, 2, kBytes);
  SynthesisConfig c = quick(1e-3);
  const Schedule s = synthesize(t, ag, kBytes, c);
  EXPECT_TRUE(verify(s, t, ag).ok()) << verify(s, t, ag).summary();
  EXPECT_FALSE(s.provenance.optimal);
  EXPECT_TRUE(s.provenance.time_limited);
}

TEST(Ilp, HeterogeneousLinks) {
  // a fast two-hop detour beats the slow direct link
  const Topology t(3, {Link{0, 2, 3.0, 0.0}, Link{0, 1, 1.0, 0.0}, Link{1, 2, 1.0, 0.0}}, "detour");
  Collective c = make_collective(CollectiveKind::Broadcast, 3, 1, 1.0, 0);
  const Schedule s = synthesize(t, c, 1.0, quick());
  EXPECT_EQ(s.horizon, 2);
  EXPECT_TRUE(verify(s, t, c).ok());
}

TEST(Lower, DistanceAndIngress) {
  const Topology t = build_ring(4, false, kCost);
  const DiscreteTopology dt = discretize(t, kBytes);
  const ShortestPaths sp = all_pairs_shortest_paths(dt);
  const Collective sc = make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0);
  EXPECT_EQ(collective_lower_bound(sp, sc), 3);
  // one in-link per NPU, three missing chunks each
  const Collective ag = make_collective(CollectiveKind::AllGather, 4, 1, kBytes);
  EXPECT_EQ(ingress_lower_bound(dt, ag), 3);
  const DiscreteTopology fc = discretize(build_fully_connected(4, kCost), kBytes);
  EXPECT_EQ(ingress_lower_bound(fc, ag), 1);
}

TEST(Recovery, CompleteScheduleIsUnchanged) {
  const Topology t = build_ring(4, false, kCost);
  const Collective sc = make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0);
  const DiscreteTopology dt = discretize(t, kBytes);
  const Schedule s = synthesize(t, sc, kBytes, quick());
  const Schedule r = recover_early_termination(s, dt, sc);
  EXPECT_EQ(r.sends, s.sends);
  EXPECT_EQ(r.horizon, s.horizon);
}

TEST(Recovery, FromNothing) {
  const Topology t = build_ring(4, false, kCost);
  const Collective sc = make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0);
  const DiscreteTopology dt = discretize(t, kBytes);
  Schedule empty;
  const Schedule r = recover_early_termination(empty, dt, sc);
  EXPECT_TRUE(verify(r, t, sc).ok()) << verify(r, t, sc).summary();
  // farthest chunk first keeps the link busy: 3 steps
  EXPECT_EQ(r.horizon, 3);
  EXPECT_EQ(r.sends.size(), 6u);
}

TEST(Recovery, RespectsReservations) {
  const Topology t = build_ring(3, false, kCost);
  const Collective b = make_collective(CollectiveKind::Broadcast, 3, 1, kBytes, 0);
  const DiscreteTopology dt = discretize(t, kBytes);
  const Schedule r = recover_early_termination(Schedule{}, dt, b, {{0, 1, 0, 2}});
  for (const Send& x : r.sends) {
    if (x.src == 0) EXPECT_GE(x.depart, 2);
  }
  EXPECT_TRUE(verify(r, t, b).ok());
}

TEST(Recovery, RandomPartialsComplete) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + trial % 4;
    const Topology t = oracle::random_topology(n, rng);
    const Collective c = oracle::random_collective(n, 3, rng);
    const DiscreteTopology dt = discretize(t, 1.0);
    Schedule full = recover_early_termination(Schedule{}, dt, c);
    ASSERT_TRUE(verify(full, t, c).ok());
    // keep a prefix
    Schedule partial = full;
    const Timestep cut = full.horizon / 2;
    std::erase_if(partial.sends, [&](const Send& x) { return x.arrive() > cut; });
    partial.horizon = cut;
    const Schedule done = recover_early_termination(partial, dt, c);
    EXPECT_TRUE(verify(done, t, c).ok()) << verify(done, t, c).summary();
  }
}

TEST(Clustered, WideWindowMatchesIlp) {
  const Topology t = build_ring(4, true, kCost);
  const Collective ag = make_collective(CollectiveKind::AllGather, 4, 1, kBytes);
  const Schedule ilp = synthesize(t, ag, kBytes, quick());
  SynthesisConfig c = quick();
  c.cluster_window = 4;
  const Schedule cl = synthesize_clustered(t, ag, kBytes, c);
  EXPECT_EQ(cl.horizon, ilp.horizon);
  EXPECT_TRUE(verify(cl, t, ag).ok());
  EXPECT_EQ(cl.provenance.synthesizer, "clustered");
}

TEST(Clustered, NarrowWindowsStillComplete) {
  const Topology t = build_ring(4, false, kCost);
  const Collective sc = make_collective(CollectiveKind::Scatter, 4, 1, kBytes, 0);
  SynthesisConfig c = quick();
  c.cluster_window = 1;
  const Schedule s = synthesize_clustered(t, sc, kBytes, c);
  EXPECT_TRUE(verify(s, t, sc).ok()) << verify(s, t, sc).summary();
  EXPECT_GE(s.horizon, 3);

  const Topology mesh = build_mesh(3, 3, kCost);
  const Collective ag = make_collective(CollectiveKind::AllGather, 9, 1, kBytes);
  c.cluster_window = 2;
  const Schedule m = synthesize_clustered(mesh, ag, kBytes, c);
  EXPECT_TRUE(verify(m, mesh, ag).ok()) << verify(m, mesh, ag).summary();
}

TEST(Clustered, WindowShorterThanEveryLinkStalls) {
  const Topology t(2, {Link{0, 1, 2.0, 0.0}, Link{1, 0, 4.0, 0.0}}, "slow");
  const Collective ag = make_collective(CollectiveKind::AllGather, 2, 1, 1.0);
  SynthesisConfig c = quick();
  c.cluster_window = 1;
  c.factor_us = 1.0;
  try {
    synthesize_clustered(t, ag, 1.0, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Stall);
  }
  c.cluster_window = 0;
  EXPECT_THROW(synthesize_clustered(t, ag, 1.0, c), Error);
}

TEST(TacclLike, IgnoresLinkExclusivity) {
  // scatter over a star: the hub's single in-link carries every chunk
  std::vector<Link> links{{0, 1, 0.5, kCost.beta_us_per_byte}};
  for (int leaf = 2; leaf < 5; ++leaf) links.push_back({1, leaf, 0.5, kCost.beta_us_per_byte});
  const Topology star(5, links, "star");
  const Collective sc = make_collective(CollectiveKind::Scatter, 5, 1, kBytes, 0);
  SynthesisConfig c = quick();
  const Schedule aware = synthesize(star, sc, kBytes, c);
  c.taccl_like = true;
  const Schedule blind = synthesize(star, sc, kBytes, c);
  EXPECT_EQ(blind.provenance.synthesizer, "taccl-like");
  EXPECT_EQ(aware.horizon, 4);
  EXPECT_EQ(blind.horizon, 2);
  EXPECT_TRUE(verify(aware, star, sc).ok());
  EXPECT_FALSE(verify(blind, star, sc).ok());
  VerifyOptions relaxed;
  relaxed.check_congestion = false;
  EXPECT_TRUE(verify(blind, star, sc, relaxed).ok());
  EXPECT_GE(evaluate(blind, star, kBytes).collective_time_us, evaluate(aware, star, kBytes).collective_time_us - 1e-9);
}

TEST(Config, JsonHasEveryKnob) {
  SynthesisConfig c;
  c.cluster_window = 3;
  c.tf_start = 4;
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(j["cluster_window"], 3);
  EXPECT_EQ(j["tf_start"], 4);
  EXPECT_TRUE(j.contains("time_limit_s"));
}
