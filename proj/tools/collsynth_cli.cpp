// collsynth command-line front end: synth, eval, compare, verify.
//
// Exit codes: 0 ok, 1 verification failed, 2 invalid input, 3 unreachable destination,
// 4 time limit hit with a non-optimal result, 5 other synthesis failure.

#include "collsynth/algorithm.hpp"
#include "collsynth/collective.hpp"
#include "collsynth/error.hpp"
#include "collsynth/evaluator.hpp"
#include "collsynth/synthesis.hpp"
#include "collsynth/topology.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace collsynth;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "collsynth 1.0.0";

struct TopologyArgs {
  std::string file;
  std::vector<std::string> builder;  // one name per dimension
  std::vector<int> dims;
  double alpha_us = 0.5;
  std::vector<double> bw_gbps{50.0};
  std::vector<int> failed;
};

struct CollectiveArgs {
  std::string kind = "all-reduce";
  int chunks_per_npu = 1;
  double chunk_bytes = 1e6;
  int root = -1;
};

struct SynthArgs {
  std::string synthesizer = "greedy";
  double time_limit = 60.0;
  int cluster_window = 0;
  int runs = 1;
  std::uint64_t seed = 0;
  std::optional<double> factor_us;
  bool taccl_like = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidInput, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidInput, "cannot write " + path);
  out << text;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Parse, what + ": " + e.what());
  }
}

void add_topology_options(CLI::App* app, TopologyArgs& t) {
  app->add_option("--topology", t.file, "Topology JSON file");
  app->add_option("--builder", t.builder,
                  "Builder per dimension: ring, bi-ring, fc, mesh, switch, bi-switch, switch-dN")
      ->delimiter(',');
  app->add_option("--dims", t.dims, "Sizes per dimension (mesh takes rows and cols)");
  app->add_option("--alpha", t.alpha_us, "Link latency in us");
  app->add_option("--bw", t.bw_gbps, "Link bandwidth in GB/s, one value or one per dimension")->delimiter(',');
  app->add_option("--fail", t.failed, "NPUs to remove")->delimiter(',');
}

void add_collective_options(CLI::App* app, CollectiveArgs& c) {
  app->add_option("--collective", c.kind, "Collective kind or collective JSON file");
  app->add_option("--chunks-per-npu", c.chunks_per_npu, "Chunks per NPU")->check(CLI::PositiveNumber);
  app->add_option("--chunk-bytes", c.chunk_bytes, "Chunk size in bytes")->check(CLI::PositiveNumber);
  app->add_option("--root", c.root, "Root NPU for rooted collectives");
}

void add_synth_options(CLI::App* app, SynthArgs& s) {
  app->add_option("--synthesizer", s.synthesizer, "ilp, greedy, clustered or taccl-like");
  app->add_option("--time-limit", s.time_limit, "Solver time limit in seconds")->check(CLI::PositiveNumber);
  app->add_option("--cluster-window", s.cluster_window, "Window in timesteps for clustered synthesis");
  app->add_option("--runs", s.runs, "Greedy best-of-k runs")->check(CLI::PositiveNumber);
  app->add_option("--seed", s.seed, "Random seed");
  app->add_option("--factor", s.factor_us, "Discretization factor in us");
  app->add_flag("--taccl-like", s.taccl_like, "Drop congestion constraints");
}

Topology build_dimension(const std::string& name, std::span<const int> dims, std::size_t& di, LinkCost cost) {
  auto next = [&]() {
    if (di >= dims.size()) throw Error(ErrorCode::InvalidInput, "--dims has too few values for --builder");
    return dims[di++];
  };
  if (name == "ring") return build_ring(next(), false, cost);
  if (name == "bi-ring") return build_ring(next(), true, cost);
  if (name == "fc") return build_fully_connected(next(), cost);
  if (name == "mesh") {
    const int rows = next();
    return build_mesh(rows, next(), cost);
  }
  if (name == "switch" || name == "bi-switch" || name.rfind("switch-d", 0) == 0) {
    SwitchSpec spec;
    spec.num_npus = next();
    spec.alpha_us = cost.alpha_us;
    spec.total_beta_us_per_byte = cost.beta_us_per_byte;
    spec.bidirectional = name == "bi-switch";
    spec.degree = name.rfind("switch-d", 0) == 0 ? std::stoi(name.substr(8)) : 1;
    return unwind_switch(spec);
  }
  throw Error(ErrorCode::InvalidInput, "unknown builder '" + name + "'");
}

Topology load_topology(const TopologyArgs& t, json& inputs) {
  Topology topo;
  if (!t.file.empty()) {
    const std::string text = read_file(t.file);
    inputs[t.file] = digest_hex(text);
    topo = topology_from_json(parse_json(text, t.file));
  } else {
    if (t.builder.empty()) throw Error(ErrorCode::InvalidInput, "give --topology FILE or --builder NAME --dims ...");
    std::vector<Topology> parts;
    std::size_t di = 0;
    for (std::size_t i = 0; i < t.builder.size(); ++i) {
      const double bw = t.bw_gbps.size() == 1 ? t.bw_gbps[0] : t.bw_gbps.at(i);
      parts.push_back(build_dimension(t.builder[i], t.dims, di, LinkCost::from_bandwidth(t.alpha_us, bw)));
    }
    if (di != t.dims.size()) throw Error(ErrorCode::InvalidInput, "--dims has more values than --builder uses");
    topo = compose_hierarchical(parts);
  }
  if (!t.failed.empty()) topo = remove_npus(topo, t.failed);
  return topo;
}

Collective load_collective(const CollectiveArgs& c, int num_npus, json& inputs) {
  if (std::filesystem::exists(c.kind)) {
    const std::string text = read_file(c.kind);
    inputs[c.kind] = digest_hex(text);
    return collective_from_json(parse_json(text, c.kind), num_npus);
  }
  const CollectiveKind kind = collective_kind_from_string(c.kind);
  std::optional<NpuId> root;
  if (c.root >= 0) root = c.root;
  return make_collective(kind, num_npus, c.chunks_per_npu, c.chunk_bytes, root);
}

SynthesisConfig make_config(const SynthArgs& s) {
  SynthesisConfig cfg;
  cfg.time_limit_s = s.time_limit;
  cfg.cluster_window = s.cluster_window;
  cfg.runs = s.runs;
  cfg.rng_seed = s.seed;
  cfg.factor_us = s.factor_us;
  return cfg;
}

Synthesizer pick_synthesizer(const SynthArgs& s) {
  if (s.taccl_like) return Synthesizer::TacclLike;
  return synthesizer_from_string(s.synthesizer);
}

void write_manifest(const std::string& out, const std::string& command, const std::vector<std::string>& argv,
                    const json& inputs, const json& config, std::uint64_t seed) {
  json m = {{"command", command},
            {"argv", argv},
            {"inputs", inputs},
            {"config", config},
            {"seed", seed},
            {"tool_version", kToolVersion},
            {"outputs", json::array({out})}};
  write_file(out + ".manifest.json", m.dump(2) + "\n");
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file(out, text);
  }
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnreachableDestination: return 3;
    case ErrorCode::TimeLimit: return 4;
    case ErrorCode::Stall: return 5;
    default: return 2;
  }
}

struct CompareRow {
  std::string name;
  double time_us = 0.0;
  std::optional<double> synth_s;
};

std::string format_table(const std::vector<CompareRow>& rows, bool csv) {
  double best = 0.0;
  for (const CompareRow& r : rows) {
    if (best == 0.0 || r.time_us < best) best = r.time_us;
  }
  std::ostringstream out;
  char buf[160];
  if (csv) {
    out << "algorithm,time_us,normalized,synthesis_s\n";
    for (const CompareRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.4f,", r.name.c_str(), r.time_us, r.time_us / best);
      out << buf;
      if (r.synth_s) {
        std::snprintf(buf, sizeof(buf), "%.3f", *r.synth_s);
        out << buf;
      }
      out << '\n';
    }
    return out.str();
  }
  std::snprintf(buf, sizeof(buf), "%-14s %16s %12s\n", "algorithm", "time_us", "normalized");
  out << buf;
  for (const CompareRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %16.3f %12.2f", r.name.c_str(), r.time_us, r.time_us / best);
    out << buf;
    if (r.synth_s) {
      std::snprintf(buf, sizeof(buf), " [%.2fs]", *r.synth_s);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology-aware collective schedule synthesis"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  TopologyArgs topo_args;
  CollectiveArgs coll_args;
  SynthArgs synth_args;
  std::string out, csv_out, schedule_file;
  bool csv = false;
  std::vector<std::string> compare_with{"greedy"};

  CLI::App* synth = app.add_subcommand("synth", "Synthesize a schedule");
  add_topology_options(synth, topo_args);
  add_collective_options(synth, coll_args);
  add_synth_options(synth, synth_args);
  synth->add_option("--out", out, "Schedule JSON output (default stdout)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a schedule under the link congestion model");
  add_topology_options(eval, topo_args);
  eval->add_option("--schedule", schedule_file, "Schedule JSON")->required();
  eval->add_option("--chunk-bytes", coll_args.chunk_bytes, "Chunk size (default: the schedule's)");
  eval->add_option("--out", out, "Report JSON output (default stdout)");
  eval->add_option("--csv", csv_out, "Per-send timeline CSV");

  CLI::App* compare = app.add_subcommand("compare", "Synthesized vs ring vs direct vs taccl-like");
  add_topology_options(compare, topo_args);
  add_collective_options(compare, coll_args);
  add_synth_options(compare, synth_args);
  compare->add_option("--with", compare_with, "Synthesizers to include")->delimiter(',');
  compare->add_flag("--csv", csv, "CSV instead of an aligned table");
  compare->add_option("--out", out, "Table output (default stdout)");

  CLI::App* verify_cmd = app.add_subcommand("verify", "Check a schedule against a collective");
  add_topology_options(verify_cmd, topo_args);
  add_collective_options(verify_cmd, coll_args);
  verify_cmd->add_option("--schedule", schedule_file, "Schedule JSON")->required();
  verify_cmd->add_flag("--relaxed", synth_args.taccl_like, "Skip link congestion checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    json inputs = json::object();
    const Topology topology = load_topology(topo_args, inputs);

    if (synth->parsed()) {
      const Collective collective = load_collective(coll_args, topology.num_npus(), inputs);
      const Synthesizer kind = pick_synthesizer(synth_args);
      const SynthesisConfig cfg = make_config(synth_args);
      const auto t0 = std::chrono::steady_clock::now();
      const Schedule s = synthesize_collective(topology, collective, coll_args.chunk_bytes, kind, cfg);
      const double wall = seconds_since(t0);
      const VerifyReport rep = verify(s, topology, collective, verify_options_for(kind));
      const double us = evaluate(s, topology, coll_args.chunk_bytes).collective_time_us;
      emit(out, save_schedule(s));
      if (!out.empty() && out != "-") {
        json c = to_json(cfg);
        c["synthesizer"] = std::string(to_string(kind));
        c["collective"] = to_json(collective);
        write_manifest(out, "synth", args, inputs, c, cfg.rng_seed);
      }
      std::fprintf(stderr, "t_f=%d time_us=%.3f synthesis_s=%.3f sends=%zu%s\n", s.horizon, us, wall,
                   s.sends.size(), s.provenance.optimal ? " optimal" : "");
      if (!rep.ok()) {
        std::fprintf(stderr, "%s\n", rep.summary().c_str());
        return 1;
      }
      if (s.provenance.time_limited && !s.provenance.optimal) return 4;
      return 0;
    }

    if (eval->parsed()) {
      const std::string text = read_file(schedule_file);
      inputs[schedule_file] = digest_hex(text);
      const Schedule s = load_schedule(text);
      const double bytes = eval->count("--chunk-bytes") ? coll_args.chunk_bytes : s.chunk_bytes;
      const CostReport r = evaluate(s, topology, bytes);
      emit(out, to_json(r).dump(2) + "\n");
      if (!csv_out.empty()) write_file(csv_out, timeline_csv(r));
      if (!out.empty() && out != "-") write_manifest(out, "eval", args, inputs, json{{"chunk_bytes", bytes}}, 0);
      return 0;
    }

    if (compare->parsed()) {
      const Collective collective = load_collective(coll_args, topology.num_npus(), inputs);
      const SynthesisConfig cfg = make_config(synth_args);
      std::vector<CompareRow> rows;
      std::vector<std::string> names = compare_with;
      if (std::find(names.begin(), names.end(), "taccl-like") == names.end()) names.push_back("taccl-like");
      for (const std::string& name : names) {
        const Synthesizer kind = synthesizer_from_string(name);
        const auto t0 = std::chrono::steady_clock::now();
        const Schedule s = synthesize_collective(topology, collective, coll_args.chunk_bytes, kind, cfg);
        const double wall = seconds_since(t0);
        rows.push_back({name, evaluate(s, topology, coll_args.chunk_bytes).collective_time_us, wall});
      }
      rows.push_back({"ring", evaluate(baseline_ring(topology, collective, coll_args.chunk_bytes), topology,
                                       coll_args.chunk_bytes).collective_time_us, std::nullopt});
      rows.push_back({"direct", evaluate(baseline_direct(topology, collective, coll_args.chunk_bytes), topology,
                                         coll_args.chunk_bytes).collective_time_us, std::nullopt});
      const std::string table = format_table(rows, csv);
      emit(out, table);
      if (!out.empty() && out != "-") {
        json c = to_json(cfg);
        c["collective"] = to_json(collective);
        write_manifest(out, "compare", args, inputs, c, cfg.rng_seed);
      }
      return 0;
    }

    if (verify_cmd->parsed()) {
      const std::string text = read_file(schedule_file);
      const Schedule s = load_schedule(text);
      const Collective collective = load_collective(coll_args, topology.num_npus(), inputs);
      VerifyOptions o;
      o.check_congestion = !synth_args.taccl_like;
      const VerifyReport rep = verify(s, topology, collective, o);
      std::cout << (rep.ok() ? "ok\n" : rep.summary() + "\n");
      return rep.ok() ? 0 : 1;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
