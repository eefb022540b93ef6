#include "collsynth/algorithm.hpp"

#include "collsynth/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <sstream>

namespace collsynth {

namespace {

using Bits = std::vector<std::uint64_t>;

bool is_empty(const Bits& b) {
  return std::all_of(b.begin(), b.end(), [](std::uint64_t w) { return w == 0; });
}

bool is_subset(const Bits& a, const Bits& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] & ~b[i]) != 0) return false;
  }
  return true;
}

bool is_disjoint(const Bits& a, const Bits& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] & b[i]) != 0) return false;
  }
  return true;
}

std::string describe(const Send& s) {
  std::ostringstream out;
  out << "chunk " << s.chunk << " " << s.src << "->" << s.dst << " at t=" << s.depart << " (+"
      << s.steps << ")";
  return out.str();
}

const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::Parse, "schedule schema: expected object at " + (path.empty() ? "/" : path));
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::Parse, "schedule schema: missing " + path + "/" + key);
  return *it;
}

template <typename T>
T typed(const nlohmann::json& j, const char* key, const std::string& path) {
  const nlohmann::json& v = field(j, key, path);
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw Error(ErrorCode::Parse, "");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw Error(ErrorCode::Parse, "");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw Error(ErrorCode::Parse, "");
    } else {
      if (!v.is_number()) throw Error(ErrorCode::Parse, "");
    }
    return v.get<T>();
  } catch (const Error&) {
    throw Error(ErrorCode::Parse, "schedule schema: wrong type at " + path + "/" + key);
  }
}

}  // namespace

void Schedule::normalize() {
  std::sort(sends.begin(), sends.end(), [](const Send& a, const Send& b) {
    return std::tie(a.depart, a.src, a.dst, a.chunk, a.steps) <
           std::tie(b.depart, b.src, b.dst, b.chunk, b.steps);
  });
  sends.erase(std::unique(sends.begin(), sends.end()), sends.end());
}

Timestep Schedule::last_arrival() const {
  Timestep last = 0;
  for (const Send& s : sends) last = std::max(last, s.arrive());
  return last;
}

const char* to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::MalformedSend: return "malformed-send";
    case ViolationKind::NonexistentLink: return "nonexistent-link";
    case ViolationKind::LatencyTooShort: return "latency-too-short";
    case ViolationKind::UnheldChunk: return "unheld-chunk";
    case ViolationKind::LinkCongestion: return "link-congestion";
    case ViolationKind::DoubleCount: return "double-count";
    case ViolationKind::HorizonTooShort: return "horizon-too-short";
    case ViolationKind::UnmetPostcondition: return "unmet-postcondition";
  }
  return "unknown";
}

std::size_t VerifyReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; }));
}

std::string VerifyReport::summary() const {
  if (ok()) return "ok";
  std::ostringstream out;
  out << violations.size() << " violation(s)";
  const std::size_t shown = std::min<std::size_t>(violations.size(), 5);
  for (std::size_t i = 0; i < shown; ++i) {
    out << "\n  " << to_string(violations[i].kind) << ": " << violations[i].message;
  }
  if (shown < violations.size()) out << "\n  ...";
  return out.str();
}

VerifyReport verify(const Schedule& s, const Topology& topology, const Collective& collective,
                    const VerifyOptions& options) {
  VerifyReport report;
  auto flag = [&](ViolationKind kind, std::string msg, std::optional<std::size_t> idx) {
    report.violations.push_back(Violation{kind, std::move(msg), idx});
  };

  const int n = collective.num_npus;
  const int num_chunks = collective.num_chunks();
  if (topology.num_npus() != n) {
    flag(ViolationKind::MalformedSend, "topology and collective disagree on NPU count", std::nullopt);
    return report;
  }

  // Contributor index of each pre holder, per chunk.
  const auto holders = collective.pre_holders();
  std::vector<std::size_t> words(static_cast<std::size_t>(num_chunks));
  std::vector<std::map<NpuId, int>> contributor(static_cast<std::size_t>(num_chunks));
  for (int c = 0; c < num_chunks; ++c) {
    const auto& h = holders[static_cast<std::size_t>(c)];
    words[static_cast<std::size_t>(c)] = std::max<std::size_t>(1, (h.size() + 63) / 64);
    for (std::size_t i = 0; i < h.size(); ++i) contributor[static_cast<std::size_t>(c)][h[i]] = static_cast<int>(i);
  }
  auto full_set = [&](int c) {
    Bits b(words[static_cast<std::size_t>(c)], 0);
    const std::size_t cnt = holders[static_cast<std::size_t>(c)].size();
    for (std::size_t i = 0; i < cnt; ++i) b[i / 64] |= std::uint64_t{1} << (i % 64);
    return b;
  };
  std::vector<Bits> state(static_cast<std::size_t>(num_chunks) * static_cast<std::size_t>(n));
  auto at = [&](int c, int npu) -> Bits& {
    return state[static_cast<std::size_t>(c) * static_cast<std::size_t>(n) + static_cast<std::size_t>(npu)];
  };
  for (int c = 0; c < num_chunks; ++c) {
    for (int npu = 0; npu < n; ++npu) at(c, npu).assign(words[static_cast<std::size_t>(c)], 0);
  }
  for (const Placement& p : collective.pre) {
    const int idx = contributor[static_cast<std::size_t>(p.chunk)][p.npu];
    at(p.chunk, p.npu)[static_cast<std::size_t>(idx) / 64] |= std::uint64_t{1} << (idx % 64);
  }

  // Structural checks per send.
  std::vector<bool> usable(s.sends.size(), true);
  for (std::size_t i = 0; i < s.sends.size(); ++i) {
    const Send& x = s.sends[i];
    if (x.chunk < 0 || x.chunk >= num_chunks || x.src < 0 || x.src >= n || x.dst < 0 || x.dst >= n ||
        x.src == x.dst || x.depart < 0 || x.steps < 1) {
      flag(ViolationKind::MalformedSend, describe(x), i);
      usable[i] = false;
      continue;
    }
    const auto link = topology.find_link(x.src, x.dst);
    if (!link) {
      flag(ViolationKind::NonexistentLink, describe(x), i);
      continue;
    }
    if (s.factor_us > 0.0) {
      const double delay =
          topology.links()[*link].delay_us(collective.chunks[static_cast<std::size_t>(x.chunk)].size_bytes);
      const int need = std::max(1, static_cast<int>(std::ceil(delay / s.factor_us - 1e-9)));
      if (x.steps < need) {
        flag(ViolationKind::LatencyTooShort,
             describe(x) + " needs " + std::to_string(need) + " steps", i);
      }
    }
    if (x.arrive() > s.horizon) {
      flag(ViolationKind::HorizonTooShort,
           describe(x) + " arrives after horizon " + std::to_string(s.horizon), i);
    }
  }

  if (options.check_congestion) {
    std::map<std::pair<NpuId, NpuId>, std::vector<std::size_t>> per_link;
    for (std::size_t i = 0; i < s.sends.size(); ++i) {
      if (usable[i]) per_link[{s.sends[i].src, s.sends[i].dst}].push_back(i);
    }
    for (auto& [key, idx] : per_link) {
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return s.sends[a].depart < s.sends[b].depart;
      });
      Timestep busy_until = -1;
      std::size_t holder = 0;
      for (std::size_t i : idx) {
        const Send& x = s.sends[i];
        if (x.depart < busy_until) {
          flag(ViolationKind::LinkCongestion,
               describe(x) + " overlaps " + describe(s.sends[holder]), i);
        }
        if (x.arrive() > busy_until) {
          busy_until = x.arrive();
          holder = i;
        }
      }
    }
  }

  // Replay: arrivals at t land before departures at t read their source.
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < s.sends.size(); ++i) {
    if (usable[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s.sends[a].depart < s.sends[b].depart;
  });
  struct Pending {
    Timestep arrive;
    std::size_t index;
    Bits payload;
  };
  auto later = [](const Pending& a, const Pending& b) {
    return std::tie(a.arrive, a.index) > std::tie(b.arrive, b.index);
  };
  std::vector<Pending> heap;

  auto land = [&](const Pending& p) {
    const Send& x = s.sends[p.index];
    Bits& cur = at(x.chunk, x.dst);
    if (is_empty(p.payload)) return;
    if (is_empty(cur) || is_subset(cur, p.payload)) {
      cur = p.payload;
    } else if (is_subset(p.payload, cur)) {
      // already included; a copy of data the receiver has
    } else if (is_disjoint(cur, p.payload)) {
      for (std::size_t w = 0; w < cur.size(); ++w) cur[w] |= p.payload[w];
    } else {
      flag(ViolationKind::DoubleCount, describe(x) + " merges overlapping partials", p.index);
    }
  };

  std::size_t next = 0;
  while (next < order.size() || !heap.empty()) {
    Timestep t = next < order.size() ? s.sends[order[next]].depart : kNever;
    if (!heap.empty()) t = std::min(t, heap.front().arrive);
    while (!heap.empty() && heap.front().arrive == t) {
      std::pop_heap(heap.begin(), heap.end(), later);
      land(heap.back());
      heap.pop_back();
    }
    while (next < order.size() && s.sends[order[next]].depart == t) {
      const std::size_t i = order[next++];
      const Send& x = s.sends[i];
      const Bits& src = at(x.chunk, x.src);
      if (is_empty(src)) {
        flag(ViolationKind::UnheldChunk, describe(x) + ": source does not hold the chunk", i);
      }
      heap.push_back(Pending{x.arrive(), i, src});
      std::push_heap(heap.begin(), heap.end(), later);
    }
  }

  for (const Placement& p : collective.post) {
    if (at(p.chunk, p.npu) != full_set(p.chunk)) {
      flag(ViolationKind::UnmetPostcondition,
           "chunk " + std::to_string(p.chunk) + " incomplete at NPU " + std::to_string(p.npu), std::nullopt);
    }
  }
  return report;
}

Schedule invert(const Schedule& s) {
  Schedule r = s;
  for (Send& x : r.sends) {
    x = Send{x.chunk, x.dst, x.src, s.horizon - x.depart - x.steps, x.steps};
  }
  r.normalize();
  return r;
}

Schedule invert_checked(const Schedule& s, const Topology& topology, const Collective& collective) {
  if (collective.combining) throw Error(ErrorCode::InvalidInput, "invert expects a non-combining schedule");
  const VerifyReport report = verify(s, topology, collective);
  if (!report.ok()) throw Error(ErrorCode::InvalidInput, "schedule to invert is not clean: " + report.summary());
  return invert(s);
}

Schedule shift(const Schedule& s, Timestep offset) {
  Schedule r = s;
  for (Send& x : r.sends) x.depart += offset;
  r.horizon += offset;
  return r;
}

Schedule compose_allreduce(const Schedule& rs, const Collective& rs_collective, const Schedule& ag,
                           const Collective& ag_collective) {
  if (rs_collective.post != ag_collective.pre) {
    throw Error(ErrorCode::InvalidComposition, "reduce-scatter postcondition differs from all-gather precondition");
  }
  if (rs.factor_us > 0.0 && ag.factor_us > 0.0 &&
      std::abs(rs.factor_us - ag.factor_us) > 1e-12 * std::max(rs.factor_us, ag.factor_us)) {
    throw Error(ErrorCode::InvalidComposition, "phases use different discretization factors");
  }
  if (rs.chunk_bytes != ag.chunk_bytes) {
    throw Error(ErrorCode::InvalidComposition, "phases use different chunk sizes");
  }
  Schedule out = rs;
  for (const Send& x : ag.sends) {
    Send y = x;
    y.depart += rs.horizon;
    out.sends.push_back(y);
  }
  out.horizon = rs.horizon + ag.horizon;
  out.normalize();
  return out;
}

Schedule prune_redundant(const Schedule& s, const Collective& collective) {
  const int n = collective.num_npus;
  auto key = [n](int c, int npu) { return static_cast<std::size_t>(c) * static_cast<std::size_t>(n) + static_cast<std::size_t>(npu); };
  const std::size_t cells = static_cast<std::size_t>(collective.num_chunks()) * static_cast<std::size_t>(n);

  std::vector<char> pre(cells, 0), post(cells, 0);
  for (const Placement& p : collective.pre) pre[key(p.chunk, p.npu)] = 1;
  for (const Placement& p : collective.post) post[key(p.chunk, p.npu)] = 1;

  std::vector<Send> sends = s.sends;
  std::vector<int> best(cells, -1);
  auto rank = [](const Send& x) { return std::make_tuple(x.arrive(), x.depart, x.src); };
  for (std::size_t i = 0; i < sends.size(); ++i) {
    const Send& x = sends[i];
    const std::size_t k = key(x.chunk, x.dst);
    if (pre[k]) continue;
    if (best[k] < 0 || rank(x) < rank(sends[static_cast<std::size_t>(best[k])])) best[k] = static_cast<int>(i);
  }
  std::vector<char> keep(sends.size(), 0);
  for (std::size_t k = 0; k < cells; ++k) {
    if (best[k] >= 0) keep[static_cast<std::size_t>(best[k])] = 1;
  }

  // Drop relay deliveries nobody downstream uses.
  std::vector<int> out_count(cells, 0);
  for (std::size_t i = 0; i < sends.size(); ++i) {
    if (keep[i]) ++out_count[key(sends[i].chunk, sends[i].src)];
  }
  std::deque<std::size_t> work;
  for (std::size_t i = 0; i < sends.size(); ++i) {
    if (keep[i]) work.push_back(i);
  }
  while (!work.empty()) {
    const std::size_t i = work.front();
    work.pop_front();
    if (!keep[i]) continue;
    const Send& x = sends[i];
    const std::size_t k = key(x.chunk, x.dst);
    if (post[k] || out_count[k] > 0) continue;
    keep[i] = 0;
    const std::size_t ks = key(x.chunk, x.src);
    if (--out_count[ks] == 0) {
      for (std::size_t j = 0; j < sends.size(); ++j) {
        if (keep[j] && sends[j].chunk == x.chunk && sends[j].dst == x.src) work.push_back(j);
      }
    }
  }

  Schedule r = s;
  r.sends.clear();
  for (std::size_t i = 0; i < sends.size(); ++i) {
    if (keep[i]) r.sends.push_back(sends[i]);
  }
  r.normalize();
  return r;
}

std::vector<Timestep> hold_times(const Schedule& s, const Collective& collective) {
  const int n = collective.num_npus;
  std::vector<Timestep> hold(static_cast<std::size_t>(collective.num_chunks()) * static_cast<std::size_t>(n), kNever);
  auto cell = [&](int c, int npu) -> Timestep& {
    return hold[static_cast<std::size_t>(c) * static_cast<std::size_t>(n) + static_cast<std::size_t>(npu)];
  };
  for (const Placement& p : collective.pre) cell(p.chunk, p.npu) = 0;
  std::vector<Send> sends = s.sends;
  std::stable_sort(sends.begin(), sends.end(),
                   [](const Send& a, const Send& b) { return a.depart < b.depart; });
  for (const Send& x : sends) {
    if (cell(x.chunk, x.src) <= x.depart) {
      Timestep& d = cell(x.chunk, x.dst);
      d = std::min(d, x.arrive());
    }
  }
  return hold;
}

nlohmann::json to_json(const Schedule& s) {
  nlohmann::json sends = nlohmann::json::array();
  for (const Send& x : s.sends) {
    sends.push_back({{"chunk", x.chunk}, {"src", x.src}, {"dst", x.dst}, {"t", x.depart}, {"steps", x.steps}});
  }
  return {
      {"version", 1},
      {"topology", s.topology_name},
      {"factor_us", s.factor_us},
      {"chunk_bytes", static_cast<long long>(std::llround(s.chunk_bytes))},
      {"horizon", s.horizon},
      {"sends", sends},
      {"provenance",
       {{"synthesizer", s.provenance.synthesizer},
        {"seed", s.provenance.seed},
        {"config_digest", s.provenance.config_digest},
        {"optimal", s.provenance.optimal},
        {"time_limited", s.provenance.time_limited},
        {"note", s.provenance.note}}},
  };
}

Schedule schedule_from_json(const nlohmann::json& j) {
  const int version = typed<int>(j, "version", "");
  if (version != 1) {
    throw Error(ErrorCode::UnsupportedVersion, "schedule version " + std::to_string(version) + " (expected 1)");
  }
  Schedule s;
  s.topology_name = typed<std::string>(j, "topology", "");
  s.factor_us = typed<double>(j, "factor_us", "");
  s.chunk_bytes = typed<double>(j, "chunk_bytes", "");
  s.horizon = typed<int>(j, "horizon", "");
  const nlohmann::json& sends = field(j, "sends", "");
  if (!sends.is_array()) throw Error(ErrorCode::Parse, "schedule schema: /sends must be an array");
  for (std::size_t i = 0; i < sends.size(); ++i) {
    const std::string path = "/sends/" + std::to_string(i);
    const nlohmann::json& e = sends[i];
    s.sends.push_back(Send{typed<int>(e, "chunk", path), typed<int>(e, "src", path),
                           typed<int>(e, "dst", path), typed<int>(e, "t", path),
                           typed<int>(e, "steps", path)});
  }
  const nlohmann::json& p = field(j, "provenance", "");
  s.provenance.synthesizer = typed<std::string>(p, "synthesizer", "/provenance");
  s.provenance.seed = typed<std::uint64_t>(p, "seed", "/provenance");
  s.provenance.config_digest = typed<std::string>(p, "config_digest", "/provenance");
  s.provenance.optimal = typed<bool>(p, "optimal", "/provenance");
  s.provenance.time_limited = typed<bool>(p, "time_limited", "/provenance");
  if (p.contains("note")) s.provenance.note = typed<std::string>(p, "note", "/provenance");
  return s;
}

std::string save_schedule(const Schedule& s) { return to_json(s).dump(2) + "\n"; }

Schedule load_schedule(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::Parse, std::string("schedule JSON: ") + e.what());
  }
  return schedule_from_json(j);
}

std::string digest_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace collsynth
