#include "collsynth/collective.hpp"

#include "collsynth/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

namespace collsynth {

namespace {

struct KindName {
  CollectiveKind kind;
  std::string_view name;
};

constexpr std::array<KindName, 9> kKindNames{{
    {CollectiveKind::Scatter, "scatter"},
    {CollectiveKind::Gather, "gather"},
    {CollectiveKind::Broadcast, "broadcast"},
    {CollectiveKind::Reduce, "reduce"},
    {CollectiveKind::ReduceScatter, "reduce-scatter"},
    {CollectiveKind::AllGather, "all-gather"},
    {CollectiveKind::AllReduce, "all-reduce"},
    {CollectiveKind::AllToAll, "all-to-all"},
    {CollectiveKind::Custom, "custom"},
}};

void normalize(std::vector<Placement>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::string_view to_string(CollectiveKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "custom";
}

CollectiveKind collective_kind_from_string(std::string_view name) {
  std::string lower;
  for (char ch : name) {
    lower.push_back(ch == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  for (const auto& kn : kKindNames) {
    if (kn.name == lower) return kn.kind;
  }
  // Accept the compact spellings too (allgather, reducescatter, ...).
  std::string compact;
  for (char ch : lower) {
    if (ch != '-') compact.push_back(ch);
  }
  for (const auto& kn : kKindNames) {
    std::string k;
    for (char ch : kn.name) {
      if (ch != '-') k.push_back(ch);
    }
    if (k == compact) return kn.kind;
  }
  throw Error(ErrorCode::InvalidSpec, "unknown collective kind '" + std::string(name) + "'");
}

bool is_rooted(CollectiveKind kind) {
  return kind == CollectiveKind::Scatter || kind == CollectiveKind::Gather ||
         kind == CollectiveKind::Broadcast || kind == CollectiveKind::Reduce;
}

bool is_combining(CollectiveKind kind) {
  return kind == CollectiveKind::Reduce || kind == CollectiveKind::ReduceScatter ||
         kind == CollectiveKind::AllReduce;
}

std::vector<std::vector<NpuId>> Collective::pre_holders() const {
  std::vector<std::vector<NpuId>> h(chunks.size());
  for (const Placement& p : pre) h[static_cast<std::size_t>(p.chunk)].push_back(p.npu);
  return h;
}

std::vector<std::vector<NpuId>> Collective::post_holders() const {
  std::vector<std::vector<NpuId>> h(chunks.size());
  for (const Placement& p : post) h[static_cast<std::size_t>(p.chunk)].push_back(p.npu);
  return h;
}

void Collective::validate() const {
  if (num_npus < 1) throw Error(ErrorCode::InvalidSpec, "collective needs NPUs");
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (chunks[i].id != static_cast<ChunkId>(i)) {
      throw Error(ErrorCode::InvalidSpec, "chunk ids must be 0..C-1 in order");
    }
    if (!(chunks[i].size_bytes > 0.0)) throw Error(ErrorCode::InvalidSpec, "chunk size must be > 0");
  }
  auto check_range = [&](const std::vector<Placement>& v, const char* what) {
    for (const Placement& p : v) {
      if (p.chunk < 0 || p.chunk >= num_chunks() || p.npu < 0 || p.npu >= num_npus) {
        throw Error(ErrorCode::InvalidSpec, std::string(what) + " placement out of range");
      }
    }
  };
  check_range(pre, "precondition");
  check_range(post, "postcondition");
  const auto holders = pre_holders();
  for (const Placement& p : post) {
    if (holders[static_cast<std::size_t>(p.chunk)].empty()) {
      throw Error(ErrorCode::InvalidSpec,
                  "chunk " + std::to_string(p.chunk) + " required but never present");
    }
  }
  if (kind != CollectiveKind::Custom) {
    if (combining != is_combining(kind)) {
      throw Error(ErrorCode::InvalidSpec, "combining flag does not match kind");
    }
    if (!combining) {
      for (std::size_t c = 0; c < holders.size(); ++c) {
        if (holders[c].size() != 1) {
          throw Error(ErrorCode::InvalidSpec,
                      "non-combining chunk " + std::to_string(c) + " needs exactly one source");
        }
      }
    }
  }
}

Collective make_collective(CollectiveKind kind, int num_npus, int chunks_per_npu, double chunk_bytes,
                           std::optional<NpuId> root) {
  if (num_npus < 2) throw Error(ErrorCode::InvalidSize, "collective needs at least 2 NPUs");
  if (chunks_per_npu < 1) throw Error(ErrorCode::InvalidSize, "chunks_per_npu must be >= 1");
  if (!(chunk_bytes > 0.0)) throw Error(ErrorCode::InvalidSize, "chunk size must be > 0");
  if (kind == CollectiveKind::Custom) {
    throw Error(ErrorCode::InvalidSpec, "custom collectives are loaded, not generated");
  }
  if (is_rooted(kind)) {
    if (!root) throw Error(ErrorCode::InvalidSpec, std::string(to_string(kind)) + " needs a root");
    if (*root < 0 || *root >= num_npus) throw Error(ErrorCode::InvalidSpec, "root out of range");
  }

  const int n = num_npus;
  const int k = chunks_per_npu;
  Collective c;
  c.kind = kind;
  c.num_npus = n;
  c.combining = is_combining(kind);
  if (is_rooted(kind)) c.root = root;

  auto add_chunks = [&](int count) {
    for (int i = 0; i < count; ++i) c.chunks.push_back(Chunk{i, chunk_bytes});
  };
  const NpuId r = root.value_or(0);

  switch (kind) {
    case CollectiveKind::Scatter:
      add_chunks(n * k);
      for (int id = 0; id < n * k; ++id) {
        c.pre.push_back({id, r});
        c.post.push_back({id, id / k});
      }
      break;
    case CollectiveKind::Gather:
      add_chunks(n * k);
      for (int id = 0; id < n * k; ++id) {
        c.pre.push_back({id, id / k});
        c.post.push_back({id, r});
      }
      break;
    case CollectiveKind::Broadcast:
      add_chunks(k);
      for (int id = 0; id < k; ++id) {
        c.pre.push_back({id, r});
        for (int npu = 0; npu < n; ++npu) c.post.push_back({id, npu});
      }
      break;
    case CollectiveKind::Reduce:
      add_chunks(k);
      for (int id = 0; id < k; ++id) {
        for (int npu = 0; npu < n; ++npu) c.pre.push_back({id, npu});
        c.post.push_back({id, r});
      }
      break;
    case CollectiveKind::ReduceScatter:
      add_chunks(n * k);
      for (int id = 0; id < n * k; ++id) {
        for (int npu = 0; npu < n; ++npu) c.pre.push_back({id, npu});
        c.post.push_back({id, id / k});
      }
      break;
    case CollectiveKind::AllGather:
      add_chunks(n * k);
      for (int id = 0; id < n * k; ++id) {
        c.pre.push_back({id, id / k});
        for (int npu = 0; npu < n; ++npu) c.post.push_back({id, npu});
      }
      break;
    case CollectiveKind::AllReduce:
      add_chunks(n * k);
      for (int id = 0; id < n * k; ++id) {
        for (int npu = 0; npu < n; ++npu) {
          c.pre.push_back({id, npu});
          c.post.push_back({id, npu});
        }
      }
      break;
    case CollectiveKind::AllToAll:
      // chunk (src, dst, m) starts at src and ends at dst
      add_chunks(n * n * k);
      for (int src = 0; src < n; ++src) {
        for (int dst = 0; dst < n; ++dst) {
          for (int m = 0; m < k; ++m) {
            const int id = (src * n + dst) * k + m;
            c.pre.push_back({id, src});
            c.post.push_back({id, dst});
          }
        }
      }
      break;
    case CollectiveKind::Custom:
      break;
  }
  normalize(c.pre);
  normalize(c.post);
  return c;
}

Collective combining_counterpart(const Collective& c) {
  if (c.kind == CollectiveKind::AllReduce) {
    throw Error(ErrorCode::UseComposition,
                "all-reduce is reduce-scatter followed by all-gather; synthesize the phases");
  }
  if (!c.combining) throw Error(ErrorCode::InvalidSpec, "collective is not combining");

  Collective dual = c;
  dual.pre = c.post;
  dual.post = c.pre;
  dual.combining = false;
  dual.tenants.clear();
  switch (c.kind) {
    case CollectiveKind::Reduce: dual.kind = CollectiveKind::Broadcast; break;
    case CollectiveKind::ReduceScatter: dual.kind = CollectiveKind::AllGather; break;
    default: dual.kind = CollectiveKind::Custom; break;
  }
  return dual;
}

Collective merge_collectives(std::span<const TenantSpec> parts, int num_npus) {
  if (parts.empty()) throw Error(ErrorCode::InvalidSpec, "nothing to merge");
  if (parts.size() == 1 && parts[0].npus.size() == static_cast<std::size_t>(num_npus)) {
    bool identity = true;
    for (std::size_t i = 0; i < parts[0].npus.size(); ++i) {
      identity = identity && parts[0].npus[i] == static_cast<NpuId>(i);
    }
    if (identity) return parts[0].collective;
  }

  Collective m;
  m.kind = CollectiveKind::Custom;
  m.num_npus = num_npus;
  for (const TenantSpec& part : parts) {
    const Collective& c = part.collective;
    if (part.npus.size() != static_cast<std::size_t>(c.num_npus)) {
      throw Error(ErrorCode::InvalidSpec, "tenant NPU map size must equal its collective size");
    }
    std::set<NpuId> distinct(part.npus.begin(), part.npus.end());
    if (distinct.size() != part.npus.size()) {
      throw Error(ErrorCode::InvalidSpec, "tenant NPU map has duplicates");
    }
    for (NpuId g : part.npus) {
      if (g < 0 || g >= num_npus) throw Error(ErrorCode::InvalidSpec, "tenant NPU out of range");
    }
    const ChunkId offset = m.num_chunks();
    Tenant tenant;
    tenant.kind = c.kind;
    tenant.combining = c.combining;
    tenant.npus = part.npus;
    if (c.root) tenant.root = part.npus[static_cast<std::size_t>(*c.root)];
    for (const Chunk& ch : c.chunks) {
      m.chunks.push_back(Chunk{offset + ch.id, ch.size_bytes});
      tenant.chunks.push_back(offset + ch.id);
    }
    for (const Placement& p : c.pre) m.pre.push_back({offset + p.chunk, part.npus[static_cast<std::size_t>(p.npu)]});
    for (const Placement& p : c.post) m.post.push_back({offset + p.chunk, part.npus[static_cast<std::size_t>(p.npu)]});
    m.combining = m.combining || c.combining;
    if (c.tenants.empty()) {
      m.tenants.push_back(std::move(tenant));
    } else {
      for (const Tenant& inner : c.tenants) {
        Tenant t = inner;
        for (ChunkId& id : t.chunks) id += offset;
        for (NpuId& npu : t.npus) npu = part.npus[static_cast<std::size_t>(npu)];
        if (t.root) t.root = part.npus[static_cast<std::size_t>(*t.root)];
        m.tenants.push_back(std::move(t));
      }
    }
  }
  normalize(m.pre);
  normalize(m.post);
  return m;
}

nlohmann::json to_json(const Collective& c) {
  nlohmann::json chunks = nlohmann::json::array();
  for (const Chunk& ch : c.chunks) {
    chunks.push_back({{"id", ch.id}, {"size_bytes", static_cast<long long>(ch.size_bytes)}});
  }
  auto pairs = [](const std::vector<Placement>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const Placement& p : v) a.push_back({p.chunk, p.npu});
    return a;
  };
  nlohmann::json j = {{"kind", std::string(to_string(c.kind))},
                      {"chunks", chunks},
                      {"pre", pairs(c.pre)},
                      {"post", pairs(c.post)},
                      {"combining", c.combining}};
  if (c.root) j["root"] = *c.root;
  if (!c.tenants.empty()) {
    nlohmann::json ts = nlohmann::json::array();
    for (const Tenant& t : c.tenants) {
      nlohmann::json tj = {{"kind", std::string(to_string(t.kind))},
                           {"chunks", t.chunks},
                           {"npus", t.npus},
                           {"combining", t.combining}};
      if (t.root) tj["root"] = *t.root;
      ts.push_back(tj);
    }
    j["tenants"] = ts;
  }
  return j;
}

Collective collective_from_json(const nlohmann::json& j, int num_npus) {
  try {
    Collective c;
    c.kind = collective_kind_from_string(j.at("kind").get<std::string>());
    c.num_npus = num_npus;
    for (const auto& chj : j.at("chunks")) {
      c.chunks.push_back(Chunk{chj.at("id").get<int>(), chj.at("size_bytes").get<double>()});
    }
    std::sort(c.chunks.begin(), c.chunks.end(),
              [](const Chunk& a, const Chunk& b) { return a.id < b.id; });
    for (const auto& p : j.at("pre")) c.pre.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    for (const auto& p : j.at("post")) c.post.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    c.combining = j.at("combining").get<bool>();
    if (j.contains("root")) c.root = j["root"].get<int>();
    if (j.contains("tenants")) {
      for (const auto& tj : j["tenants"]) {
        Tenant t;
        t.kind = collective_kind_from_string(tj.at("kind").get<std::string>());
        t.chunks = tj.at("chunks").get<std::vector<int>>();
        t.npus = tj.at("npus").get<std::vector<int>>();
        t.combining = tj.at("combining").get<bool>();
        if (tj.contains("root")) t.root = tj["root"].get<int>();
        c.tenants.push_back(std::move(t));
      }
    }
    normalize(c.pre);
    normalize(c.post);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("collective JSON: ") + e.what());
  }
}

}  // namespace collsynth
