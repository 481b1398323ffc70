#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/core/random.hpp"

namespace relicl {

enum class SamplePolicy { kMostRecent, kUniform };

struct SamplerConfig {
  std::vector<std::size_t> fanouts{32, 32};  // per-hop neighbor caps; size = depth
  SamplePolicy policy = SamplePolicy::kMostRecent;
  /// Probability of hiding each PK-FK edge, decided per edge from the seed so
  /// both directions agree. Used by robustness ablations.
  double edge_drop_rate = 0.0;
  std::uint64_t seed = 0;
};

struct SampledNode {
  NodeId id;
  std::uint32_t hop = 0;
  Timestamp delta = 0;       // anchor - node time; kPosInf for dimension rows
  std::int32_t via = -1;     // edge type that discovered the node, -1 for the root
};

struct SampledEdge {
  std::uint32_t src = 0;  // local ids
  std::uint32_t dst = 0;
  std::uint32_t edge_type = 0;
  std::uint32_t hop = 0;  // hop of the source node

  bool operator==(const SampledEdge&) const = default;
};

/// Temporal neighborhood of one entity. Local id 0 is the root; local ids
/// are dense in discovery order.
struct SampledSubgraph {
  Timestamp anchor = 0;
  std::vector<SampledNode> nodes;
  std::vector<SampledEdge> edges;

  const SampledNode& root() const { return nodes.front(); }

  /// Local ids of the nodes of one table, ascending.
  std::vector<std::uint32_t> nodes_of_table(std::size_t table) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id.table == table) out.push_back(i);
    return out;
  }

  nlohmann::json to_json(const TemporalGraph& graph) const {
    nlohmann::json jn = nlohmann::json::array(), je = nlohmann::json::array();
    for (const auto& n : nodes) {
      nlohmann::json node{{"table", graph.meta(n.id.table).name}, {"row", n.id.row}, {"hop", n.hop}, {"via", n.via}};
      node["delta_ms"] = n.delta == kPosInf ? nlohmann::json("+inf") : nlohmann::json(n.delta);
      jn.push_back(std::move(node));
    }
    for (const auto& e : edges) je.push_back({e.src, e.dst, e.edge_type, e.hop});
    return {{"anchor", format_timestamp(anchor)}, {"nodes", jn}, {"edges", je}};
  }

  bool operator==(const SampledSubgraph& o) const {
    if (anchor != o.anchor || nodes.size() != o.nodes.size() || edges != o.edges) return false;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id != o.nodes[i].id || nodes[i].hop != o.nodes[i].hop || nodes[i].delta != o.nodes[i].delta ||
          nodes[i].via != o.nodes[i].via)
        return false;
    return true;
  }
};

namespace sampler_detail {

inline bool edge_dropped(const SamplerConfig& cfg, const Store& store, std::uint32_t et, NodeId a, NodeId b) {
  if (cfg.edge_drop_rate <= 0.0) return false;
  if (cfg.edge_drop_rate >= 1.0) return true;
  auto ga = store.graph.global_id(a), gb = store.graph.global_id(b);
  auto h = hash_combine(hash_combine(splitmix64(cfg.seed ^ 0xed6e), store.index.edge_type(et).link),
                        hash_combine(std::min(ga, gb), std::max(ga, gb)));
  return unit_from_hash(h) < cfg.edge_drop_rate;
}

}  // namespace sampler_detail

/// Breadth-first temporal neighborhood of `root` as of `anchor`. At hop h
/// every frontier node expands each of its edge types through
/// neighbors_before(anchor, fanouts[h]). Revisited nodes keep their first hop;
/// the edge to them is still recorded once.
inline SampledSubgraph sample_subgraph(const Store& store, NodeId root, Timestamp anchor, const SamplerConfig& config,
                                       AccessProbe* probe = nullptr) {
  const auto& g = store.graph;
  if (root.table >= g.num_tables() || root.row >= g.table(root.table).rows)
    throw InputError("unknown root node (" + std::to_string(root.table) + ", " + std::to_string(root.row) + ")");
  const Timestamp root_time = g.node_time(root);
  if (root_time > anchor)
    throw InputError("root " + g.meta(root.table).name + "#" + std::to_string(root.row) + " has timestamp " +
                     format_timestamp(root_time) + " after anchor " + format_timestamp(anchor));
  SampledSubgraph sg;
  sg.anchor = anchor;
  auto delta = [&](Timestamp t) { return t == kNegInf ? kPosInf : anchor - t; };
  if (probe) probe->record(root_time);
  sg.nodes.push_back({root, 0, delta(root_time), -1});
  std::unordered_map<std::uint64_t, std::uint32_t> local;
  local.emplace(g.global_id(root), 0);
  std::vector<std::unordered_set<std::uint64_t>> edge_seen(g.schema().links.size());
  std::vector<std::uint32_t> buf;
  std::size_t frontier_begin = 0;
  for (std::size_t h = 0; h < config.fanouts.size(); ++h) {
    const std::size_t frontier_end = sg.nodes.size();
    const std::size_t k = config.fanouts[h];
    for (std::size_t f = frontier_begin; f < frontier_end; ++f) {
      const NodeId u = sg.nodes[f].id;
      for (std::uint32_t et : store.index.edge_types_from(u.table)) {
        const auto dst_table = store.index.edge_type(et).dst_table;
        buf.clear();
        const bool filter = config.policy == SamplePolicy::kUniform || config.edge_drop_rate > 0.0;
        if (!filter) {
          store.index.neighbors_before(u.row, et, anchor, k, buf);
        } else {
          store.index.neighbors_before(u.row, et, anchor, std::numeric_limits<std::size_t>::max(), buf);
          std::erase_if(buf, [&](std::uint32_t r) { return sampler_detail::edge_dropped(config, store, et, u, {dst_table, r}); });
          if (config.policy == SamplePolicy::kUniform && buf.size() > k) {
            Rng rng(hash_combine(hash_combine(config.seed, g.global_id(u)), hash_combine(et, h)));
            auto pick = rng.sample_without_replacement(buf.size(), k);
            std::sort(pick.begin(), pick.end());
            std::vector<std::uint32_t> chosen;
            for (auto i : pick) chosen.push_back(buf[i]);
            buf.swap(chosen);
          } else if (buf.size() > k) {
            buf.resize(k);
          }
        }
        for (std::uint32_t r : buf) {
          const NodeId v{dst_table, r};
          const Timestamp vt = g.node_time(v);
          if (probe) probe->record(vt);
          auto gid = g.global_id(v);
          auto [it, inserted] = local.emplace(gid, static_cast<std::uint32_t>(sg.nodes.size()));
          if (inserted) sg.nodes.push_back({v, static_cast<std::uint32_t>(h + 1), delta(vt), static_cast<std::int32_t>(et)});
          // One edge per (node pair, link) no matter which side found it.
          auto a = std::min<std::uint64_t>(f, it->second), b = std::max<std::uint64_t>(f, it->second);
          if (edge_seen[store.index.edge_type(et).link].insert(a << 32 | b).second)
            sg.edges.push_back({static_cast<std::uint32_t>(f), it->second, et, static_cast<std::uint32_t>(h)});
        }
      }
    }
    frontier_begin = frontier_end;
  }
  return sg;
}

struct SampleRequest {
  NodeId root;
  Timestamp anchor = 0;
};

/// Order-preserving batch version of sample_subgraph.
inline std::vector<SampledSubgraph> sample_batch(const Store& store, const std::vector<SampleRequest>& requests,
                                                 const SamplerConfig& config) {
  std::vector<SampledSubgraph> out;
  out.reserve(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    try {
      out.push_back(sample_subgraph(store, requests[i].root, requests[i].anchor, config));
    } catch (const InputError& e) {
      throw InputError("batch item " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace relicl
