#pragma once

#include <cstdint>
#include <vector>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/relgraph/graph.hpp"

namespace relicl {

/// The graph as of time `cutoff`: exactly the nodes with timestamp <= cutoff.
/// A cheap value type; the graph must outlive it.
class SnapshotView {
 public:
  SnapshotView(const TemporalGraph& graph, Timestamp cutoff) : graph_(&graph), cutoff_(cutoff) {}

  Timestamp cutoff() const noexcept { return cutoff_; }
  const TemporalGraph& graph() const noexcept { return *graph_; }

  bool contains(NodeId n) const { return graph_->node_time(n) <= cutoff_; }

  /// Visible rows of a table in ascending row order.
  std::vector<std::uint32_t> rows(std::size_t table) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t r = 0; r < graph_->table(table).rows; ++r)
      if (graph_->node_time(table, r) <= cutoff_) out.push_back(r);
    return out;
  }

  std::uint64_t num_nodes() const {
    std::uint64_t n = 0;
    for (std::size_t t = 0; t < graph_->num_tables(); ++t) n += rows(t).size();
    return n;
  }

  /// neighbors_before at the snapshot cutoff; empty when `n` itself is not
  /// visible.
  std::vector<std::uint32_t> neighbors(const AdjacencyIndex& index, NodeId n, std::size_t edge_type,
                                       std::size_t k) const {
    if (!contains(n)) return {};
    return index.neighbors_before(n.row, edge_type, cutoff_, k);
  }

 private:
  const TemporalGraph* graph_;
  Timestamp cutoff_;
};

inline SnapshotView snapshot(const TemporalGraph& graph, Timestamp t) { return {graph, t}; }

}  // namespace relicl
