#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "relicl/colstore/array.hpp"
#include "relicl/core/error.hpp"
#include "relicl/core/time.hpp"
#include "relicl/relgraph/graph.hpp"

namespace relicl {

/// One directed edge type. Each link yields a forward type (fact row -> the
/// row it references) and a reverse type (referenced row -> fact rows).
struct EdgeType {
  std::uint32_t link = 0;
  bool reverse = false;
  std::uint32_t src_table = 0;
  std::uint32_t dst_table = 0;
  std::string name;
};

/// CSR adjacency of one edge type. Each neighbor list is sorted ascending by
/// (neighbor timestamp, neighbor row); `times` mirrors `neighbors`.
struct Csr {
  Array<std::uint64_t> offsets;  // rows(src_table) + 1
  Array<std::uint32_t> neighbors;
  Array<Timestamp> times;

  std::size_t degree(std::size_t row) const { return offsets[row + 1] - offsets[row]; }
};

/// Records the timestamps of every node handed out by a retrieval, so tests
/// can prove that no read went past an anchor.
struct AccessProbe {
  Timestamp max_time = kNegInf;
  Timestamp min_time = kPosInf;
  std::size_t reads = 0;

  void record(Timestamp t) {
    ++reads;
    max_time = std::max(max_time, t);
    min_time = std::min(min_time, t);
  }
};

class AdjacencyIndex {
 public:
  AdjacencyIndex() = default;
  AdjacencyIndex(std::vector<EdgeType> types, std::vector<Csr> csr, std::vector<std::size_t> dangling)
      : types_(std::move(types)), csr_(std::move(csr)), dangling_(std::move(dangling)) {}

  std::size_t num_edge_types() const noexcept { return types_.size(); }
  const EdgeType& edge_type(std::size_t e) const {
    if (e >= types_.size()) throw Error("unknown edge type " + std::to_string(e));
    return types_[e];
  }
  const std::vector<EdgeType>& edge_types() const noexcept { return types_; }
  const Csr& csr(std::size_t e) const {
    if (e >= csr_.size()) throw Error("unknown edge type " + std::to_string(e));
    return csr_[e];
  }
  /// Dangling foreign-key values of each link.
  const std::vector<std::size_t>& dangling() const noexcept { return dangling_; }

  /// Edge types leaving `table`, in edge-type order.
  std::vector<std::uint32_t> edge_types_from(std::size_t table) const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t e = 0; e < types_.size(); ++e)
      if (types_[e].src_table == table) out.push_back(e);
    return out;
  }

  /// Appends to `out` the up-to-k most recent neighbors of `row` with
  /// timestamp <= t, most recent first. Neighbors without timestamp are
  /// always eligible and come after the timestamped ones in ascending row
  /// order. O(log d + k).
  void neighbors_before(std::uint32_t row, std::size_t edge_type, Timestamp t, std::size_t k,
                        std::vector<std::uint32_t>& out, AccessProbe* probe = nullptr) const {
    const Csr& c = csr(edge_type);
    if (k == 0) return;
    const Timestamp* base = c.times.data();
    const std::size_t lo = c.offsets[row], hi = c.offsets[row + 1];
    const Timestamp* first_timed = std::upper_bound(base + lo, base + hi, kNegInf);
    const Timestamp* end = std::upper_bound(first_timed, base + hi, t);
    std::size_t taken = 0;
    for (const Timestamp* p = end; p != first_timed && taken < k; ++taken) {
      --p;
      std::size_t i = static_cast<std::size_t>(p - base);
      out.push_back(c.neighbors[i]);
      if (probe) probe->record(*p);
    }
    for (const Timestamp* p = base + lo; p != first_timed && taken < k; ++p, ++taken) {
      out.push_back(c.neighbors[static_cast<std::size_t>(p - base)]);
      if (probe) probe->record(*p);
    }
  }

  std::vector<std::uint32_t> neighbors_before(std::uint32_t row, std::size_t edge_type, Timestamp t,
                                              std::size_t k) const {
    std::vector<std::uint32_t> out;
    neighbors_before(row, edge_type, t, k, out);
    return out;
  }

  /// Neighbors with timestamp in (from, to], ascending by time.
  std::pair<std::size_t, std::size_t> window(std::uint32_t row, std::size_t edge_type, Timestamp from,
                                             Timestamp to) const {
    const Csr& c = csr(edge_type);
    const Timestamp* base = c.times.data();
    const std::size_t lo = c.offsets[row], hi = c.offsets[row + 1];
    auto b = std::upper_bound(base + lo, base + hi, from);
    auto e = std::upper_bound(b, base + hi, to);
    return {static_cast<std::size_t>(b - base), static_cast<std::size_t>(e - base)};
  }

 private:
  std::vector<EdgeType> types_;
  std::vector<Csr> csr_;
  std::vector<std::size_t> dangling_;
};

namespace adjacency_detail {

inline Csr build_csr(std::size_t src_rows, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges,
                     const TemporalGraph& graph, std::size_t dst_table) {
  std::vector<std::uint64_t> offsets(src_rows + 1, 0);
  for (const auto& e : edges) ++offsets[e.first + 1];
  for (std::size_t i = 0; i < src_rows; ++i) offsets[i + 1] += offsets[i];
  std::vector<std::uint32_t> nbrs(edges.size());
  std::vector<std::uint64_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& e : edges) nbrs[cursor[e.first]++] = e.second;
  std::vector<Timestamp> times(edges.size());
  for (std::size_t s = 0; s < src_rows; ++s) {
    auto b = nbrs.begin() + static_cast<std::ptrdiff_t>(offsets[s]);
    auto e = nbrs.begin() + static_cast<std::ptrdiff_t>(offsets[s + 1]);
    std::sort(b, e, [&](std::uint32_t x, std::uint32_t y) {
      Timestamp tx = graph.node_time(dst_table, x), ty = graph.node_time(dst_table, y);
      return tx != ty ? tx < ty : x < y;
    });
    for (auto i = offsets[s]; i < offsets[s + 1]; ++i) times[i] = graph.node_time(dst_table, nbrs[i]);
  }
  return {Array<std::uint64_t>(std::move(offsets)), Array<std::uint32_t>(std::move(nbrs)),
          Array<Timestamp>(std::move(times))};
}

}  // namespace adjacency_detail

/// Builds forward and reverse CSR lists for every link. Foreign-key values
/// without a matching primary key are skipped and counted.
inline AdjacencyIndex build_adjacency(const TemporalGraph& graph) {
  const auto& schema = graph.schema();
  std::vector<EdgeType> types;
  std::vector<Csr> csr;
  std::vector<std::size_t> dangling;
  for (std::uint32_t l = 0; l < schema.links.size(); ++l) {
    const auto& link = schema.links[l];
    auto src = static_cast<std::uint32_t>(graph.table_index(link.src_table));
    auto dst = static_cast<std::uint32_t>(graph.table_index(link.dst_table));
    const auto& fk = *graph.table(src).find(link.fkey_column);
    // Resolve each distinct fk string once.
    std::vector<std::int64_t> code_to_row(fk.dict.size(), -1);
    for (std::uint32_t code = 0; code < fk.dict.size(); ++code)
      if (auto r = graph.find_row(dst, fk.dict[code])) code_to_row[code] = *r;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> fwd, rev;
    std::size_t dangle = 0;
    for (std::uint32_t r = 0; r < graph.table(src).rows; ++r) {
      if (fk.is_null(r)) continue;
      auto target = code_to_row[fk.codes[r]];
      if (target < 0) {
        ++dangle;
        continue;
      }
      fwd.emplace_back(r, static_cast<std::uint32_t>(target));
      rev.emplace_back(static_cast<std::uint32_t>(target), r);
    }
    types.push_back({l, false, src, dst, link.src_table + "." + link.fkey_column + "->" + link.dst_table});
    csr.push_back(adjacency_detail::build_csr(graph.table(src).rows, fwd, graph, dst));
    types.push_back({l, true, dst, src, link.dst_table + "<-" + link.src_table + "." + link.fkey_column});
    csr.push_back(adjacency_detail::build_csr(graph.table(dst).rows, rev, graph, src));
    dangling.push_back(dangle);
  }
  return AdjacencyIndex(std::move(types), std::move(csr), std::move(dangling));
}

/// Graph plus its adjacency index: the unit saved to and loaded from disk.
struct Store {
  TemporalGraph graph;
  AdjacencyIndex index;
};

inline Store make_store(TemporalGraph graph) {
  Store s{std::move(graph), {}};
  s.index = build_adjacency(s.graph);
  return s;
}

}  // namespace relicl
