#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/core/time.hpp"
#include "relicl/pql/compile.hpp"

namespace relicl::baseline {

struct DfsOptions {
  std::size_t depth = 2;               // link path length, 1 or 2
  std::vector<std::string> exclude;    // entity-table columns left out (the target)
};

/// Options for a plan: a static target column is never used as a feature.
inline DfsOptions dfs_options(const pql::TaskPlan& plan, const TemporalGraph& g, std::size_t depth = 2) {
  DfsOptions o;
  o.depth = depth;
  if (!plan.temporal) o.exclude.push_back(g.meta(plan.entity_table).columns[plan.static_label().column].name);
  return o;
}

struct FlatRow {
  std::uint32_t entity = 0;
  Timestamp anchor = 0;
  std::vector<std::optional<double>> values;  // nullopt = null marker
};

namespace dfs_detail {

struct Path {
  std::vector<std::uint32_t> edges;
  std::size_t table = 0;  // table reached
  std::string name;
};

inline std::vector<Path> paths(const Store& s, std::size_t root, std::size_t depth) {
  std::vector<Path> out;
  std::vector<Path> frontier{{{}, root, ""}};
  for (std::size_t d = 0; d < depth; ++d) {
    std::vector<Path> next;
    for (const auto& p : frontier)
      for (auto e : s.index.edge_types_from(p.table)) {
        const auto& et = s.index.edge_type(e);
        // Never step straight back over the link just traversed.
        if (!p.edges.empty()) {
          const auto& prev = s.index.edge_type(p.edges.back());
          if (prev.link == et.link && prev.reverse != et.reverse) continue;
        }
        Path q = p;
        q.edges.push_back(e);
        q.table = et.dst_table;
        q.name += (q.name.empty() ? "" : "/") + et.name;
        next.push_back(q);
      }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

inline bool usable(SemanticType t) { return t == SemanticType::kNumerical || t == SemanticType::kCategorical; }

inline bool excluded(const DfsOptions& o, const std::string& col) {
  return std::find(o.exclude.begin(), o.exclude.end(), col) != o.exclude.end();
}

}  // namespace dfs_detail

/// Deterministic feature names for `entity_table`: root columns, then per
/// link path COUNT and per-column aggregates.
inline std::vector<std::string> dfs_feature_names(const Store& s, std::size_t entity_table, const DfsOptions& o) {
  using namespace dfs_detail;
  if (o.depth < 1 || o.depth > 2) throw InputError("DFS depth must be 1 or 2");
  const auto& g = s.graph;
  std::vector<std::string> names;
  const auto& root = g.meta(entity_table);
  for (const auto& c : root.columns)
    if ((usable(c.stype) || c.stype == SemanticType::kTimestamp) && !excluded(o, c.name))
      names.push_back(root.name + "." + c.name);
  for (const auto& p : paths(s, entity_table, o.depth)) {
    names.push_back(p.name + ".count");
    for (const auto& c : g.meta(p.table).columns) {
      if (!usable(c.stype) || (p.table == entity_table && excluded(o, c.name))) continue;
      if (c.stype == SemanticType::kNumerical)
        for (const char* agg : {"sum", "mean", "min", "max"}) names.push_back(p.name + "." + c.name + "." + agg);
      else
        for (const char* agg : {"count_distinct", "mode_frequency"}) names.push_back(p.name + "." + c.name + "." + agg);
    }
  }
  return names;
}

/// Flattens the entity's time-filtered neighborhood (rows with timestamp <=
/// anchor) into fixed column-wise aggregates.
inline FlatRow dfs_flatten(const Store& s, std::size_t entity_table, std::uint32_t entity, Timestamp anchor,
                           const DfsOptions& o) {
  using namespace dfs_detail;
  if (o.depth < 1 || o.depth > 2) throw InputError("DFS depth must be 1 or 2");
  const auto& g = s.graph;
  if (entity_table >= g.num_tables() || entity >= g.table(entity_table).rows)
    throw InputError("unknown entity " + std::to_string(entity));
  FlatRow out{entity, anchor, {}};
  const auto& root = g.table(entity_table);
  for (std::size_t c = 0; c < root.columns.size(); ++c) {
    const auto& col = root.columns[c];
    if (!(usable(col.stype) || col.stype == SemanticType::kTimestamp) || excluded(o, col.name)) continue;
    if (col.is_null(entity)) {
      out.values.push_back(std::nullopt);
    } else if (col.stype == SemanticType::kNumerical) {
      out.values.push_back(col.numbers[entity]);
    } else if (col.stype == SemanticType::kCategorical) {
      out.values.push_back(static_cast<double>(col.codes[entity]));
    } else {
      const Timestamp t = col.times[entity];
      if (t == kPosInf || t == kNegInf || t > anchor) out.values.push_back(std::nullopt);
      else out.values.push_back(static_cast<double>(anchor - t) / static_cast<double>(kMsPerDay));
    }
  }
  std::vector<std::uint32_t> cur, next, buf;
  for (const auto& p : paths(s, entity_table, o.depth)) {
    cur.assign(1, entity);
    for (auto e : p.edges) {
      next.clear();
      for (auto r : cur) {
        buf.clear();
        s.index.neighbors_before(r, e, anchor, std::numeric_limits<std::size_t>::max(), buf);
        next.insert(next.end(), buf.begin(), buf.end());
      }
      std::swap(cur, next);
    }
    out.values.push_back(static_cast<double>(cur.size()));
    const auto& t = g.table(p.table);
    for (const auto& col : t.columns) {
      if (!usable(col.stype) || (p.table == entity_table && excluded(o, col.name))) continue;
      if (col.stype == SemanticType::kNumerical) {
        double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::size_t n = 0;
        for (auto r : cur)
          if (!col.is_null(r)) {
            const double v = col.numbers[r];
            sum += v, lo = std::min(lo, v), hi = std::max(hi, v), ++n;
          }
        if (n == 0) {
          out.values.insert(out.values.end(), 4, std::nullopt);
        } else {
          out.values.insert(out.values.end(), {sum, sum / static_cast<double>(n), lo, hi});
        }
      } else {
        std::unordered_map<std::uint32_t, std::size_t> freq;
        for (auto r : cur)
          if (!col.is_null(r)) ++freq[col.codes[r]];
        if (freq.empty()) {
          out.values.insert(out.values.end(), 2, std::nullopt);
        } else {
          std::size_t mode = 0;
          for (const auto& [code, n] : freq) mode = std::max(mode, n);
          out.values.push_back(static_cast<double>(freq.size()));
          out.values.push_back(static_cast<double>(mode));
        }
      }
    }
  }
  return out;
}

/// Flat table as CSV: entity, anchor_time, then one column per feature name;
/// nulls are empty cells.
inline void write_flat_csv(std::ostream& out, const std::vector<std::string>& names, const std::vector<FlatRow>& rows) {
  out << "entity,anchor_time";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << r.entity << ',' << format_timestamp(r.anchor);
    for (const auto& v : r.values) {
      out << ',';
      if (v) out << pql::format_number(*v);
    }
    out << '\n';
  }
}

}  // namespace relicl::baseline
