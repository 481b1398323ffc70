#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relicl/colstore/column.hpp"
#include "relicl/core/error.hpp"
#include "relicl/core/time.hpp"
#include "relicl/relgraph/derived.hpp"
#include "relicl/relgraph/schema.hpp"

namespace relicl {

/// A node is one record: (table index, row index).
struct NodeId {
  std::uint32_t table = 0;
  std::uint32_t row = 0;

  auto operator<=>(const NodeId&) const = default;
};

/// Relational database viewed as a temporal heterogeneous graph. Immutable
/// once constructed; safe to share across reader threads.
class TemporalGraph {
 public:
  TemporalGraph() = default;

  /// Takes already-validated parts; use build_graph() for checked construction.
  TemporalGraph(Schema schema, std::vector<TableData> tables) : schema_(std::move(schema)), tables_(std::move(tables)) {
    std::uint64_t offset = 0;
    for (std::size_t t = 0; t < tables_.size(); ++t) {
      offsets_.push_back(offset);
      offset += tables_[t].rows;
      const auto& meta = schema_.tables[t];
      time_cols_.push_back(meta.time_column ? tables_[t].column_index(*meta.time_column) : std::nullopt);
      pk_cols_.push_back(meta.primary_key ? tables_[t].column_index(*meta.primary_key) : std::nullopt);
      pk_index_.push_back(std::make_shared<LazyIndex>());
    }
    offsets_.push_back(offset);
  }

  const Schema& schema() const noexcept { return schema_; }
  std::size_t num_tables() const noexcept { return tables_.size(); }
  const TableData& table(std::size_t t) const { return tables_.at(t); }
  const TableMeta& meta(std::size_t t) const { return schema_.tables.at(t); }
  const std::vector<TableData>& tables() const noexcept { return tables_; }

  std::size_t table_index(std::string_view name) const {
    auto i = schema_.table_index(name);
    if (!i) throw SchemaError("unknown table '" + std::string(name) + "'");
    return *i;
  }

  std::uint64_t num_nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.back(); }
  std::uint64_t global_id(NodeId n) const { return offsets_[n.table] + n.row; }
  NodeId node(std::uint64_t gid) const {
    std::size_t t = 0;
    while (t + 1 < offsets_.size() && offsets_[t + 1] <= gid) ++t;
    return {static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(gid - offsets_[t])};
  }

  bool has_time(std::size_t t) const { return time_cols_[t].has_value(); }
  std::optional<std::size_t> time_column(std::size_t t) const { return time_cols_[t]; }
  std::optional<std::size_t> pk_column(std::size_t t) const { return pk_cols_[t]; }

  /// Record timestamp; kNegInf for tables without time column, kPosInf for a
  /// null time cell (never visible).
  Timestamp node_time(std::size_t t, std::size_t row) const {
    const auto& tc = time_cols_[t];
    return tc ? tables_[t].columns[*tc].times[row] : kNegInf;
  }
  Timestamp node_time(NodeId n) const { return node_time(n.table, n.row); }

  /// Row whose primary key renders as `key`.
  std::optional<std::uint32_t> find_row(std::size_t t, std::string_view key) const {
    if (!pk_cols_[t]) throw SchemaError("table '" + schema_.tables[t].name + "' has no primary key");
    const auto& idx = *pk_index_[t];
    std::call_once(idx.once, [&] {
      const auto& col = tables_[t].columns[*pk_cols_[t]];
      idx.map.reserve(tables_[t].rows);
      for (std::uint32_t r = 0; r < tables_[t].rows; ++r) idx.map.emplace(std::string(col.str(r)), r);
    });
    auto it = idx.map.find(std::string(key));
    if (it == idx.map.end()) return std::nullopt;
    return it->second;
  }

  std::string_view pk_string(std::size_t t, std::size_t row) const {
    if (!pk_cols_[t]) throw SchemaError("table '" + schema_.tables[t].name + "' has no primary key");
    return tables_[t].columns[*pk_cols_[t]].str(row);
  }

  /// Smallest and largest finite record timestamp over all timed tables.
  std::pair<Timestamp, Timestamp> time_range() const {
    Timestamp lo = kPosInf, hi = kNegInf;
    for (std::size_t t = 0; t < tables_.size(); ++t) {
      if (!time_cols_[t]) continue;
      for (auto v : tables_[t].columns[*time_cols_[t]].times) {
        if (v == kPosInf) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    return {lo, hi};
  }

 private:
  struct LazyIndex {
    mutable std::once_flag once;
    mutable std::unordered_map<std::string, std::uint32_t> map;
  };

  Schema schema_;
  std::vector<TableData> tables_;
  std::vector<std::uint64_t> offsets_;
  std::vector<std::optional<std::size_t>> time_cols_;
  std::vector<std::optional<std::size_t>> pk_cols_;
  std::vector<std::shared_ptr<LazyIndex>> pk_index_;
};

/// Checks data against the schema, materializes derived columns and returns
/// the graph. `tables` holds the source columns of each schema table, in
/// schema order.
inline TemporalGraph build_graph(const Schema& schema, std::vector<TableData> tables) {
  validate(schema);
  if (tables.size() != schema.tables.size())
    throw SchemaError("expected data for " + std::to_string(schema.tables.size()) + " tables, got " +
                      std::to_string(tables.size()));
  for (std::size_t t = 0; t < tables.size(); ++t) {
    const auto& meta = schema.tables[t];
    auto& data = tables[t];
    if (data.columns.size() != meta.columns.size())
      throw SchemaError("table '" + meta.name + "' has " + std::to_string(data.columns.size()) + " columns, schema declares " +
                        std::to_string(meta.columns.size()));
    for (std::size_t c = 0; c < meta.columns.size(); ++c) {
      const auto& col = data.columns[c];
      if (col.name != meta.columns[c].name || col.stype != meta.columns[c].stype)
        throw SchemaError("column " + std::to_string(c) + " of '" + meta.name + "' does not match the schema ('" +
                          col.name + "')");
      if (col.size() != data.rows)
        throw SchemaError("row count mismatch in '" + meta.name + "." + col.name + "': " + std::to_string(col.size()) +
                          " values, table has " + std::to_string(data.rows) + " rows");
    }
    if (meta.primary_key) {
      const auto& pk = *data.find(*meta.primary_key);
      std::vector<bool> seen(pk.dict.size(), false);
      for (std::size_t r = 0; r < data.rows; ++r) {
        if (pk.is_null(r))
          throw SchemaError("primary key '" + meta.name + "." + pk.name + "' has a null at row " + std::to_string(r));
        if (seen[pk.codes[r]])
          throw SchemaError("primary key '" + meta.name + "." + pk.name + "' has duplicate value '" +
                            std::string(pk.str(r)) + "'");
        seen[pk.codes[r]] = true;
      }
    }
    for (const auto& d : meta.derived_columns) {
      auto expr = DerivedExpr::parse(d.expr);
      std::vector<const Column*> refs;
      auto names = expr.columns();
      for (const auto& n : names) refs.push_back(data.find(n));
      std::vector<double> values(data.rows);
      for (std::size_t r = 0; r < data.rows; ++r) {
        values[r] = expr.eval([&](const std::string& name) {
          for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return refs[i]->is_null(r) ? std::nan("") : refs[i]->numbers[r];
          return std::nan("");
        });
      }
      data.columns.push_back(make_numerical_column(d.name, values));
    }
  }
  return TemporalGraph(schema, std::move(tables));
}

}  // namespace relicl
