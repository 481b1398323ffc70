#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "relicl/core/error.hpp"

namespace relicl {

enum class SemanticType : std::uint8_t { kIdentifier, kNumerical, kCategorical, kText, kTimestamp };

inline std::string_view to_string(SemanticType t) {
  switch (t) {
    case SemanticType::kIdentifier: return "identifier";
    case SemanticType::kNumerical: return "numerical";
    case SemanticType::kCategorical: return "categorical";
    case SemanticType::kText: return "text";
    case SemanticType::kTimestamp: return "timestamp";
  }
  return "?";
}

inline SemanticType parse_stype(std::string_view s) {
  if (s == "identifier" || s == "id") return SemanticType::kIdentifier;
  if (s == "numerical") return SemanticType::kNumerical;
  if (s == "categorical") return SemanticType::kCategorical;
  if (s == "text") return SemanticType::kText;
  if (s == "timestamp") return SemanticType::kTimestamp;
  throw SchemaError("unknown semantic type '" + std::string(s) + "'");
}

struct ColumnMeta {
  std::string name;
  SemanticType stype = SemanticType::kNumerical;

  bool operator==(const ColumnMeta&) const = default;
};

struct DerivedColumn {
  std::string name;
  std::string expr;

  bool operator==(const DerivedColumn&) const = default;
};

struct TableMeta {
  std::string name;
  std::vector<ColumnMeta> columns;
  std::optional<std::string> primary_key;
  std::optional<std::string> time_column;
  std::vector<DerivedColumn> derived_columns;

  const ColumnMeta* find(std::string_view column) const {
    for (const auto& c : columns)
      if (c.name == column) return &c;
    return nullptr;
  }
  ColumnMeta* find(std::string_view column) {
    for (auto& c : columns)
      if (c.name == column) return &c;
    return nullptr;
  }
  bool has_derived(std::string_view column) const {
    return std::any_of(derived_columns.begin(), derived_columns.end(),
                       [&](const DerivedColumn& d) { return d.name == column; });
  }

  bool operator==(const TableMeta&) const = default;
};

/// A primary/foreign-key link: rows of `src_table` reference rows of
/// `dst_table` through `fkey_column`.
struct LinkMeta {
  std::string src_table;
  std::string fkey_column;
  std::string dst_table;

  bool operator==(const LinkMeta&) const = default;
};

struct Schema {
  std::vector<TableMeta> tables;
  std::vector<LinkMeta> links;

  std::optional<std::size_t> table_index(std::string_view name) const {
    for (std::size_t i = 0; i < tables.size(); ++i)
      if (tables[i].name == name) return i;
    return std::nullopt;
  }
  const TableMeta& table(std::string_view name) const {
    auto i = table_index(name);
    if (!i) throw SchemaError("unknown table '" + std::string(name) + "'");
    return tables[*i];
  }
  TableMeta& table(std::string_view name) {
    auto i = table_index(name);
    if (!i) throw SchemaError("unknown table '" + std::string(name) + "'");
    return tables[*i];
  }

  bool operator==(const Schema&) const = default;
};

inline void validate_derived_expression(const TableMeta& table, const DerivedColumn& column);

/// Checks every structural invariant of a schema. Throws SchemaError.
inline void validate(const Schema& schema) {
  std::set<std::string> names;
  for (const auto& t : schema.tables) {
    if (t.name.empty()) throw SchemaError("table with empty name");
    if (!names.insert(t.name).second) throw SchemaError("duplicate table name '" + t.name + "'");
    std::set<std::string> cols;
    for (const auto& c : t.columns) {
      if (c.name.empty()) throw SchemaError("table '" + t.name + "' has a column with an empty name");
      if (!cols.insert(c.name).second)
        throw SchemaError("table '" + t.name + "' has duplicate column '" + c.name + "'");
    }
    if (t.primary_key) {
      const auto* pk = t.find(*t.primary_key);
      if (!pk) throw SchemaError("primary key '" + *t.primary_key + "' is not a column of '" + t.name + "'");
      if (pk->stype != SemanticType::kIdentifier)
        throw SchemaError("primary key '" + t.name + "." + pk->name + "' must have identifier type");
    }
    if (t.time_column) {
      const auto* tc = t.find(*t.time_column);
      if (!tc) throw SchemaError("time column '" + *t.time_column + "' is not a column of '" + t.name + "'");
      if (tc->stype != SemanticType::kTimestamp)
        throw SchemaError("time column '" + t.name + "." + tc->name + "' must have timestamp type");
    }
    for (const auto& d : t.derived_columns) {
      if (!cols.insert(d.name).second)
        throw SchemaError("derived column '" + t.name + "." + d.name + "' collides with an existing column");
      validate_derived_expression(t, d);
    }
  }
  std::set<std::pair<std::string, std::string>> fkeys;
  for (const auto& l : schema.links) {
    auto si = schema.table_index(l.src_table);
    auto di = schema.table_index(l.dst_table);
    if (!si) throw SchemaError("link source table '" + l.src_table + "' does not exist");
    if (!di) throw SchemaError("link destination table '" + l.dst_table + "' does not exist");
    const auto& src = schema.tables[*si];
    const auto& dst = schema.tables[*di];
    if (!dst.primary_key) throw SchemaError("link target '" + dst.name + "' has no primary key");
    const auto* fk = src.find(l.fkey_column);
    if (!fk) throw SchemaError("foreign key '" + l.src_table + "." + l.fkey_column + "' does not exist");
    if (fk->stype != SemanticType::kIdentifier)
      throw SchemaError("foreign key '" + l.src_table + "." + l.fkey_column + "' must have identifier type");
    if (!fkeys.insert({l.src_table, l.fkey_column}).second)
      throw SchemaError("foreign key '" + l.src_table + "." + l.fkey_column + "' is linked twice");
  }
}

// JSON document layout (stable field names):
//   { "version": 1,
//     "tables": [ { "name", "columns": [ {"name", "stype"} ], "primary_key",
//                   "time_column", "derived_columns": [ {"name", "expr"} ] } ],
//     "links": [ { "src_table", "fkey", "dst_table" } ] }

inline nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& t : schema.tables) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : t.columns) cols.push_back({{"name", c.name}, {"stype", to_string(c.stype)}});
    nlohmann::json derived = nlohmann::json::array();
    for (const auto& d : t.derived_columns) derived.push_back({{"name", d.name}, {"expr", d.expr}});
    tables.push_back({{"name", t.name},
                      {"columns", cols},
                      {"primary_key", t.primary_key ? nlohmann::json(*t.primary_key) : nlohmann::json()},
                      {"time_column", t.time_column ? nlohmann::json(*t.time_column) : nlohmann::json()},
                      {"derived_columns", derived}});
  }
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : schema.links)
    links.push_back({{"src_table", l.src_table}, {"fkey", l.fkey_column}, {"dst_table", l.dst_table}});
  return {{"version", 1}, {"tables", tables}, {"links", links}};
}

inline Schema schema_from_json(const nlohmann::json& j) {
  try {
    Schema s;
    if (j.value("version", 1) != 1) throw SchemaError("unsupported schema document version");
    for (const auto& jt : j.at("tables")) {
      TableMeta t;
      t.name = jt.at("name").get<std::string>();
      for (const auto& jc : jt.at("columns"))
        t.columns.push_back({jc.at("name").get<std::string>(), parse_stype(jc.at("stype").get<std::string>())});
      if (jt.contains("primary_key") && !jt["primary_key"].is_null())
        t.primary_key = jt["primary_key"].get<std::string>();
      if (jt.contains("time_column") && !jt["time_column"].is_null())
        t.time_column = jt["time_column"].get<std::string>();
      if (jt.contains("derived_columns"))
        for (const auto& jd : jt["derived_columns"])
          t.derived_columns.push_back({jd.at("name").get<std::string>(), jd.at("expr").get<std::string>()});
      s.tables.push_back(std::move(t));
    }
    if (j.contains("links"))
      for (const auto& jl : j["links"])
        s.links.push_back({jl.at("src_table").get<std::string>(), jl.at("fkey").get<std::string>(),
                           jl.at("dst_table").get<std::string>()});
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema document: ") + e.what());
  }
}

}  // namespace relicl

#include "relicl/relgraph/derived.hpp"
