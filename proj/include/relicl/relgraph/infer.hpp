#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include <json.hpp>

#include "relicl/core/error.hpp"
#include "relicl/core/time.hpp"
#include "relicl/relgraph/raw.hpp"
#include "relicl/relgraph/schema.hpp"

namespace relicl {

namespace infer_detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool parses_as_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(v);
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

/// "users" -> "user", "categories" -> "category".
inline std::string singular(std::string_view table) {
  std::string t = lower(table);
  if (ends_with(t, "ies") && t.size() > 3) return t.substr(0, t.size() - 3) + "y";
  if (ends_with(t, "s") && !ends_with(t, "ss") && t.size() > 1) return t.substr(0, t.size() - 1);
  return t;
}

inline bool is_pk_name(std::string_view table, std::string_view column) {
  std::string c = lower(column);
  if (c == "id") return true;
  for (const std::string& base : {lower(table), singular(table)}) {
    if (c == base + "id" || c == base + "_id") return true;
  }
  return false;
}

inline bool is_identifier_name(std::string_view table, std::string_view column) {
  std::string c = lower(column);
  return c == "id" || ends_with(c, "_id") || is_pk_name(table, column);
}

inline std::size_t word_count(std::string_view s) {
  std::size_t words = 0;
  bool in_word = false;
  for (char ch : s) {
    bool sp = std::isspace(static_cast<unsigned char>(ch));
    if (!sp && !in_word) ++words;
    in_word = !sp;
  }
  return words;
}

}  // namespace infer_detail

/// Rows inspected per column during type inference.
inline constexpr std::size_t kInferenceSampleRows = 10000;

/// Semantic type of one column from its name and sampled values.
inline SemanticType infer_stype(std::string_view table, std::string_view column,
                                const std::vector<std::string>& values) {
  using namespace infer_detail;
  std::vector<std::string_view> sample;
  for (std::size_t i = 0; i < values.size() && sample.size() < kInferenceSampleRows; ++i)
    if (!trim(values[i]).empty()) sample.push_back(trim(values[i]));
  if (sample.empty())
    throw SchemaError("column '" + std::string(table) + "." + std::string(column) +
                      "' has no values that parse to a supported type");
  if (is_identifier_name(table, column)) return SemanticType::kIdentifier;
  if (std::all_of(sample.begin(), sample.end(), [](std::string_view v) { return parse_timestamp(v).has_value(); }))
    return SemanticType::kTimestamp;
  if (std::all_of(sample.begin(), sample.end(), parses_as_number)) return SemanticType::kNumerical;
  std::unordered_set<std::string_view> distinct(sample.begin(), sample.end());
  double words = 0.0;
  for (auto v : sample) words += static_cast<double>(word_count(v));
  words /= static_cast<double>(sample.size());
  if (words >= 3.0 && distinct.size() * 2 > sample.size()) return SemanticType::kText;
  if (distinct.size() <= 64 || distinct.size() * 4 <= sample.size()) return SemanticType::kCategorical;
  return SemanticType::kText;
}

/// Infers keys, types, time columns and links. Rules, in order:
///  1. column types from names and values (see infer_stype);
///  2. primary key: first identifier column that is unique, non-null and
///     named "id", "<table>id" or "<table>_id" (table name or its singular);
///  3. time column: first timestamp column whose name contains "time" or
///     "date", otherwise the first timestamp column;
///  4. links: a non-key identifier column named like another table's primary
///     key whose distinct values are a subset of that key's values.
inline Schema infer_schema(std::span<const RawTable> tables) {
  using namespace infer_detail;
  if (tables.empty()) throw SchemaError("no tables to infer a schema from");
  Schema schema;
  std::set<std::string> names;
  for (const auto& raw : tables) {
    if (!names.insert(raw.name).second) throw SchemaError("duplicate table name '" + raw.name + "'");
    if (raw.column_names.size() != raw.columns.size())
      throw SchemaError("table '" + raw.name + "' has mismatched column names and data");
    TableMeta t;
    t.name = raw.name;
    std::set<std::string> cols;
    for (std::size_t c = 0; c < raw.column_names.size(); ++c) {
      const auto& cname = raw.column_names[c];
      if (cname.empty()) throw SchemaError("table '" + raw.name + "' has a column with an empty name");
      if (!cols.insert(cname).second) throw SchemaError("table '" + raw.name + "' has duplicate column '" + cname + "'");
      t.columns.push_back({cname, infer_stype(raw.name, cname, raw.columns[c])});
    }
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
      if (t.columns[c].stype != SemanticType::kIdentifier || !is_pk_name(raw.name, t.columns[c].name)) continue;
      const auto& vals = raw.columns[c];
      std::unordered_set<std::string_view> seen;
      bool ok = true;
      for (const auto& v : vals) {
        if (trim(v).empty() || !seen.insert(trim(v)).second) {
          ok = false;
          break;
        }
      }
      if (ok) {
        t.primary_key = t.columns[c].name;
        break;
      }
    }
    const ColumnMeta* first_ts = nullptr;
    const ColumnMeta* named_ts = nullptr;
    for (const auto& c : t.columns) {
      if (c.stype != SemanticType::kTimestamp) continue;
      if (!first_ts) first_ts = &c;
      std::string l = lower(c.name);
      if (!named_ts && (l.find("time") != std::string::npos || l.find("date") != std::string::npos)) named_ts = &c;
    }
    if (named_ts) t.time_column = named_ts->name;
    else if (first_ts) t.time_column = first_ts->name;
    schema.tables.push_back(std::move(t));
  }
  for (std::size_t a = 0; a < tables.size(); ++a) {
    const auto& ta = schema.tables[a];
    for (std::size_t c = 0; c < ta.columns.size(); ++c) {
      const auto& col = ta.columns[c];
      if (col.stype != SemanticType::kIdentifier || (ta.primary_key && *ta.primary_key == col.name)) continue;
      for (std::size_t b = 0; b < tables.size(); ++b) {
        const auto& tb = schema.tables[b];
        if (b == a || !tb.primary_key || *tb.primary_key != col.name) continue;
        const auto* pk_vals = tables[b].find(*tb.primary_key);
        std::unordered_set<std::string_view> pk(pk_vals->size());
        for (const auto& v : *pk_vals) pk.insert(trim(v));
        bool subset = true;
        for (const auto& v : tables[a].columns[c]) {
          auto tv = trim(v);
          if (!tv.empty() && !pk.count(tv)) {
            subset = false;
            break;
          }
        }
        if (subset) {
          schema.links.push_back({ta.name, col.name, tb.name});
          break;
        }
      }
    }
  }
  validate(schema);
  return schema;
}

// Manual schema edits.

struct SetPrimaryKey {
  std::string table;
  std::string column;
};
struct SetStype {
  std::string table;
  std::string column;
  SemanticType stype;
};
struct SetTimeColumn {
  std::string table;
  std::optional<std::string> column;
};
struct AddLink {
  std::string src_table;
  std::string fkey_column;
  std::string dst_table;
};
struct RemoveLink {
  std::string src_table;
  std::string fkey_column;
};
struct AddDerivedColumn {
  std::string table;
  std::string name;
  std::string expr;
};

using SchemaEdit = std::variant<SetPrimaryKey, SetStype, SetTimeColumn, AddLink, RemoveLink, AddDerivedColumn>;

inline ColumnMeta& require_column(Schema& schema, const std::string& table, const std::string& column) {
  auto& t = schema.table(table);
  auto* c = t.find(column);
  if (!c) throw SchemaError("unknown column '" + table + "." + column + "'");
  return *c;
}

/// Applies edits in order and revalidates the result.
inline Schema override_schema(Schema schema, std::span<const SchemaEdit> edits) {
  for (const auto& edit : edits) {
    std::visit(
        [&](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, SetPrimaryKey>) {
            require_column(schema, e.table, e.column).stype = SemanticType::kIdentifier;
            schema.table(e.table).primary_key = e.column;
          } else if constexpr (std::is_same_v<E, SetStype>) {
            require_column(schema, e.table, e.column).stype = e.stype;
          } else if constexpr (std::is_same_v<E, SetTimeColumn>) {
            if (e.column) require_column(schema, e.table, *e.column);
            schema.table(e.table).time_column = e.column;
          } else if constexpr (std::is_same_v<E, AddLink>) {
            const auto& dst = schema.table(e.dst_table);
            if (!dst.primary_key)
              throw SchemaError("cannot link " + e.src_table + "." + e.fkey_column + " to '" + e.dst_table +
                                "': table has no primary key");
            require_column(schema, e.src_table, e.fkey_column).stype = SemanticType::kIdentifier;
            auto& links = schema.links;
            links.erase(std::remove_if(links.begin(), links.end(),
                                       [&](const LinkMeta& l) {
                                         return l.src_table == e.src_table && l.fkey_column == e.fkey_column;
                                       }),
                        links.end());
            links.push_back({e.src_table, e.fkey_column, e.dst_table});
          } else if constexpr (std::is_same_v<E, RemoveLink>) {
            auto& links = schema.links;
            auto before = links.size();
            links.erase(std::remove_if(links.begin(), links.end(),
                                       [&](const LinkMeta& l) {
                                         return l.src_table == e.src_table && l.fkey_column == e.fkey_column;
                                       }),
                        links.end());
            if (links.size() == before)
              throw SchemaError("no link on " + e.src_table + "." + e.fkey_column + " to remove");
          } else {
            auto& t = schema.table(e.table);
            t.derived_columns.push_back({e.name, e.expr});
            validate_derived_expression(t, t.derived_columns.back());
          }
        },
        edit);
  }
  validate(schema);
  return schema;
}

/// Edit list document: [{"op": "set_pkey"|"set_stype"|"set_time_column"|
/// "add_link"|"remove_link"|"add_derived_column", ...}].
inline std::vector<SchemaEdit> schema_edits_from_json(const nlohmann::json& j) {
  std::vector<SchemaEdit> edits;
  try {
    for (const auto& e : j) {
      auto op = e.at("op").get<std::string>();
      if (op == "set_pkey") {
        edits.push_back(SetPrimaryKey{e.at("table"), e.at("column")});
      } else if (op == "set_stype") {
        edits.push_back(SetStype{e.at("table"), e.at("column"), parse_stype(e.at("stype").get<std::string>())});
      } else if (op == "set_time_column") {
        std::optional<std::string> col;
        if (e.contains("column") && !e["column"].is_null()) col = e["column"].get<std::string>();
        edits.push_back(SetTimeColumn{e.at("table"), col});
      } else if (op == "add_link") {
        edits.push_back(AddLink{e.at("src_table"), e.at("fkey"), e.at("dst_table")});
      } else if (op == "remove_link") {
        edits.push_back(RemoveLink{e.at("src_table"), e.at("fkey")});
      } else if (op == "add_derived_column") {
        edits.push_back(AddDerivedColumn{e.at("table"), e.at("name"), e.at("expr")});
      } else {
        throw SchemaError("unknown schema edit op '" + op + "'");
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("malformed schema edit list: ") + ex.what());
  }
  return edits;
}

}  // namespace relicl
