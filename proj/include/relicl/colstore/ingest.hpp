#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "relicl/colstore/column.hpp"
#include "relicl/colstore/csv.hpp"
#include "relicl/core/error.hpp"
#include "relicl/core/time.hpp"
#include "relicl/relgraph/graph.hpp"
#include "relicl/relgraph/infer.hpp"
#include "relicl/relgraph/raw.hpp"

namespace relicl {

struct ColumnReport {
  std::string name;
  std::size_t nulls = 0;
  std::size_t warnings = 0;
};

struct TableReport {
  std::string name;
  std::size_t rows = 0;
  std::vector<ColumnReport> columns;
};

struct LinkReport {
  std::string src_table;
  std::string fkey_column;
  std::string dst_table;
  std::size_t edges = 0;
  std::size_t dangling = 0;
};

/// Row counts, null counts and dangling foreign keys of one ingestion.
struct IngestReport {
  std::vector<TableReport> tables;
  std::vector<LinkReport> links;

  nlohmann::json to_json() const {
    nlohmann::json jt = nlohmann::json::array();
    for (const auto& t : tables) {
      nlohmann::json cols = nlohmann::json::array();
      for (const auto& c : t.columns) cols.push_back({{"name", c.name}, {"nulls", c.nulls}, {"warnings", c.warnings}});
      jt.push_back({{"name", t.name}, {"rows", t.rows}, {"columns", cols}});
    }
    nlohmann::json jl = nlohmann::json::array();
    for (const auto& l : links)
      jl.push_back({{"src_table", l.src_table},
                    {"fkey", l.fkey_column},
                    {"dst_table", l.dst_table},
                    {"edges", l.edges},
                    {"dangling", l.dangling}});
    return {{"tables", jt}, {"links", jl}};
  }
};

struct IngestOptions {
  /// Fraction of non-empty timestamp cells allowed to fail parsing before
  /// the whole column is rejected.
  double max_timestamp_failure_ratio = 0.1;
};

namespace ingest_detail {

inline std::optional<double> parse_number(std::string_view s) {
  s = infer_detail::trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || std::isnan(v)) return std::nullopt;
  return v;
}

inline std::optional<Timestamp> parse_time_cell(std::string_view s) {
  s = infer_detail::trim(s);
  if (auto t = parse_timestamp(s)) return t;
  Timestamp v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc{} && p == s.data() + s.size() && !s.empty()) return v;
  return std::nullopt;
}

}  // namespace ingest_detail

/// Converts one raw table to typed columns following `meta`. Malformed
/// numerical/timestamp cells (including empty ones) become nulls and count as
/// warnings; empty dictionary cells are plain nulls.
inline TableData encode_table(const RawTable& raw, const TableMeta& meta, TableReport* report = nullptr,
                              const IngestOptions& options = {}) {
  TableData data;
  data.rows = raw.rows();
  TableReport local;
  local.name = meta.name;
  local.rows = data.rows;
  for (const auto& cm : meta.columns) {
    const auto* values = raw.find(cm.name);
    if (!values) throw CsvError("table '" + meta.name + "' is missing declared column '" + cm.name + "'");
    if (values->size() != data.rows)
      throw SchemaError("row count mismatch in '" + meta.name + "." + cm.name + "'");
    ColumnReport cr{cm.name, 0, 0};
    switch (cm.stype) {
      case SemanticType::kNumerical: {
        std::vector<double> nums(values->size());
        for (std::size_t r = 0; r < values->size(); ++r) {
          auto v = ingest_detail::parse_number((*values)[r]);
          nums[r] = v ? *v : std::nan("");
          if (!v) ++cr.warnings;
        }
        data.columns.push_back(make_numerical_column(cm.name, nums));
        break;
      }
      case SemanticType::kTimestamp: {
        std::vector<Timestamp> ts(values->size());
        std::size_t non_empty = 0, failed = 0;
        for (std::size_t r = 0; r < values->size(); ++r) {
          const auto& cell = (*values)[r];
          bool empty = infer_detail::trim(cell).empty();
          if (!empty) ++non_empty;
          auto v = empty ? std::nullopt : ingest_detail::parse_time_cell(cell);
          if (!v && !empty) ++failed;
          if (!v) ++cr.warnings;
          ts[r] = v ? *v : kPosInf;
        }
        if (non_empty > 0 &&
            static_cast<double>(failed) > options.max_timestamp_failure_ratio * static_cast<double>(non_empty))
          throw CsvError("timestamp column '" + meta.name + "." + cm.name + "': " + std::to_string(failed) + " of " +
                         std::to_string(non_empty) + " values failed to parse");
        data.columns.push_back(make_timestamp_column(cm.name, ts));
        break;
      }
      default: {
        std::vector<std::optional<std::string>> cells(values->size());
        for (std::size_t r = 0; r < values->size(); ++r) {
          auto t = infer_detail::trim((*values)[r]);
          if (!t.empty()) cells[r] = std::string(cm.stype == SemanticType::kText ? std::string_view((*values)[r]) : t);
        }
        data.columns.push_back(make_dictionary_column(cm.name, cm.stype, cells));
      }
    }
    cr.nulls = 0;
    const auto& col = data.columns.back();
    for (std::size_t r = 0; r < data.rows; ++r) cr.nulls += col.is_null(r);
    local.columns.push_back(cr);
  }
  if (report) *report = std::move(local);
  return data;
}

/// Reads one CSV file and encodes it with `meta`.
inline TableData ingest_csv(const std::string& path, const TableMeta& meta, TableReport* report = nullptr,
                            const IngestOptions& options = {}) {
  return encode_table(read_csv(path, meta.name), meta, report, options);
}

/// Encodes raw tables (matched to schema tables by name) and builds the graph.
inline TemporalGraph build_graph(const Schema& schema, std::span<const RawTable> raw, IngestReport* report = nullptr,
                                 const IngestOptions& options = {}) {
  std::vector<TableData> data;
  IngestReport rep;
  for (const auto& meta : schema.tables) {
    auto it = std::find_if(raw.begin(), raw.end(), [&](const RawTable& r) { return r.name == meta.name; });
    if (it == raw.end()) throw SchemaError("no data for table '" + meta.name + "'");
    TableReport tr;
    data.push_back(encode_table(*it, meta, &tr, options));
    rep.tables.push_back(std::move(tr));
  }
  auto graph = build_graph(schema, std::move(data));
  if (report) *report = std::move(rep);
  return graph;
}

/// All `*.csv` files of a directory, table name = file stem, sorted by name.
inline std::vector<RawTable> read_csv_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw CsvError("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw CsvError("no CSV files in '" + dir + "'");
  std::vector<RawTable> out;
  for (const auto& f : files) out.push_back(read_csv(f.string(), f.stem().string()));
  return out;
}

/// Renders the source columns of a graph back to raw tables (derived columns
/// are omitted so the export re-infers to the same schema).
inline std::vector<RawTable> export_raw(const TemporalGraph& graph) {
  std::vector<RawTable> out;
  for (std::size_t t = 0; t < graph.num_tables(); ++t) {
    const auto& meta = graph.meta(t);
    const auto& data = graph.table(t);
    RawTable raw;
    raw.name = meta.name;
    for (std::size_t c = 0; c < meta.columns.size(); ++c) {
      raw.column_names.push_back(meta.columns[c].name);
      std::vector<std::string> vals(data.rows);
      for (std::size_t r = 0; r < data.rows; ++r) vals[r] = data.columns[c].render(r);
      raw.columns.push_back(std::move(vals));
    }
    out.push_back(std::move(raw));
  }
  return out;
}

inline void write_raw_csv(const RawTable& raw, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CsvError("cannot write '" + path + "'");
  std::vector<std::vector<std::string>> rows(raw.rows());
  for (std::size_t r = 0; r < raw.rows(); ++r)
    for (const auto& col : raw.columns) rows[r].push_back(col[r]);
  write_csv(out, raw.column_names, rows);
}

}  // namespace relicl
