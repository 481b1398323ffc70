#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "relicl/colstore/adjacency.hpp"
#include "relicl/pql/ast.hpp"
#include "relicl/pql/parser.hpp"
#include "relicl/relgraph/graph.hpp"
#include "relicl/relgraph/infer.hpp"

namespace relicl::pql {

enum class TaskType { kBinary, kMulticlass, kRegression };

inline std::string_view to_string(TaskType t) {
  switch (t) {
    case TaskType::kBinary: return "binary";
    case TaskType::kMulticlass: return "multiclass";
    case TaskType::kRegression: return "regression";
  }
  return "?";
}

/// Name of the catch-all class appended to every multiclass dictionary.
inline constexpr std::string_view kOtherClass = "__other__";

/// WHERE predicate bound to a column index of the aggregated table.
struct BoundPredicate {
  std::size_t column = 0;
  CmpOp op = CmpOp::kEq;
  double number = 0.0;      // numerical and timestamp columns
  std::string text;         // dictionary columns

  /// Null cells never match.
  bool matches(const TableData& table, std::size_t row) const {
    const Column& c = table.columns[column];
    if (c.is_null(row)) return false;
    switch (c.stype) {
      case SemanticType::kNumerical: return compare(op, c.numbers[row], number);
      case SemanticType::kTimestamp: return compare(op, static_cast<double>(c.times[row]), number);
      default: return compare(op, c.str(row), std::string_view(text));
    }
  }
};

struct TemporalLabel {
  AggFn fn = AggFn::kCount;
  std::size_t table = 0;                 // aggregated table
  std::optional<std::size_t> column;     // aggregated column, none for COUNT(*)
  std::size_t edge_type = 0;             // entity table -> aggregated table
  Timestamp start = 0;                   // window (anchor + start, anchor + end] in ms
  Timestamp end = 0;
  std::vector<BoundPredicate> filter;
};

struct StaticLabel {
  std::size_t column = 0;  // column of the entity table
};

struct TaskPlan {
  TaskType type = TaskType::kRegression;
  bool temporal = false;
  std::size_t entity_table = 0;
  std::size_t entity_column = 0;  // primary key
  std::variant<TemporalLabel, StaticLabel> label;
  std::optional<Comparison> comparison;  // binary temporal plans
  std::vector<std::string> classes;      // multiclass: observed values then kOtherClass; binary: false, true
  QueryAst ast;

  const TemporalLabel& temporal_label() const { return std::get<TemporalLabel>(label); }
  const StaticLabel& static_label() const { return std::get<StaticLabel>(label); }
  Timestamp window_length() const { return temporal ? temporal_label().end - temporal_label().start : 0; }

  /// Class index of a raw value; unseen values map to the other class.
  std::size_t class_index(std::string_view value) const {
    auto it = std::find(classes.begin(), classes.end(), value);
    if (it != classes.end()) return static_cast<std::size_t>(it - classes.begin());
    return classes.size() - 1;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"query", pretty_print(ast)},
                     {"task_type", to_string(type)},
                     {"temporal", temporal},
                     {"ast", ast_to_json(ast)}};
    if (!classes.empty()) j["classes"] = classes;
    if (temporal) {
      const auto& t = temporal_label();
      j["window_ms"] = {t.start, t.end};
      j["edge_type"] = t.edge_type;
    }
    return j;
  }
};

namespace compile_detail {

inline bool is_boolean_column(const Column& c) {
  if (c.stype != SemanticType::kCategorical) return false;
  for (std::size_t i = 0; i < c.dict.size(); ++i) {
    auto v = infer_detail::lower(c.dict[i]);
    if (v != "true" && v != "false") return false;
  }
  return c.dict.size() > 0;
}

inline std::size_t column_of(const TemporalGraph& g, std::size_t table, const std::string& name, const Span& span) {
  auto idx = g.table(table).column_index(name);
  if (!idx) throw QueryError("unknown column '" + g.meta(table).name + "." + name + "'", span.column());
  return *idx;
}

inline std::size_t table_of(const TemporalGraph& g, const std::string& name, const Span& span) {
  auto idx = g.schema().table_index(name);
  if (!idx) throw QueryError("unknown table '" + name + "'", span.column());
  return *idx;
}

}  // namespace compile_detail

/// Binds a parsed query to a database. The class dictionary of multiclass
/// plans is read from the stored column, so compilation needs the data and
/// not only the schema.
inline TaskPlan compile(const QueryAst& ast, const TemporalGraph& graph) {
  using namespace compile_detail;
  TaskPlan plan;
  plan.ast = ast;
  plan.entity_table = table_of(graph, ast.entity.table, ast.entity.span);
  plan.entity_column = column_of(graph, plan.entity_table, ast.entity.column, ast.entity.span);
  const auto& emeta = graph.meta(plan.entity_table);
  if (!emeta.primary_key)
    throw QueryError("entity table '" + emeta.name + "' has no primary key", ast.entity.span.column());
  if (*emeta.primary_key != ast.entity.column)
    throw QueryError("entity column must be the primary key '" + emeta.name + "." + *emeta.primary_key + "'",
                     ast.entity.span.column());

  if (const auto* agg = std::get_if<AggExpr>(&ast.target)) {
    plan.temporal = true;
    TemporalLabel label;
    label.fn = agg->fn;
    label.table = table_of(graph, agg->table, agg->column_span);
    if (agg->column) {
      label.column = column_of(graph, label.table, *agg->column, agg->column_span);
      if (agg->fn != AggFn::kCount &&
          graph.table(label.table).columns[*label.column].stype != SemanticType::kNumerical)
        throw QueryError(std::string(to_string(agg->fn)) + " needs a numerical column, '" + agg->table + "." +
                             *agg->column + "' is " +
                             std::string(relicl::to_string(graph.table(label.table).columns[*label.column].stype)),
                         agg->column_span.column());
    } else if (agg->fn != AggFn::kCount) {
      throw QueryError(std::string(to_string(agg->fn)) + " needs a column, not '*'", agg->column_span.column());
    }
    if (!graph.has_time(label.table))
      throw QueryError("aggregated table '" + agg->table + "' has no time column", agg->column_span.column());
    // One hop: a link from the aggregated table into the entity table.
    std::optional<std::size_t> edge;
    const auto& links = graph.schema().links;
    for (std::size_t l = 0; l < links.size() && !edge; ++l)
      if (links[l].src_table == agg->table && links[l].dst_table == emeta.name) edge = 2 * l + 1;
    if (!edge)
      throw QueryError("no link from '" + emeta.name + "' to '" + agg->table + "'", agg->column_span.column());
    label.edge_type = *edge;
    const Timestamp unit = agg->unit == TimeUnit::kDays ? kMsPerDay : kMsPerHour;
    label.start = agg->start * unit;
    label.end = agg->end * unit;
    for (const auto& p : agg->filter) {
      BoundPredicate b;
      b.column = column_of(graph, label.table, p.column, p.span);
      b.op = p.op;
      const Column& col = graph.table(label.table).columns[b.column];
      if (col.stype == SemanticType::kNumerical) {
        if (!std::holds_alternative<double>(p.value))
          throw QueryError("column '" + p.column + "' is numerical; compare it with a number", p.span.column());
        b.number = std::get<double>(p.value);
      } else if (col.stype == SemanticType::kTimestamp) {
        const auto* s = std::get_if<std::string>(&p.value);
        auto t = s ? parse_timestamp(*s) : std::nullopt;
        if (!t) throw QueryError("column '" + p.column + "' is a timestamp; compare it with a date string", p.span.column());
        b.number = static_cast<double>(*t);
      } else {
        if (const auto* d = std::get_if<double>(&p.value)) b.text = format_number(*d);
        else b.text = std::get<std::string>(p.value);
      }
      label.filter.push_back(std::move(b));
    }
    plan.label = std::move(label);
    if (ast.comparison) {
      if (!std::holds_alternative<double>(ast.comparison->value))
        throw QueryError("aggregates compare against numbers", ast.comparison->span.column());
      plan.comparison = ast.comparison;
      plan.type = TaskType::kBinary;
      plan.classes = {"false", "true"};
    } else {
      plan.type = TaskType::kRegression;
    }
    return plan;
  }

  const auto& ref = std::get<ColumnRef>(ast.target);
  if (ast.comparison) throw QueryError("comparisons apply to aggregates only", ast.comparison->span.column());
  const std::size_t t = table_of(graph, ref.table, ref.span);
  if (t != plan.entity_table)
    throw QueryError("static target must be a column of the entity table '" + emeta.name + "'", ref.span.column());
  const std::size_t c = column_of(graph, t, ref.column, ref.span);
  if (c == plan.entity_column) throw QueryError("cannot predict the primary key", ref.span.column());
  plan.label = StaticLabel{c};
  const Column& col = graph.table(t).columns[c];
  switch (col.stype) {
    case SemanticType::kNumerical: plan.type = TaskType::kRegression; break;
    case SemanticType::kCategorical:
      if (is_boolean_column(col)) {
        plan.type = TaskType::kBinary;
        plan.classes = {"false", "true"};
      } else {
        plan.type = TaskType::kMulticlass;
        for (std::size_t i = 0; i < col.dict.size(); ++i) plan.classes.emplace_back(col.dict[i]);
        plan.classes.emplace_back(kOtherClass);
      }
      break;
    case SemanticType::kIdentifier:
      throw QueryError("cannot build a multiclass task over identifier column '" + ref.column + "'", ref.span.column());
    default:
      throw QueryError("unsupported target type " + std::string(relicl::to_string(col.stype)) + " for '" +
                           ref.column + "'",
                       ref.span.column());
  }
  return plan;
}

inline TaskPlan compile(std::string_view query, const TemporalGraph& graph) { return compile(parse(query), graph); }

}  // namespace relicl::pql
