#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "relicl/pql/lexer.hpp"

namespace relicl::pql {

enum class AggFn { kCount, kSum, kAvg, kMin, kMax };
enum class CmpOp { kEq, kNe, kLt, kLe, kGt, kGe };
enum class TimeUnit { kDays, kHours };

inline std::string_view to_string(AggFn f) {
  constexpr std::string_view names[] = {"COUNT", "SUM", "AVG", "MIN", "MAX"};
  return names[static_cast<int>(f)];
}
inline std::string_view to_string(CmpOp op) {
  constexpr std::string_view names[] = {"=", "!=", "<", "<=", ">", ">="};
  return names[static_cast<int>(op)];
}
inline std::string_view to_string(TimeUnit u) { return u == TimeUnit::kDays ? "DAYS" : "HOURS"; }

template <class T>
bool compare(CmpOp op, const T& a, const T& b) {
  switch (op) {
    case CmpOp::kEq: return a == b;
    case CmpOp::kNe: return a != b;
    case CmpOp::kLt: return a < b;
    case CmpOp::kLe: return a <= b;
    case CmpOp::kGt: return a > b;
    case CmpOp::kGe: return a >= b;
  }
  return false;
}

/// Number or quoted string.
using Literal = std::variant<double, std::string>;

inline std::string format_number(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string format_literal(const Literal& lit) {
  if (const auto* d = std::get_if<double>(&lit)) return format_number(*d);
  std::string out = "'";
  for (char c : std::get<std::string>(lit)) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

// Source positions ride along with the AST for error reporting but never take
// part in equality: two queries that differ only in layout are the same query.
struct SourceSpan : Span {
  bool operator==(const SourceSpan&) const { return true; }
};

struct ColumnRef {
  std::string table;
  std::string column;
  SourceSpan span;

  bool operator==(const ColumnRef&) const = default;
};

struct Predicate {
  std::string column;
  CmpOp op = CmpOp::kEq;
  Literal value;
  SourceSpan span;

  bool operator==(const Predicate&) const = default;
};

struct AggExpr {
  AggFn fn = AggFn::kCount;
  std::string table;
  std::optional<std::string> column;  // nullopt is "*"
  std::int64_t start = 0;
  std::int64_t end = 0;
  TimeUnit unit = TimeUnit::kDays;
  std::vector<Predicate> filter;
  SourceSpan span;
  SourceSpan column_span;

  bool operator==(const AggExpr&) const = default;
};

struct Comparison {
  CmpOp op = CmpOp::kEq;
  Literal value;
  SourceSpan span;

  bool operator==(const Comparison&) const = default;
};

struct QueryAst {
  std::variant<AggExpr, ColumnRef> target;
  std::optional<Comparison> comparison;
  ColumnRef entity;

  bool operator==(const QueryAst&) const = default;
  bool is_aggregate() const { return std::holds_alternative<AggExpr>(target); }
};

/// Canonical single-line text: upper-case keywords, single spaces, shortest
/// round-tripping numbers.
inline std::string pretty_print(const QueryAst& ast) {
  std::string out = "PREDICT ";
  if (const auto* agg = std::get_if<AggExpr>(&ast.target)) {
    out += std::string(to_string(agg->fn)) + "(" + agg->table + "." + (agg->column ? *agg->column : "*") + ", " +
           std::to_string(agg->start) + ", " + std::to_string(agg->end) + ", " + std::string(to_string(agg->unit));
    for (std::size_t i = 0; i < agg->filter.size(); ++i) {
      const auto& p = agg->filter[i];
      out += i == 0 ? ", WHERE " : " AND ";
      out += p.column + " " + std::string(to_string(p.op)) + " " + format_literal(p.value);
    }
    out += ")";
  } else {
    const auto& c = std::get<ColumnRef>(ast.target);
    out += c.table + "." + c.column;
  }
  if (ast.comparison) out += " " + std::string(to_string(ast.comparison->op)) + " " + format_literal(ast.comparison->value);
  out += " FOR EACH " + ast.entity.table + "." + ast.entity.column;
  return out;
}

inline nlohmann::json literal_to_json(const Literal& lit) {
  if (const auto* d = std::get_if<double>(&lit)) return *d;
  return std::get<std::string>(lit);
}

inline nlohmann::json ast_to_json(const QueryAst& ast) {
  nlohmann::json j;
  if (const auto* agg = std::get_if<AggExpr>(&ast.target)) {
    nlohmann::json filter = nlohmann::json::array();
    for (const auto& p : agg->filter)
      filter.push_back({{"column", p.column}, {"op", to_string(p.op)}, {"value", literal_to_json(p.value)}});
    j["target"] = {{"kind", "aggregate"},
                   {"fn", to_string(agg->fn)},
                   {"table", agg->table},
                   {"column", agg->column ? nlohmann::json(*agg->column) : nlohmann::json("*")},
                   {"start", agg->start},
                   {"end", agg->end},
                   {"unit", to_string(agg->unit)},
                   {"filter", filter}};
  } else {
    const auto& c = std::get<ColumnRef>(ast.target);
    j["target"] = {{"kind", "column"}, {"table", c.table}, {"column", c.column}};
  }
  if (ast.comparison)
    j["comparison"] = {{"op", to_string(ast.comparison->op)}, {"value", literal_to_json(ast.comparison->value)}};
  j["entity"] = {{"table", ast.entity.table}, {"column", ast.entity.column}};
  return j;
}

}  // namespace relicl::pql
