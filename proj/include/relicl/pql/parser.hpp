#pragma once

#include <charconv>
#include <cmath>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "relicl/pql/ast.hpp"
#include "relicl/pql/lexer.hpp"

namespace relicl::pql {

namespace parser_detail {

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : toks_(std::move(tokens)) {}

  QueryAst query() {
    QueryAst ast;
    expect({Tok::kPredict});
    const Token& head = peek();
    if (is_agg(head.kind)) {
      ast.target = aggregate();
      if (is_cmp(peek().kind)) {
        Comparison c;
        c.span = {peek().span};
        c.op = cmp_op(next().kind);
        c.value = literal();
        ast.comparison = std::move(c);
      }
    } else if (head.kind == Tok::kIdent) {
      ast.target = column_ref();
    } else {
      fail({Tok::kCount, Tok::kSum, Tok::kAvg, Tok::kMin, Tok::kMax, Tok::kIdent}, "expression");
    }
    expect({Tok::kFor});
    expect({Tok::kEach});
    ast.entity = column_ref();
    expect({Tok::kEnd});
    return ast;
  }

 private:
  static bool is_agg(Tok t) {
    return t == Tok::kCount || t == Tok::kSum || t == Tok::kAvg || t == Tok::kMin || t == Tok::kMax;
  }
  static bool is_cmp(Tok t) {
    return t == Tok::kEq || t == Tok::kNe || t == Tok::kLt || t == Tok::kLe || t == Tok::kGt || t == Tok::kGe;
  }
  static CmpOp cmp_op(Tok t) {
    switch (t) {
      case Tok::kNe: return CmpOp::kNe;
      case Tok::kLt: return CmpOp::kLt;
      case Tok::kLe: return CmpOp::kLe;
      case Tok::kGt: return CmpOp::kGt;
      case Tok::kGe: return CmpOp::kGe;
      default: return CmpOp::kEq;
    }
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (t.kind != Tok::kEnd) ++pos_;
    return t;
  }

  [[noreturn]] void fail(std::initializer_list<Tok> expected, std::string_view what = {}) const {
    std::string msg = "syntax error: expected ";
    if (!what.empty()) {
      msg += std::string(what) + " (";
    }
    bool first = true;
    for (Tok t : expected) {
      msg += (first ? "" : " | ") + std::string(tok_name(t));
      first = false;
    }
    if (!what.empty()) msg += ")";
    const Token& t = peek();
    msg += " but found ";
    msg += t.text.empty() ? std::string(tok_name(t.kind)) : "'" + t.text + "'";
    throw QueryError(msg, t.span.column());
  }

  const Token& expect(std::initializer_list<Tok> kinds) {
    for (Tok k : kinds)
      if (peek().kind == k) return next();
    fail(kinds);
  }

  ColumnRef column_ref() {
    const Token& t = expect({Tok::kIdent});
    ColumnRef ref;
    ref.table = t.text;
    ref.span = {t.span};
    expect({Tok::kDot});
    const Token& c = expect({Tok::kIdent});
    ref.column = c.text;
    ref.span.end = c.span.end;
    return ref;
  }

  std::int64_t integer() {
    const Token& t = expect({Tok::kNumber});
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size())
      throw QueryError("window offset must be an integer, got '" + t.text + "'", t.span.column());
    return v;
  }

  Literal literal() {
    const Token& t = expect({Tok::kNumber, Tok::kString});
    if (t.kind == Tok::kString) return t.text;
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc{} || p != t.text.data() + t.text.size() || !std::isfinite(v))
      throw QueryError("malformed number '" + t.text + "'", t.span.column());
    return v;
  }

  AggExpr aggregate() {
    AggExpr agg;
    const Token& fn = next();
    agg.span = {fn.span};
    switch (fn.kind) {
      case Tok::kSum: agg.fn = AggFn::kSum; break;
      case Tok::kAvg: agg.fn = AggFn::kAvg; break;
      case Tok::kMin: agg.fn = AggFn::kMin; break;
      case Tok::kMax: agg.fn = AggFn::kMax; break;
      default: agg.fn = AggFn::kCount;
    }
    expect({Tok::kLParen});
    const Token& table = expect({Tok::kIdent});
    agg.table = table.text;
    agg.column_span = {table.span};
    expect({Tok::kDot});
    const Token& col = expect({Tok::kIdent, Tok::kStar});
    if (col.kind == Tok::kIdent) agg.column = col.text;
    agg.column_span.end = col.span.end;
    expect({Tok::kComma});
    const Token& start_tok = peek();
    agg.start = integer();
    expect({Tok::kComma});
    agg.end = integer();
    if (agg.start >= agg.end)
      throw QueryError("window start must be smaller than window end", start_tok.span.column());
    expect({Tok::kComma});
    agg.unit = expect({Tok::kDays, Tok::kHours}).kind == Tok::kDays ? TimeUnit::kDays : TimeUnit::kHours;
    if (peek().kind == Tok::kComma) {
      next();
      expect({Tok::kWhere});
      for (;;) {
        Predicate p;
        const Token& c = expect({Tok::kIdent});
        p.column = c.text;
        p.span = {c.span};
        if (!is_cmp(peek().kind)) fail({Tok::kEq, Tok::kNe, Tok::kLt, Tok::kLe, Tok::kGt, Tok::kGe});
        p.op = cmp_op(next().kind);
        p.value = literal();
        agg.filter.push_back(std::move(p));
        if (peek().kind != Tok::kAnd) break;
        next();
      }
    }
    const Token& close = expect({Tok::kRParen});
    agg.span.end = close.span.end;
    return agg;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace parser_detail

inline QueryAst parse(std::vector<Token> tokens) { return parser_detail::Parser(std::move(tokens)).query(); }
inline QueryAst parse(std::string_view text) { return parse(tokenize(text)); }

}  // namespace relicl::pql
