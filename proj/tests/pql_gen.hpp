#pragma once

#include <iterator>
#include <string>

#include "relicl/core/random.hpp"
#include "relicl/pql/ast.hpp"

namespace relicl::testing {

using pql::AggExpr;
using pql::AggFn;
using pql::CmpOp;
using pql::ColumnRef;
using pql::Comparison;
using pql::Literal;
using pql::QueryAst;
using pql::TimeUnit;

inline std::string random_ident(Rng& rng) {
  static const char* parts[] = {"a", "orders", "x_1", "Users", "_t", "price", "zz", "counts", "for_x"};
  std::string s = parts[rng.below(std::size(parts))];
  if (rng.bernoulli(0.5)) s += std::to_string(rng.below(100));
  return s;
}

inline Literal random_literal(Rng& rng) {
  if (rng.bernoulli(0.5)) {
    static const char* words[] = {"", "x", "it's", "a b", "ÄÖ"};
    return std::string(words[rng.below(std::size(words))]);
  }
  switch (rng.below(3)) {
    case 0: return static_cast<double>(static_cast<int>(rng.below(200)) - 100);
    case 1: return rng.normal() * 1e6;
    default: return rng.uniform() * 1e-8;
  }
}

inline QueryAst random_ast(Rng& rng) {
  QueryAst ast;
  ast.entity = {random_ident(rng), random_ident(rng), {}};
  if (rng.bernoulli(0.3)) {
    ast.target = ColumnRef{random_ident(rng), random_ident(rng), {}};
    return ast;
  }
  AggExpr agg;
  agg.fn = static_cast<AggFn>(rng.below(5));
  agg.table = random_ident(rng);
  if (rng.bernoulli(0.6)) agg.column = random_ident(rng);
  agg.start = static_cast<std::int64_t>(rng.below(100)) - 50;
  agg.end = agg.start + 1 + static_cast<std::int64_t>(rng.below(100));
  agg.unit = rng.bernoulli(0.5) ? TimeUnit::kDays : TimeUnit::kHours;
  for (std::size_t i = rng.below(4); i > 0; --i)
    agg.filter.push_back({random_ident(rng), static_cast<CmpOp>(rng.below(6)), random_literal(rng), {}});
  ast.target = agg;
  if (rng.bernoulli(0.5)) ast.comparison = Comparison{static_cast<CmpOp>(rng.below(6)), random_literal(rng), {}};
  return ast;
}

}  // namespace relicl::testing
