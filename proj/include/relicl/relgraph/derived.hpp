#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "relicl/core/error.hpp"
#include "relicl/relgraph/schema.hpp"

namespace relicl {

/// Arithmetic over numerical sibling columns: + - * / with parentheses,
/// unary minus and numeric literals. Nulls (NaN) propagate; division by
/// zero yields null.
class DerivedExpr {
 public:
  struct Node {
    enum class Kind { kLiteral, kColumn, kNeg, kAdd, kSub, kMul, kDiv } kind = Kind::kLiteral;
    double literal = 0.0;
    std::string column;
    std::unique_ptr<Node> lhs, rhs;
  };

  static DerivedExpr parse(std::string_view text) {
    Parser p{text};
    DerivedExpr e;
    e.root_ = p.expr();
    p.skip();
    if (p.pos != text.size())
      throw SchemaError("derived expression '" + std::string(text) + "': unexpected '" + std::string(1, text[p.pos]) +
                        "' at offset " + std::to_string(p.pos));
    return e;
  }

  /// Column names referenced by the expression, in first-use order.
  std::vector<std::string> columns() const {
    std::vector<std::string> out;
    collect(*root_, out);
    return out;
  }

  /// `lookup` maps a column name to that column's value in the current row.
  double eval(const std::function<double(const std::string&)>& lookup) const { return eval(*root_, lookup); }

 private:
  struct Parser {
    std::string_view s;
    std::size_t pos = 0;

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    [[noreturn]] void fail(const std::string& what) {
      throw SchemaError("derived expression '" + std::string(s) + "': " + what + " at offset " + std::to_string(pos));
    }
    std::unique_ptr<Node> expr() {
      auto lhs = term();
      for (;;) {
        skip();
        if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
          auto n = std::make_unique<Node>();
          n->kind = s[pos] == '+' ? Node::Kind::kAdd : Node::Kind::kSub;
          ++pos;
          n->lhs = std::move(lhs);
          n->rhs = term();
          lhs = std::move(n);
        } else {
          return lhs;
        }
      }
    }
    std::unique_ptr<Node> term() {
      auto lhs = factor();
      for (;;) {
        skip();
        if (pos < s.size() && (s[pos] == '*' || s[pos] == '/')) {
          auto n = std::make_unique<Node>();
          n->kind = s[pos] == '*' ? Node::Kind::kMul : Node::Kind::kDiv;
          ++pos;
          n->lhs = std::move(lhs);
          n->rhs = factor();
          lhs = std::move(n);
        } else {
          return lhs;
        }
      }
    }
    std::unique_ptr<Node> factor() {
      skip();
      if (pos >= s.size()) fail("unexpected end of expression");
      char c = s[pos];
      if (c == '(') {
        ++pos;
        auto inner = expr();
        skip();
        if (pos >= s.size() || s[pos] != ')') fail("expected ')'");
        ++pos;
        return inner;
      }
      if (c == '-') {
        ++pos;
        auto n = std::make_unique<Node>();
        n->kind = Node::Kind::kNeg;
        n->lhs = factor();
        return n;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        auto n = std::make_unique<Node>();
        auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), n->literal);
        if (ec != std::errc{}) fail("bad number");
        pos = static_cast<std::size_t>(ptr - s.data());
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        auto n = std::make_unique<Node>();
        n->kind = Node::Kind::kColumn;
        n->column = std::string(s.substr(start, pos - start));
        return n;
      }
      fail(std::string("unexpected '") + c + "'");
    }
  };

  static void collect(const Node& n, std::vector<std::string>& out) {
    if (n.kind == Node::Kind::kColumn) {
      if (std::find(out.begin(), out.end(), n.column) == out.end()) out.push_back(n.column);
      return;
    }
    if (n.lhs) collect(*n.lhs, out);
    if (n.rhs) collect(*n.rhs, out);
  }

  static double eval(const Node& n, const std::function<double(const std::string&)>& lookup) {
    switch (n.kind) {
      case Node::Kind::kLiteral: return n.literal;
      case Node::Kind::kColumn: return lookup(n.column);
      case Node::Kind::kNeg: return -eval(*n.lhs, lookup);
      case Node::Kind::kAdd: return eval(*n.lhs, lookup) + eval(*n.rhs, lookup);
      case Node::Kind::kSub: return eval(*n.lhs, lookup) - eval(*n.rhs, lookup);
      case Node::Kind::kMul: return eval(*n.lhs, lookup) * eval(*n.rhs, lookup);
      case Node::Kind::kDiv: {
        double d = eval(*n.rhs, lookup);
        if (d == 0.0) return std::numeric_limits<double>::quiet_NaN();
        return eval(*n.lhs, lookup) / d;
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  }

  std::unique_ptr<Node> root_;
};

/// numerical (op) numerical -> numerical; anything else is a type mismatch.
/// Derived columns may reference earlier derived columns of the same table.
inline void validate_derived_expression(const TableMeta& table, const DerivedColumn& column) {
  auto expr = DerivedExpr::parse(column.expr);
  for (const auto& ref : expr.columns()) {
    if (ref == column.name)
      throw SchemaError("derived column '" + table.name + "." + column.name + "' references itself");
    if (const auto* c = table.find(ref)) {
      if (c->stype != SemanticType::kNumerical)
        throw SchemaError("type mismatch in derived column '" + table.name + "." + column.name + "': column '" + ref +
                          "' is " + std::string(to_string(c->stype)) + ", expected numerical");
      continue;
    }
    bool earlier = false;
    for (const auto& d : table.derived_columns) {
      if (d.name == column.name) break;
      if (d.name == ref) earlier = true;
    }
    if (!earlier)
      throw SchemaError("derived column '" + table.name + "." + column.name + "' references unknown column '" + ref +
                        "'");
  }
}

}  // namespace relicl
