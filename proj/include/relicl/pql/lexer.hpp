#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "relicl/core/error.hpp"

namespace relicl::pql {

enum class Tok {
  kPredict, kFor, kEach, kWhere, kAnd,
  kCount, kSum, kAvg, kMin, kMax,
  kDays, kHours,
  kIdent, kNumber, kString,
  kDot, kComma, kLParen, kRParen, kStar,
  kEq, kNe, kLt, kLe, kGt, kGe,
  kEnd,
};

inline std::string_view tok_name(Tok t) {
  switch (t) {
    case Tok::kPredict: return "PREDICT";
    case Tok::kFor: return "FOR";
    case Tok::kEach: return "EACH";
    case Tok::kWhere: return "WHERE";
    case Tok::kAnd: return "AND";
    case Tok::kCount: return "COUNT";
    case Tok::kSum: return "SUM";
    case Tok::kAvg: return "AVG";
    case Tok::kMin: return "MIN";
    case Tok::kMax: return "MAX";
    case Tok::kDays: return "DAYS";
    case Tok::kHours: return "HOURS";
    case Tok::kIdent: return "identifier";
    case Tok::kNumber: return "number";
    case Tok::kString: return "string";
    case Tok::kDot: return "'.'";
    case Tok::kComma: return "','";
    case Tok::kLParen: return "'('";
    case Tok::kRParen: return "')'";
    case Tok::kStar: return "'*'";
    case Tok::kEq: return "'='";
    case Tok::kNe: return "'!='";
    case Tok::kLt: return "'<'";
    case Tok::kLe: return "'<='";
    case Tok::kGt: return "'>'";
    case Tok::kGe: return "'>='";
    case Tok::kEnd: return "end of query";
  }
  return "?";
}

/// Half-open byte range [begin, end) of the query text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t column() const noexcept { return begin + 1; }
};

struct Token {
  Tok kind = Tok::kEnd;
  std::string text;  // identifier name, number spelling or unescaped string
  Span span;
};

namespace lexer_detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
inline bool digit(char c) { return c >= '0' && c <= '9'; }

inline Tok keyword(std::string_view word) {
  std::string up(word);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  static constexpr Tok kKeywords[] = {Tok::kPredict, Tok::kFor,  Tok::kEach, Tok::kWhere, Tok::kAnd,  Tok::kCount,
                                      Tok::kSum,     Tok::kAvg,  Tok::kMin,  Tok::kMax,   Tok::kDays, Tok::kHours};
  for (Tok k : kKeywords)
    if (tok_name(k) == up) return k;
  return Tok::kIdent;
}

}  // namespace lexer_detail

inline bool is_keyword(std::string_view word) { return lexer_detail::keyword(word) != Tok::kIdent; }

/// Splits query text into tokens. Keywords are case-insensitive; comparison
/// operators may also be written with the Unicode signs ≤ ≥ ≠. The stream
/// always ends with a kEnd token.
inline std::vector<Token> tokenize(std::string_view text) {
  using namespace lexer_detail;
  std::vector<Token> out;
  std::size_t i = 0;
  auto push = [&](Tok k, std::size_t begin, std::size_t end, std::string t = {}) {
    out.push_back({k, std::move(t), {begin, end}});
    i = end;
  };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    if (ident_start(c)) {
      std::size_t e = i;
      while (e < text.size() && ident_char(text[e])) ++e;
      auto word = text.substr(b, e - b);
      push(keyword(word), b, e, std::string(word));
    } else if (digit(c) || ((c == '-' || c == '.') && i + 1 < text.size() && (digit(text[i + 1]) || text[i + 1] == '.'))) {
      std::size_t e = i + 1;
      while (e < text.size() && (digit(text[e]) || text[e] == '.')) ++e;
      if (e < text.size() && (text[e] == 'e' || text[e] == 'E')) {
        std::size_t f = e + 1;
        if (f < text.size() && (text[f] == '+' || text[f] == '-')) ++f;
        if (f < text.size() && digit(text[f])) {
          e = f;
          while (e < text.size() && digit(text[e])) ++e;
        }
      }
      push(Tok::kNumber, b, e, std::string(text.substr(b, e - b)));
    } else if (c == '\'') {
      std::string value;
      std::size_t e = i + 1;
      for (;;) {
        if (e >= text.size()) throw QueryError("unterminated string literal", b + 1);
        if (text[e] == '\'') {
          if (e + 1 < text.size() && text[e + 1] == '\'') {
            value += '\'';
            e += 2;
            continue;
          }
          ++e;
          break;
        }
        value += text[e++];
      }
      push(Tok::kString, b, e, std::move(value));
    } else if (c == '.') {
      push(Tok::kDot, b, b + 1);
    } else if (c == ',') {
      push(Tok::kComma, b, b + 1);
    } else if (c == '(') {
      push(Tok::kLParen, b, b + 1);
    } else if (c == ')') {
      push(Tok::kRParen, b, b + 1);
    } else if (c == '*') {
      push(Tok::kStar, b, b + 1);
    } else if (c == '=') {
      push(Tok::kEq, b, b + (i + 1 < text.size() && text[i + 1] == '=' ? 2 : 1));
    } else if (c == '!' && i + 1 < text.size() && text[i + 1] == '=') {
      push(Tok::kNe, b, b + 2);
    } else if (c == '<') {
      if (i + 1 < text.size() && text[i + 1] == '=') push(Tok::kLe, b, b + 2);
      else if (i + 1 < text.size() && text[i + 1] == '>') push(Tok::kNe, b, b + 2);
      else push(Tok::kLt, b, b + 1);
    } else if (c == '>') {
      if (i + 1 < text.size() && text[i + 1] == '=') push(Tok::kGe, b, b + 2);
      else push(Tok::kGt, b, b + 1);
    } else if (text.substr(i, 3) == "≤") {
      push(Tok::kLe, b, b + 3);
    } else if (text.substr(i, 3) == "≥") {
      push(Tok::kGe, b, b + 3);
    } else if (text.substr(i, 3) == "≠") {
      push(Tok::kNe, b, b + 3);
    } else {
      throw QueryError(std::string("illegal character '") + c + "'", b + 1);
    }
  }
  out.push_back({Tok::kEnd, {}, {text.size(), text.size()}});
  return out;
}

}  // namespace relicl::pql
