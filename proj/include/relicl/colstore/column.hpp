#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "relicl/colstore/array.hpp"
#include "relicl/core/time.hpp"
#include "relicl/relgraph/schema.hpp"

namespace relicl {

inline constexpr std::uint32_t kNullCode = std::numeric_limits<std::uint32_t>::max();

/// String dictionary stored as an offsets array plus one byte blob.
struct Dictionary {
  Array<std::uint64_t> offsets;  // size() + 1 entries
  Array<char> bytes;

  std::size_t size() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::string_view operator[](std::uint32_t code) const noexcept {
    return {bytes.data() + offsets[code], static_cast<std::size_t>(offsets[code + 1] - offsets[code])};
  }
};

/// Builds a dictionary in first-occurrence order.
class DictionaryBuilder {
 public:
  std::uint32_t intern(std::string_view s) {
    auto it = index_.find(std::string(s));
    if (it != index_.end()) return it->second;
    auto code = static_cast<std::uint32_t>(offsets_.size() - 1);
    bytes_.insert(bytes_.end(), s.begin(), s.end());
    offsets_.push_back(bytes_.size());
    index_.emplace(std::string(s), code);
    return code;
  }
  std::size_t size() const noexcept { return offsets_.size() - 1; }
  Dictionary finish() && { return {Array<std::uint64_t>(std::move(offsets_)), Array<char>(std::move(bytes_))}; }

 private:
  std::vector<std::uint64_t> offsets_{0};
  std::vector<char> bytes_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// One typed column of a table. Exactly one of the value arrays is populated
/// depending on the semantic type. Null cells have their bit set in `nulls`;
/// codes of null cells hold kNullCode, numbers hold NaN, times hold kPosInf.
struct Column {
  std::string name;
  SemanticType stype = SemanticType::kNumerical;
  Array<double> numbers;
  Array<Timestamp> times;
  Array<std::uint32_t> codes;
  Dictionary dict;
  Array<std::uint8_t> nulls;  // bitmap, (rows + 7) / 8 bytes

  std::size_t size() const noexcept {
    switch (stype) {
      case SemanticType::kNumerical: return numbers.size();
      case SemanticType::kTimestamp: return times.size();
      default: return codes.size();
    }
  }
  bool is_null(std::size_t row) const noexcept { return (nulls[row >> 3] >> (row & 7)) & 1u; }
  bool is_dictionary() const noexcept {
    return stype == SemanticType::kIdentifier || stype == SemanticType::kCategorical || stype == SemanticType::kText;
  }
  std::string_view str(std::size_t row) const { return is_null(row) ? std::string_view{} : dict[codes[row]]; }

  /// Text rendering used by CSV export and schema re-inference.
  std::string render(std::size_t row) const {
    if (is_null(row)) return {};
    switch (stype) {
      case SemanticType::kNumerical: {
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, numbers[row]);
        return std::string(buf, p);
      }
      case SemanticType::kTimestamp: return format_timestamp(times[row]);
      default: return std::string(str(row));
    }
  }
};

class NullBitmapBuilder {
 public:
  void push(bool is_null) {
    if ((n_ & 7) == 0) bits_.push_back(0);
    if (is_null) {
      bits_.back() = static_cast<std::uint8_t>(bits_.back() | (1u << (n_ & 7)));
      ++null_count_;
    }
    ++n_;
  }
  std::size_t null_count() const noexcept { return null_count_; }
  Array<std::uint8_t> finish() && { return Array<std::uint8_t>(std::move(bits_)); }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t n_ = 0;
  std::size_t null_count_ = 0;
};

inline Column make_numerical_column(std::string name, const std::vector<double>& values) {
  Column c;
  c.name = std::move(name);
  c.stype = SemanticType::kNumerical;
  NullBitmapBuilder nb;
  for (double v : values) nb.push(std::isnan(v));
  c.numbers = Array<double>(values);
  c.nulls = std::move(nb).finish();
  return c;
}

inline Column make_timestamp_column(std::string name, const std::vector<Timestamp>& values) {
  Column c;
  c.name = std::move(name);
  c.stype = SemanticType::kTimestamp;
  NullBitmapBuilder nb;
  for (Timestamp v : values) nb.push(v == kPosInf);
  c.times = Array<Timestamp>(values);
  c.nulls = std::move(nb).finish();
  return c;
}

/// `values` entries that are nullopt become null cells.
inline Column make_dictionary_column(std::string name, SemanticType stype,
                                     const std::vector<std::optional<std::string>>& values) {
  Column c;
  c.name = std::move(name);
  c.stype = stype;
  DictionaryBuilder db;
  NullBitmapBuilder nb;
  std::vector<std::uint32_t> codes;
  codes.reserve(values.size());
  for (const auto& v : values) {
    nb.push(!v.has_value());
    codes.push_back(v ? db.intern(*v) : kNullCode);
  }
  c.codes = Array<std::uint32_t>(std::move(codes));
  c.dict = std::move(db).finish();
  c.nulls = std::move(nb).finish();
  return c;
}

/// Columnar data of one table: source columns in schema order, then derived
/// columns.
struct TableData {
  std::size_t rows = 0;
  std::vector<Column> columns;

  const Column* find(std::string_view name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }
  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) return i;
    return std::nullopt;
  }
};

}  // namespace relicl
