#pragma once

#include <string>
#include <vector>

namespace relicl {

/// Untyped table as read from a source file: one string vector per column.
/// Empty strings are missing values.
struct RawTable {
  std::string name;
  std::vector<std::string> column_names;
  std::vector<std::vector<std::string>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  const std::vector<std::string>* find(const std::string& column) const {
    for (std::size_t i = 0; i < column_names.size(); ++i)
      if (column_names[i] == column) return &columns[i];
    return nullptr;
  }
};

}  // namespace relicl
