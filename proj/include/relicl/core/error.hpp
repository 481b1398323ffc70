#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relicl {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: schema problems, malformed queries, bad files or flags.
/// The CLI maps this family to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

class CsvError : public InputError {
 public:
  using InputError::InputError;
};

/// Errors raised while lexing, parsing or compiling a predictive query.
/// `column` is 1-based and refers to the byte offset in the query text.
class QueryError : public InputError {
 public:
  QueryError(const std::string& what, std::size_t column)
      : InputError("column " + std::to_string(column) + ": " + what), column_(column) {}

  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace relicl
