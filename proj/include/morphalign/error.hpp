#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace morphalign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input data: malformed files, schema violations, empty inputs.
class DataError : public Error {
 public:
  using Error::Error;
};

// Bad configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Schema violation in a JSONL record (1-based record number).
class RecordError : public DataError {
 public:
  RecordError(std::size_t record, std::string field, const std::string& what)
      : DataError("record " + std::to_string(record) + ": field '" + field + "': " + what),
        record_(record),
        field_(std::move(field)) {}
  std::size_t record() const noexcept { return record_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t record_;
  std::string field_;
};

}  // namespace morphalign
