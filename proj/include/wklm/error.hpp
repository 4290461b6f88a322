#pragma once

#include <stdexcept>
#include <string>

namespace wklm {

// Malformed or inconsistent input data. Maps to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parse failure tied to a specific line of an input file.
class ParseError : public DataError {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : DataError(path + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnknownEntityError : public DataError {
 public:
  explicit UnknownEntityError(const std::string& id)
      : DataError("unknown entity: " + id), id_(id) {}

  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

// Non-finite loss or gradient. Maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The entity has no type, so a mention of it cannot be replaced.
class NotReplaceableError : public DataError {
 public:
  explicit NotReplaceableError(const std::string& id)
      : DataError("entity has no type: " + id) {}
};

}  // namespace wklm
