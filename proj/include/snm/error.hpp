#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snm {

/// Base class for every error the toolkit throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad flags or inconsistent command-line arguments (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, malformed or inconsistent input data (exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed text input; the message carries the line number when known.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : DataError(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace snm
