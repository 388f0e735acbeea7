#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tinydet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (architecture config, COCO annotations, blobs).
/// `line`/`column` are 1-based; zero means the position is unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// A spec, shape or argument violates a structural precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A named resource (builtin architecture, file) does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace tinydet
