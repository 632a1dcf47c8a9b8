#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dyncode {

// Root of every error the library throws. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  // `line` is the input line, 0 when the record did not come from a file.
  ValidationError(std::string field, const std::string& what, std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : std::string()) + "invalid field '" + field +
              "': " + what),
        field_(std::move(field)),
        detail_(what),
        line_(line) {}
  const std::string& field() const noexcept { return field_; }
  const std::string& detail() const noexcept { return detail_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  std::string detail_;
  std::size_t line_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

// Raised when an upstream invariant breaks (e.g. a phase holds two versions
// of the same instruction).
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dyncode
