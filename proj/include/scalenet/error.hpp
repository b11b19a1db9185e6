#pragma once

#include <stdexcept>
#include <string>

namespace scalenet {

// Base of every error thrown by the library. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's mathematical domain (scale <= 0, even L, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed image file. `field()` names the offending header field or "payload".
class FormatError : public Error {
 public:
  FormatError(std::string field, const std::string& what)
      : Error("format error in " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Malformed text input (CSV). `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class LabelingError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised when training produces a non-finite loss.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace scalenet
