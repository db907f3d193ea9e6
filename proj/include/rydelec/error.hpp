#pragma once

#include <stdexcept>
#include <string>

namespace rydelec {

/// Failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind { usage, parse, validation, solver, analysis };

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Malformed input text. `line` is 1-based, 0 when unknown; `field` names the offending key or column.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::string field = {})
      : Error(ErrorKind::parse, what), line_(line), field_(std::move(field)) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what) : Error(ErrorKind::solver, what) {}
};

class AnalysisError : public Error {
 public:
  explicit AnalysisError(const std::string& what) : Error(ErrorKind::analysis, what) {}
};

}  // namespace rydelec
